//! Coupled simulation of two transposition lists fed by one request
//! process.
//!
//! Fix a cutoff `threshold = i` splitting items into low (`<= i`) and
//! high (`> i`). The original list applies every request. The
//! modified list sees a doctored stream: requests for low items are
//! thinned down to a common rate `pi_i`, requests for high items are
//! topped up to a common rate `pi_{i+1}`, and an event is applied
//! only when the swap would move an item across the low/high boundary
//! (the gate [`phi`]). After each original-list swap the modified
//! list is realigned so that both lists keep identical relative
//! orders within each class ([`reorder`]).
//!
//! Two facts drive everything downstream, and both are checked on the
//! fly: every low item sits in the modified list no closer to the
//! front than in the original list, and the modified list's low
//! positions evolve exactly as the exclusion process of
//! [`crate::exclusion`] with `beta = pi_{i+1}/pi_i`. A violation of
//! the first is reported as [`DominationReport`] with the trailing
//! event log attached.
//!
//! The modified stream's top-up component formally attaches a Poisson
//! stream to every high item, which is an infinite family. The
//! simulation never materializes it: a top-up event only has an
//! effect when its item is the immediate successor of a low item, at
//! most `i` items qualify at any instant, and the engine thins the
//! union down to exactly those consequential arrivals inside a
//! constant-rate uniformized tick loop. [`build_event_streams`]
//! materializes honest finite stream prefixes for diagnostics and
//! tests instead.

use std::collections::VecDeque;

use rand::Rng;
use thiserror::Error;

use crate::distributions::RequestDistribution;
use crate::error::{Error as CoreError, Result};
use crate::exclusion;
use crate::list::ListState;

/// Which list(s) an event is delivered to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    Original,
    Modified,
    Both,
}

/// One arrival in a materialized event stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StreamEvent {
    pub time: f64,
    pub item: u64,
    pub target: Target,
}

/// A merged, time-ordered stream of arrivals with strictly
/// increasing timestamps.
#[derive(Debug, Clone)]
pub struct EventStream {
    events: Vec<StreamEvent>,
}

impl EventStream {
    /// Sorts by time and nudges exact ties apart by one ulp so
    /// downstream consumers can rely on strict ordering.
    pub fn new(mut events: Vec<StreamEvent>) -> Result<Self> {
        if events
            .iter()
            .any(|e| !(e.time.is_finite() && e.time >= 0.0) || e.item < 1)
        {
            return Err(CoreError::InvalidParameter(
                "stream events need finite non-negative times and items >= 1".into(),
            ));
        }
        events.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.item.cmp(&b.item)));
        for k in 1..events.len() {
            if events[k].time <= events[k - 1].time {
                events[k].time = events[k - 1].time.next_up();
            }
        }
        Ok(Self { events })
    }

    pub fn events(&self) -> &[StreamEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

/// Keep each time independently with probability `keep`; the result
/// of thinning a Poisson stream is again Poisson at the scaled rate.
pub fn thin<R: Rng + ?Sized>(times: &[f64], keep: f64, rng: &mut R) -> Result<Vec<f64>> {
    if !(keep.is_finite() && (0.0..=1.0).contains(&keep)) {
        return Err(CoreError::InvalidParameter(format!(
            "keep probability {keep} must lie in [0, 1]"
        )));
    }
    Ok(times
        .iter()
        .copied()
        .filter(|_| rng.random::<f64>() < keep)
        .collect())
}

fn poisson_times<R: Rng + ?Sized>(rate: f64, horizon: f64, rng: &mut R) -> Vec<f64> {
    let mut out = Vec::new();
    if rate <= 0.0 {
        return out;
    }
    let mut t = 0.0;
    loop {
        let u: f64 = rng.random();
        t += -(1.0 - u).ln() / rate;
        if t >= horizon {
            return out;
        }
        out.push(t);
    }
}

/// Materialize the coupled arrival streams for items `1..=max_item`
/// over `[0, horizon)`: for low items, rate-`pi_j` arrivals marked
/// [`Target::Both`] with probability `pi_i/pi_j` (else
/// [`Target::Original`]); for high items, the natural stream marked
/// [`Target::Both`] plus a top-up stream of rate `pi_{i+1} - pi_j`
/// marked [`Target::Modified`].
///
/// `max_item` truncates the infinite item family; events for items
/// beyond it are not generated.
pub fn build_event_streams<R: Rng + ?Sized>(
    dist: &RequestDistribution,
    threshold: u64,
    max_item: u64,
    horizon: f64,
    rng: &mut R,
) -> Result<EventStream> {
    if threshold < 1 || max_item < threshold {
        return Err(CoreError::InvalidParameter(format!(
            "need 1 <= threshold <= max_item, got {threshold} and {max_item}"
        )));
    }
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(CoreError::InvalidParameter(format!(
            "horizon {horizon} must be positive and finite"
        )));
    }
    let pi_top = dist.pmf(threshold);
    if pi_top <= 0.0 {
        return Err(CoreError::InvalidParameter(format!(
            "item {threshold} has zero request probability"
        )));
    }
    let pi_next = dist.pmf(threshold + 1);
    let mut events = Vec::new();
    for item in 1..=max_item {
        let rate = dist.pmf(item);
        for time in poisson_times(rate, horizon, rng) {
            let target = if item <= threshold {
                if rng.random::<f64>() * rate < pi_top {
                    Target::Both
                } else {
                    Target::Original
                }
            } else {
                Target::Both
            };
            events.push(StreamEvent { time, item, target });
        }
        if item > threshold {
            for time in poisson_times(pi_next - rate, horizon, rng) {
                events.push(StreamEvent { time, item, target: Target::Modified });
            }
        }
    }
    EventStream::new(events)
}

/// The modified list's gate: a request for `item` is applied only
/// when the resulting swap would cross the low/high boundary, i.e.
/// the immediate predecessor is on the other side of `threshold`.
/// Always false at the front.
pub fn phi(modified: &ListState, item: u64, threshold: u64) -> bool {
    let pos = modified.position_of(item);
    if pos == 1 {
        return false;
    }
    let pred = modified.item_at(pos - 1);
    (item <= threshold) != (pred <= threshold)
}

/// Realign `modified` against `reference`: keep the set of positions
/// its low items occupy (likewise high items), but rewrite the items
/// so that within each class the relative order matches `reference`.
///
/// Positions up to the deepest low-item position of either list are
/// rewritten densely. Beyond that both lists hold high items only, so
/// the class matching degenerates to position-by-position adoption of
/// the reference arrangement, which only needs visiting displaced
/// positions. Far-away displacements therefore stay O(displaced),
/// never O(position).
pub fn reorder(modified: &mut ListState, reference: &ListState, threshold: u64) {
    let mut boundary = threshold;
    for k in 1..=threshold {
        boundary = boundary
            .max(modified.position_of(k))
            .max(reference.position_of(k));
    }

    // Positions beyond the boundary that either list displaces; all
    // other far positions already agree (identity in both).
    let mut far: Vec<u64> = modified
        .displaced()
        .iter()
        .chain(reference.displaced().iter())
        .map(|&(_, pos)| pos)
        .filter(|&pos| pos > boundary)
        .collect();
    far.sort_unstable();
    far.dedup();

    let mod_order = modified.order_prefix(boundary);
    let ref_order = reference.order_prefix(boundary);
    let mut low_items = Vec::new();
    let mut high_items = Vec::new();
    for &item in &ref_order {
        if item <= threshold {
            low_items.push(item);
        } else {
            high_items.push(item);
        }
    }
    let mut low_at = 0;
    let mut high_at = 0;
    for (idx, &item) in mod_order.iter().enumerate() {
        let pos = idx as u64 + 1;
        if item <= threshold {
            modified.set_pair(pos, low_items[low_at]);
            low_at += 1;
        } else {
            modified.set_pair(pos, high_items[high_at]);
            high_at += 1;
        }
    }

    for pos in far {
        modified.set_pair(pos, reference.item_at(pos));
    }
    debug_assert!(modified.check_consistent().is_ok());
}

/// Upper bound on `Pr[max position among items 1..=threshold > x]`
/// for the original list, in the long run: the overhang law of the
/// comparison exclusion process, `Pr[kappa + threshold > x]` at
/// `beta = pi_{threshold+1}/pi_threshold`.
///
/// Requires the request law to strictly decrease across the
/// threshold; at a tie the comparison process is not positive
/// recurrent and no bound is available.
pub fn occupancy_tail_bound(dist: &RequestDistribution, threshold: u64, x: u64) -> Result<f64> {
    if threshold < 1 {
        return Err(CoreError::InvalidParameter("threshold must be >= 1".into()));
    }
    let beta = dist.ratio(threshold)?;
    if beta >= 1.0 {
        return Err(CoreError::InvalidParameter(format!(
            "request law does not strictly decrease at {threshold} (ratio {beta})"
        )));
    }
    if x < threshold {
        return Ok(1.0);
    }
    if beta == 0.0 {
        return Ok(0.0);
    }
    exclusion::kappa_tail(threshold as usize, beta, x - threshold + 1)
}

/// One event as seen by the audit log.
#[derive(Debug, Clone, PartialEq)]
pub struct LoggedEvent {
    pub tick: u64,
    pub time: f64,
    pub item: u64,
    pub applied_to_original: bool,
    pub applied_to_modified: bool,
    /// Gate value for the requested item, evaluated before the event.
    pub phi: bool,
    /// Deepest original-list position among low items, after the event.
    pub max_x: u64,
    /// Deepest modified-list position among low items, after the event.
    pub z_top: u64,
}

/// Evidence of a broken position ordering between the two lists.
#[derive(Debug, Clone, Error)]
#[error(
    "domination violated at tick {tick} (t={time:.6}): item {item} at position \
     {original_position} in the original list, {modified_position} in the modified"
)]
pub struct DominationReport {
    pub tick: u64,
    pub time: f64,
    pub item: u64,
    pub original_position: u64,
    pub modified_position: u64,
    /// Up to the last 64 non-ghost events before the violation.
    pub recent: Vec<LoggedEvent>,
}

impl From<DominationReport> for CoreError {
    fn from(report: DominationReport) -> Self {
        CoreError::Domination(Box::new(report))
    }
}

/// Per-tick observables returned by [`CoupledProcess::step`].
/// `max_x`, `z_top`, and the free counts describe the state *before*
/// the tick's event; sampling just ahead of Poisson arrivals is
/// unbiased for time averages.
#[derive(Debug, Clone, PartialEq)]
pub struct TickSample {
    pub time: f64,
    pub max_x: u64,
    pub z_top: u64,
    /// Low items whose modified-list predecessor is high.
    pub free_left: u64,
    /// Low items whose modified-list successor is high.
    pub free_right: u64,
    /// The event applied this tick, if it was not a ghost tick.
    pub event: Option<LoggedEvent>,
}

const RING_CAPACITY: usize = 64;

/// The two coupled lists, advanced one uniformized tick at a time.
///
/// Each tick is an exponential holding time at the constant rate
/// `1 + threshold * pi_{threshold+1}` (total request rate plus the
/// largest possible consequential top-up rate), after which the tick
/// is classified as a request arrival, a consequential top-up
/// arrival, or a ghost.
#[derive(Debug, Clone)]
pub struct CoupledProcess {
    dist: RequestDistribution,
    threshold: u64,
    pi_top: f64,
    pi_next: f64,
    lambda_max: f64,
    original: ListState,
    modified: ListState,
    ticks: u64,
    time: f64,
    ring: VecDeque<LoggedEvent>,
}

impl CoupledProcess {
    pub fn new(dist: &RequestDistribution, threshold: u64) -> Result<Self> {
        if threshold < 1 {
            return Err(CoreError::InvalidParameter("threshold must be >= 1".into()));
        }
        if let Some(n) = dist.support() {
            if threshold >= n {
                return Err(CoreError::InvalidParameter(format!(
                    "threshold {threshold} needs items beyond it with positive \
                     probability; support ends at {n}"
                )));
            }
        }
        let pi_top = dist.pmf(threshold);
        let pi_next = dist.pmf(threshold + 1);
        if pi_top <= 0.0 || pi_next <= 0.0 {
            return Err(CoreError::InvalidParameter(format!(
                "items {threshold} and {} must have positive probability",
                threshold + 1
            )));
        }
        Ok(Self {
            dist: dist.clone(),
            threshold,
            pi_top,
            pi_next,
            lambda_max: 1.0 + threshold as f64 * pi_next,
            original: ListState::new(),
            modified: ListState::new(),
            ticks: 0,
            time: 0.0,
            ring: VecDeque::with_capacity(RING_CAPACITY),
        })
    }

    pub fn threshold(&self) -> u64 {
        self.threshold
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    pub fn ticks(&self) -> u64 {
        self.ticks
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn original(&self) -> &ListState {
        &self.original
    }

    pub fn modified(&self) -> &ListState {
        &self.modified
    }

    pub fn recent_events(&self) -> impl Iterator<Item = &LoggedEvent> {
        self.ring.iter()
    }

    /// Advance one tick. Returns the pre-event observables and the
    /// applied event; fails with the full [`DominationReport`] if the
    /// post-event state puts any low item deeper in the original list
    /// than in the modified one.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<TickSample> {
        let thr = self.threshold;

        // Pre-event scan: original depth, modified depth, and the
        // consequential top-up targets (high successors of low items,
        // each weighted by its missing rate).
        let mut max_x = 0u64;
        let mut z_top = 0u64;
        let mut free_left = 0u64;
        let mut topups: Vec<(u64, f64)> = Vec::new();
        for k in 1..=thr {
            max_x = max_x.max(self.original.position_of(k));
            let pos = self.modified.position_of(k);
            z_top = z_top.max(pos);
            if pos > 1 && self.modified.item_at(pos - 1) > thr {
                free_left += 1;
            }
            let succ = self.modified.item_at(pos + 1);
            if succ > thr {
                topups.push((succ, self.pi_next - self.dist.pmf(succ)));
            }
        }
        let free_right = topups.len() as u64;

        self.ticks += 1;
        let u_time: f64 = rng.random();
        self.time += -(1.0 - u_time).ln() / self.lambda_max;
        let u_class: f64 = rng.random();
        let scaled = u_class * self.lambda_max;

        let mut event = None;
        if scaled < 1.0 {
            // Request arrival, common to both streams.
            let item = self.dist.sample(rng);
            let gate = phi(&self.modified, item, thr);
            let member = if item <= thr {
                // Thinning mark: keep with probability pi_top/pi_item.
                let coin: f64 = rng.random();
                coin * self.dist.pmf(item) < self.pi_top
            } else {
                true
            };
            let pred_original = self.original.transpose(item);
            let applied = member && gate;
            if applied {
                self.modified
                    .transpose(item)
                    .expect("gated events have a predecessor");
            }
            // Realignment: an original-list swap inside one class
            // changes that class's relative order, which the modified
            // list must mirror. Cross-class swaps (including every
            // gated modified-list swap) leave both class orders
            // untouched.
            if let Some(pred) = pred_original {
                if (item <= thr) == (pred <= thr) {
                    self.modified.swap_items(item, pred);
                }
            }
            event = Some(LoggedEvent {
                tick: self.ticks,
                time: self.time,
                item,
                applied_to_original: true,
                applied_to_modified: applied,
                phi: gate,
                max_x: 0,
                z_top: 0,
            });
        } else {
            // Consequential top-up arrival, or a ghost tick.
            let mut budget = scaled - 1.0;
            let mut chosen = None;
            for &(item, weight) in &topups {
                if budget < weight {
                    chosen = Some(item);
                    break;
                }
                budget -= weight;
            }
            if let Some(item) = chosen {
                self.modified
                    .transpose(item)
                    .expect("top-up targets have a predecessor");
                event = Some(LoggedEvent {
                    tick: self.ticks,
                    time: self.time,
                    item,
                    applied_to_original: false,
                    applied_to_modified: true,
                    phi: true,
                    max_x: 0,
                    z_top: 0,
                });
            }
        }

        // Post-event audit: every low item must sit at least as deep
        // in the modified list as in the original.
        let mut post_max_x = 0u64;
        let mut post_z_top = 0u64;
        for k in 1..=thr {
            let x_orig = self.original.position_of(k);
            let x_mod = self.modified.position_of(k);
            post_max_x = post_max_x.max(x_orig);
            post_z_top = post_z_top.max(x_mod);
            if x_orig > x_mod {
                return Err(DominationReport {
                    tick: self.ticks,
                    time: self.time,
                    item: k,
                    original_position: x_orig,
                    modified_position: x_mod,
                    recent: self.ring.iter().cloned().collect(),
                }
                .into());
            }
        }
        if let Some(ev) = event.as_mut() {
            ev.max_x = post_max_x;
            ev.z_top = post_z_top;
            if self.ring.len() == RING_CAPACITY {
                self.ring.pop_front();
            }
            self.ring.push_back(ev.clone());
        }

        Ok(TickSample {
            time: self.time,
            max_x,
            z_top,
            free_left,
            free_right,
            event,
        })
    }

    #[cfg(test)]
    fn corrupt_original_for_test(&mut self, item: u64, push_back: u64) {
        for _ in 0..push_back {
            let pos = self.original.position_of(item);
            let succ = self.original.item_at(pos + 1);
            self.original.swap_items(item, succ);
        }
    }
}

/// Options for [`run_coupled`].
#[derive(Debug, Clone)]
pub struct CoupleOptions {
    /// Fraction of ticks discarded before recording, in `[0, 1)`.
    pub burn_in: f64,
    /// Collect the full event log (ghost ticks excluded).
    pub log_events: bool,
}

impl Default for CoupleOptions {
    fn default() -> Self {
        Self { burn_in: 0.5, log_events: false }
    }
}

/// Aggregated outcome of a coupled run.
#[derive(Debug, Clone)]
pub struct CoupledRun {
    pub threshold: u64,
    pub ticks: u64,
    pub burn_in_ticks: u64,
    /// Ticks that contributed to the histograms and counters below.
    pub recorded_ticks: u64,
    pub lambda_max: f64,
    /// `max_x_hist[p]` = recorded ticks whose pre-event original-list
    /// low-item depth was exactly `p`.
    pub max_x_hist: Vec<u64>,
    /// Same for the modified list's low-item depth.
    pub z_hist: Vec<u64>,
    /// Modified-list boundary crossings among recorded ticks.
    pub up_moves: u64,
    pub down_moves: u64,
    /// Sums over recorded ticks of the per-tick free counts.
    pub free_left_ticks: u64,
    pub free_right_ticks: u64,
    pub events: Option<Vec<LoggedEvent>>,
    pub final_original: ListState,
    pub final_modified: ListState,
}

impl CoupledRun {
    /// Empirical `Pr[max low-item position in the original list > x]`.
    pub fn max_x_tail(&self, x: u64) -> f64 {
        tail_of_hist(&self.max_x_hist, x, self.recorded_ticks)
    }

    /// Empirical `Pr[max low-item position in the modified list > x]`.
    pub fn z_tail(&self, x: u64) -> f64 {
        tail_of_hist(&self.z_hist, x, self.recorded_ticks)
    }

    /// Estimated per-item rate of gated low-item (leftward) moves;
    /// converges to `pi_threshold`.
    pub fn left_rate_estimate(&self) -> f64 {
        self.down_moves as f64 * self.lambda_max / self.free_left_ticks as f64
    }

    /// Estimated per-item rate of boundary-crossing high-item
    /// (rightward) moves; converges to `pi_{threshold+1}`.
    pub fn right_rate_estimate(&self) -> f64 {
        self.up_moves as f64 * self.lambda_max / self.free_right_ticks as f64
    }
}

fn tail_of_hist(hist: &[u64], x: u64, total: u64) -> f64 {
    let from = (x + 1).min(hist.len() as u64) as usize;
    let count: u64 = hist[from..].iter().sum();
    count as f64 / total as f64
}

fn bump(hist: &mut Vec<u64>, value: u64) {
    let idx = value as usize;
    if idx >= hist.len() {
        hist.resize(idx + 1, 0);
    }
    hist[idx] += 1;
}

/// Drive a [`CoupledProcess`] for `ticks` ticks, recording pre-event
/// statistics after the burn-in window.
pub fn run_coupled<R: Rng + ?Sized>(
    dist: &RequestDistribution,
    threshold: u64,
    ticks: u64,
    rng: &mut R,
    opts: &CoupleOptions,
) -> Result<CoupledRun> {
    if !(opts.burn_in.is_finite() && (0.0..1.0).contains(&opts.burn_in)) {
        return Err(CoreError::InvalidParameter(format!(
            "burn-in fraction {} must lie in [0, 1)",
            opts.burn_in
        )));
    }
    if ticks == 0 {
        return Err(CoreError::InvalidParameter("need at least one tick".into()));
    }
    let mut process = CoupledProcess::new(dist, threshold)?;
    let burn_in_ticks = (ticks as f64 * opts.burn_in) as u64;
    let mut run = CoupledRun {
        threshold,
        ticks,
        burn_in_ticks,
        recorded_ticks: 0,
        lambda_max: process.lambda_max(),
        max_x_hist: Vec::new(),
        z_hist: Vec::new(),
        up_moves: 0,
        down_moves: 0,
        free_left_ticks: 0,
        free_right_ticks: 0,
        events: opts.log_events.then(Vec::new),
        final_original: ListState::new(),
        final_modified: ListState::new(),
    };
    for tick in 0..ticks {
        let sample = process.step(rng)?;
        if tick >= burn_in_ticks {
            run.recorded_ticks += 1;
            bump(&mut run.max_x_hist, sample.max_x);
            bump(&mut run.z_hist, sample.z_top);
            run.free_left_ticks += sample.free_left;
            run.free_right_ticks += sample.free_right;
            if let Some(ev) = &sample.event {
                if ev.applied_to_modified {
                    if ev.item <= threshold {
                        run.down_moves += 1;
                    } else {
                        run.up_moves += 1;
                    }
                }
            }
        }
        if let (Some(log), Some(ev)) = (run.events.as_mut(), sample.event) {
            log.push(ev);
        }
    }
    run.final_original = process.original().clone();
    run.final_modified = process.modified().clone();
    Ok(run)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn geometric(nu: f64) -> RequestDistribution {
        RequestDistribution::geometric(nu).unwrap()
    }

    #[test]
    fn phi_crosses_the_boundary_only() {
        let identity = ListState::new();
        // In identity order, only the first high item has a low
        // predecessor.
        assert!(!phi(&identity, 1, 2));
        assert!(!phi(&identity, 2, 2));
        assert!(phi(&identity, 3, 2));
        assert!(!phi(&identity, 4, 2));

        let s = ListState::from_order(&[2, 3, 1, 4]).unwrap();
        assert!(phi(&s, 1, 2), "low item behind a high predecessor");
        assert!(phi(&s, 3, 2), "high item behind a low predecessor");
        assert!(!phi(&s, 2, 2), "front item is never applied");
        assert!(phi(&s, 4, 2), "high item behind item 1");
    }

    /// Dense reference implementation over explicit orders.
    fn reorder_oracle(mod_order: &[u64], ref_order: &[u64], thr: u64) -> Vec<u64> {
        let lows: Vec<u64> = ref_order.iter().copied().filter(|&i| i <= thr).collect();
        let highs: Vec<u64> = ref_order.iter().copied().filter(|&i| i > thr).collect();
        let (mut li, mut hi) = (0, 0);
        mod_order
            .iter()
            .map(|&item| {
                if item <= thr {
                    li += 1;
                    lows[li - 1]
                } else {
                    hi += 1;
                    highs[hi - 1]
                }
            })
            .collect()
    }

    #[test]
    fn reorder_known_example() {
        let mut modified = ListState::from_order(&[2, 4, 1, 3]).unwrap();
        let reference = ListState::from_order(&[1, 3, 2, 4]).unwrap();
        reorder(&mut modified, &reference, 2);
        assert_eq!(modified.order_prefix(4), vec![1, 3, 2, 4]);
    }

    #[test]
    fn reorder_exhaustive_small_lists() {
        use itertools::Itertools;
        for n in [4u64, 5] {
            for ref_order in (1..=n).permutations(n as usize) {
                let reference = ListState::from_order(&ref_order).unwrap();
                for mod_order in (1..=n).permutations(n as usize) {
                    for thr in 1..n {
                        let mut modified = ListState::from_order(&mod_order).unwrap();
                        reorder(&mut modified, &reference, thr);
                        modified.check_consistent().unwrap();
                        let got = modified.order_prefix(n);
                        let want = reorder_oracle(&mod_order, &ref_order, thr);
                        assert_eq!(got, want, "mod={mod_order:?} ref={ref_order:?} thr={thr}");
                        // Idempotence.
                        let before = modified.clone();
                        reorder(&mut modified, &reference, thr);
                        assert_eq!(modified, before);
                    }
                }
            }
        }
    }

    #[test]
    fn reorder_handles_sparse_displacements() {
        // Modified list has a far-away displacement; the window must
        // cover it even though the reference is identity.
        let mut modified = ListState::new();
        modified.apply_request(40, crate::list::Policy::Transposition);
        let reference = ListState::new();
        reorder(&mut modified, &reference, 2);
        assert!(modified.displaced().is_empty(), "{:?}", modified.displaced());

        // Reference displaced beyond the modified list's window.
        let mut modified = ListState::from_order(&[2, 1]).unwrap();
        let mut reference = ListState::new();
        reference.apply_request(7, crate::list::Policy::Transposition);
        reference.apply_request(7, crate::list::Policy::Transposition);
        // reference order: 1 2 3 4 7 5 6 -> low items unaffected.
        reorder(&mut modified, &reference, 1);
        modified.check_consistent().unwrap();
        assert_eq!(modified.order_prefix(7), vec![2, 1, 3, 4, 7, 5, 6]);
    }

    #[test]
    fn thinning_keeps_the_right_fraction() {
        let times: Vec<f64> = (0..20_000).map(|k| k as f64 * 0.1).collect();
        let mut rng = ChaCha12Rng::seed_from_u64(31);
        let kept = thin(&times, 0.25, &mut rng).unwrap();
        let expect = 5000.0;
        let sigma = (20_000.0f64 * 0.25 * 0.75).sqrt();
        assert!(
            (kept.len() as f64 - expect).abs() < 4.0 * sigma,
            "kept {}",
            kept.len()
        );
        assert!(thin(&times, 0.0, &mut rng).unwrap().is_empty());
        assert_eq!(thin(&times, 1.0, &mut rng).unwrap().len(), times.len());
        assert!(thin(&times, 1.5, &mut rng).is_err());
    }

    #[test]
    fn stream_construction_laws() {
        let dist = geometric(0.5);
        let mut rng = ChaCha12Rng::seed_from_u64(9107);
        let horizon = 20_000.0;
        let stream = build_event_streams(&dist, 2, 4, horizon, &mut rng).unwrap();

        for w in stream.events().windows(2) {
            assert!(w[0].time < w[1].time);
        }
        let count = |item: u64, pred: &dyn Fn(Target) -> bool| {
            stream
                .events()
                .iter()
                .filter(|e| e.item == item && pred(e.target))
                .count() as f64
        };
        let any = |_: Target| true;
        let pi = |i: u64| dist.pmf(i);
        // Natural arrival rates, all targets combined (high items also
        // carry the top-up stream, bringing their total to pi_3).
        for item in 1..=4u64 {
            let rate = if item <= 2 { pi(item) } else { pi(3) };
            let n = count(item, &any);
            let sigma = (rate * horizon).sqrt();
            assert!(
                (n - rate * horizon).abs() < 4.0 * sigma,
                "item {item}: {n} arrivals"
            );
        }
        // Low-item marks thin down to rate pi_2.
        for item in 1..=2u64 {
            let n = count(item, &|t| t == Target::Both);
            let sigma = (pi(2) * horizon).sqrt();
            assert!((n - pi(2) * horizon).abs() < 4.0 * sigma);
        }
        // Low items never target only the modified list; high items
        // never target only the original.
        assert!(stream
            .events()
            .iter()
            .all(|e| match e.target {
                Target::Modified => e.item > 2,
                Target::Original => e.item <= 2,
                Target::Both => true,
            }));
    }

    #[test]
    fn stream_validation() {
        assert!(EventStream::new(vec![StreamEvent {
            time: f64::NAN,
            item: 1,
            target: Target::Both
        }])
        .is_err());
        assert!(EventStream::new(vec![StreamEvent {
            time: 0.5,
            item: 0,
            target: Target::Both
        }])
        .is_err());
        // Exact ties get separated, preserving order by item.
        let s = EventStream::new(vec![
            StreamEvent { time: 1.0, item: 5, target: Target::Both },
            StreamEvent { time: 1.0, item: 2, target: Target::Both },
        ])
        .unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.events()[0].item, 2);
        assert!(s.events()[0].time < s.events()[1].time);

        let dist = geometric(0.5);
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        assert!(build_event_streams(&dist, 0, 4, 10.0, &mut rng).is_err());
        assert!(build_event_streams(&dist, 4, 2, 10.0, &mut rng).is_err());
        assert!(build_event_streams(&dist, 2, 4, 0.0, &mut rng).is_err());
    }

    #[test]
    fn process_validation() {
        let dist = geometric(0.5);
        assert!(CoupledProcess::new(&dist, 0).is_err());
        assert!(CoupledProcess::new(&dist, 3).is_ok());
        let three = RequestDistribution::explicit(vec![0.5, 0.3, 0.2]).unwrap();
        assert!(CoupledProcess::new(&three, 2).is_ok());
        assert!(CoupledProcess::new(&three, 3).is_err(), "no high items left");
    }

    #[test]
    fn engine_keeps_classes_aligned_with_explicit_reorder() {
        // The incremental realignment inside `step` must leave the
        // modified list exactly where the standalone `reorder` would
        // put it, at every single tick.
        for (dist, thr, seed) in [
            (geometric(0.4), 3u64, 0x11u64),
            (RequestDistribution::power_law(2.0).unwrap(), 2, 0x22),
        ] {
            let mut process = CoupledProcess::new(&dist, thr).unwrap();
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            for tick in 0..4000 {
                process.step(&mut rng).unwrap();
                let mut realigned = process.modified().clone();
                reorder(&mut realigned, process.original(), thr);
                assert_eq!(
                    realigned,
                    *process.modified(),
                    "tick {tick}: engine state is not reorder-canonical"
                );
                if tick % 256 == 0 {
                    process.original().check_consistent().unwrap();
                    process.modified().check_consistent().unwrap();
                }
            }
        }
    }

    #[test]
    fn run_is_reproducible_and_counts_add_up() {
        let dist = geometric(0.5);
        let opts = CoupleOptions { burn_in: 0.25, log_events: true };
        let run = |seed: u64| {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            run_coupled(&dist, 2, 30_000, &mut rng, &opts).unwrap()
        };
        let a = run(42);
        let b = run(42);
        assert_eq!(a.max_x_hist, b.max_x_hist);
        assert_eq!(a.z_hist, b.z_hist);
        assert_eq!(a.events, b.events);
        let c = run(43);
        assert_ne!(a.max_x_hist, c.max_x_hist);

        assert_eq!(a.ticks, 30_000);
        assert_eq!(a.burn_in_ticks, 7_500);
        assert_eq!(a.recorded_ticks, 22_500);
        assert_eq!(a.max_x_hist.iter().sum::<u64>(), a.recorded_ticks);
        assert_eq!(a.z_hist.iter().sum::<u64>(), a.recorded_ticks);
        // Free counts are bounded by the number of low items per tick.
        assert!(a.free_left_ticks <= 2 * a.recorded_ticks);
        assert!(a.free_right_ticks <= 2 * a.recorded_ticks);
        // Tail helpers agree with the histograms.
        assert!((a.max_x_tail(0) - 1.0).abs() < 1e-15);
        assert_eq!(a.max_x_tail(1_000_000), 0.0);
        assert!(a.z_tail(2) <= 1.0);
        // The log holds only non-ghost events, in tick order.
        let log = a.events.as_ref().unwrap();
        assert!(!log.is_empty());
        assert!(log.windows(2).all(|w| w[0].tick < w[1].tick));
        assert!(log
            .iter()
            .all(|e| e.applied_to_original || e.applied_to_modified));
    }

    #[test]
    fn domination_check_fires_on_corruption() {
        let dist = geometric(0.5);
        let mut process = CoupledProcess::new(&dist, 2).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        for _ in 0..200 {
            process.step(&mut rng).unwrap();
        }
        process.corrupt_original_for_test(1, 30);
        let err = loop {
            match process.step(&mut rng) {
                Ok(_) => continue,
                Err(e) => break e,
            }
        };
        match err {
            CoreError::Domination(report) => {
                assert!(report.original_position > report.modified_position);
                assert!(!report.recent.is_empty());
                let msg = report.to_string();
                assert!(msg.contains("domination violated"), "{msg}");
            }
            other => panic!("expected a domination report, got {other}"),
        }
    }

    #[test]
    fn bound_evaluates_and_validates() {
        let dist = geometric(0.5);
        // Below the threshold the bound is vacuous.
        assert_eq!(occupancy_tail_bound(&dist, 3, 2).unwrap(), 1.0);
        // At and beyond: exactly the overhang tail at beta = 1/2.
        for x in 3..=10u64 {
            let got = occupancy_tail_bound(&dist, 3, x).unwrap();
            let want = exclusion::kappa_tail(3, 0.5, x - 2).unwrap();
            assert_eq!(got, want);
        }
        // Ties across the threshold are rejected.
        let uniform = RequestDistribution::explicit(vec![0.25; 4]).unwrap();
        assert!(occupancy_tail_bound(&uniform, 2, 5).is_err());
        // A threshold at the end of the support gives a zero bound.
        let three = RequestDistribution::explicit(vec![0.5, 0.3, 0.2]).unwrap();
        assert_eq!(occupancy_tail_bound(&three, 3, 5).unwrap(), 0.0);
        assert!(occupancy_tail_bound(&three, 4, 5).is_err());
    }

    #[test]
    fn run_options_validate() {
        let dist = geometric(0.5);
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let bad = CoupleOptions { burn_in: 1.0, log_events: false };
        assert!(run_coupled(&dist, 2, 100, &mut rng, &bad).is_err());
        assert!(run_coupled(&dist, 2, 0, &mut rng, &CoupleOptions::default()).is_err());
    }
}
