//! List state and replacement-policy dynamics.
//!
//! A list over the items `1, 2, 3, ...` starts in identity order
//! (item `i` at position `i`). State is held sparsely: only items
//! displaced from their identity position occupy the two maps, and
//! every position or item outside them is implicitly at identity.
//! Requests therefore cost O(1) under the transposition rule no matter
//! how deep in the tail the requested item lives, and the displaced
//! set stays bounded by the number of requests.
//!
//! [`Policy::MoveToFront`] must shift the whole prefix ahead of the
//! requested item, so a single request costs O(position); it is a
//! baseline for finite experiments, not for deep-tail runs.

use std::collections::HashMap;

use rand::Rng;

use crate::distributions::RequestDistribution;
use crate::error::{Error, Result};

/// Replacement policy applied on every request.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Policy {
    /// Swap the requested item with its immediate predecessor.
    Transposition,
    /// Move the requested item to the front, shifting the prefix back.
    MoveToFront,
    /// Leave the arrangement unchanged.
    Static,
}

impl std::str::FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "transposition" => Ok(Policy::Transposition),
            "move_to_front" => Ok(Policy::MoveToFront),
            "static" => Ok(Policy::Static),
            other => Err(Error::InvalidParameter(format!(
                "unknown policy `{other}` (expected transposition, move_to_front, static)"
            ))),
        }
    }
}

/// Arrangement of the infinite list, stored as displacements from
/// identity. Both maps always hold exactly the non-identity pairs and
/// stay mutual inverses.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ListState {
    item_at: HashMap<u64, u64>,
    position_of: HashMap<u64, u64>,
    requests: u64,
}

impl ListState {
    /// Identity arrangement.
    pub fn new() -> Self {
        Self::default()
    }

    /// Arrangement given as a finite prefix `order[p-1] = item at p`,
    /// which must be a permutation of `1..=order.len()`; everything
    /// past the prefix is identity.
    pub fn from_order(order: &[u64]) -> Result<Self> {
        let n = order.len() as u64;
        let mut seen = vec![false; order.len()];
        for &item in order {
            if item < 1 || item > n || seen[item as usize - 1] {
                return Err(Error::InvalidParameter(format!(
                    "order is not a permutation of 1..={n}"
                )));
            }
            seen[item as usize - 1] = true;
        }
        let mut state = Self::new();
        for (idx, &item) in order.iter().enumerate() {
            state.set_pair(idx as u64 + 1, item);
        }
        Ok(state)
    }

    /// Position of `item` (1-based); `item` itself when undisplaced.
    pub fn position_of(&self, item: u64) -> u64 {
        debug_assert!(item >= 1);
        self.position_of.get(&item).copied().unwrap_or(item)
    }

    /// Occupant of `pos` (1-based); `pos` itself when undisplaced.
    pub fn item_at(&self, pos: u64) -> u64 {
        debug_assert!(pos >= 1);
        self.item_at.get(&pos).copied().unwrap_or(pos)
    }

    /// Search cost of requesting `item` right now: its position.
    pub fn search_cost(&self, item: u64) -> u64 {
        self.position_of(item)
    }

    /// Requests processed so far.
    pub fn requests(&self) -> u64 {
        self.requests
    }

    /// Non-identity `(item, position)` pairs, sorted by item.
    pub fn displaced(&self) -> Vec<(u64, u64)> {
        let mut v: Vec<(u64, u64)> = self.position_of.iter().map(|(&i, &p)| (i, p)).collect();
        v.sort_unstable();
        v
    }

    /// Upper bound on every displaced item index and position; the
    /// arrangement is identity strictly beyond it.
    pub fn displacement_bound(&self) -> u64 {
        self.item_at
            .iter()
            .map(|(&p, &i)| p.max(i))
            .max()
            .unwrap_or(0)
    }

    /// First `k` occupants in order.
    pub fn order_prefix(&self, k: u64) -> Vec<u64> {
        (1..=k).map(|p| self.item_at(p)).collect()
    }

    pub(crate) fn set_pair(&mut self, pos: u64, item: u64) {
        if pos == item {
            self.item_at.remove(&pos);
            self.position_of.remove(&item);
        } else {
            self.item_at.insert(pos, item);
            self.position_of.insert(item, pos);
        }
    }

    /// Exchange the positions of two distinct items.
    pub fn swap_items(&mut self, a: u64, b: u64) {
        debug_assert_ne!(a, b);
        let pa = self.position_of(a);
        let pb = self.position_of(b);
        self.set_pair(pa, b);
        self.set_pair(pb, a);
    }

    /// Transposition step: swap `item` with its predecessor. Returns
    /// the displaced predecessor, or `None` when `item` is first.
    pub fn transpose(&mut self, item: u64) -> Option<u64> {
        let p = self.position_of(item);
        if p == 1 {
            return None;
        }
        let pred = self.item_at(p - 1);
        self.set_pair(p - 1, item);
        self.set_pair(p, pred);
        Some(pred)
    }

    /// Process one request under `policy`; returns the search cost
    /// (the item's position before any rearrangement).
    pub fn apply_request(&mut self, item: u64, policy: Policy) -> u64 {
        debug_assert!(item >= 1);
        self.requests += 1;
        let cost = self.position_of(item);
        match policy {
            Policy::Transposition => {
                self.transpose(item);
            }
            Policy::MoveToFront => {
                for q in (1..cost).rev() {
                    let occupant = self.item_at(q);
                    self.set_pair(q + 1, occupant);
                }
                if cost > 1 {
                    self.set_pair(1, item);
                }
            }
            Policy::Static => {}
        }
        cost
    }

    /// Internal consistency of the sparse representation: the maps are
    /// mutual inverses and hold no identity pairs.
    pub fn check_consistent(&self) -> Result<()> {
        if self.item_at.len() != self.position_of.len() {
            return Err(Error::InvalidParameter(format!(
                "map sizes differ: {} positions vs {} items",
                self.item_at.len(),
                self.position_of.len()
            )));
        }
        for (&pos, &item) in &self.item_at {
            if pos == item {
                return Err(Error::InvalidParameter(format!(
                    "identity pair ({pos}, {item}) stored explicitly"
                )));
            }
            if self.position_of.get(&item) != Some(&pos) {
                return Err(Error::InvalidParameter(format!(
                    "maps disagree on item {item} at position {pos}"
                )));
            }
        }
        Ok(())
    }
}

/// `Pr[C > x]` for a request drawn from `dist` against the fixed
/// arrangement `state`: the mass of all items placed beyond `x`.
///
/// Computed as the identity tail plus corrections from displaced items
/// only, so it is exact for any finite set of displacements.
pub fn static_cost_tail(state: &ListState, dist: &RequestDistribution, x: u64) -> f64 {
    let mut tail = dist.tail(x);
    for (item, pos) in state.displaced() {
        let now_beyond = pos > x;
        let was_beyond = item > x;
        if now_beyond && !was_beyond {
            tail += dist.pmf(item);
        } else if !now_beyond && was_beyond {
            tail -= dist.pmf(item);
        }
    }
    tail
}

/// Histogram of observed search costs against a fixed grid: counts how
/// many recorded costs exceed each grid point.
#[derive(Debug, Clone)]
pub struct CostRecorder {
    grid: Vec<u64>,
    /// `buckets[k]` counts costs `c` with `grid[k-1] < c <= grid[k]`
    /// in grid coordinates; the last bucket holds everything beyond.
    buckets: Vec<u64>,
    total: u64,
}

impl CostRecorder {
    /// `grid` must be strictly increasing.
    pub fn new(grid: Vec<u64>) -> Result<Self> {
        if grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter(
                "cost grid must be strictly increasing".into(),
            ));
        }
        let buckets = vec![0; grid.len() + 1];
        Ok(Self {
            grid,
            buckets,
            total: 0,
        })
    }

    pub fn record(&mut self, cost: u64) {
        let idx = self.grid.partition_point(|&x| x < cost);
        self.buckets[idx] += 1;
        self.total += 1;
    }

    pub fn grid(&self) -> &[u64] {
        &self.grid
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// For each grid point, how many recorded costs exceeded it.
    pub fn exceed_counts(&self) -> Vec<u64> {
        let mut out = vec![0; self.grid.len()];
        let mut acc = 0;
        for k in (0..self.grid.len()).rev() {
            acc += self.buckets[k + 1];
            out[k] = acc;
        }
        out
    }

    /// Empirical `Pr[C > x]` per grid point.
    pub fn tail_fractions(&self) -> Vec<f64> {
        self.exceed_counts()
            .iter()
            .map(|&c| c as f64 / self.total as f64)
            .collect()
    }

    /// Fold another recorder over the same grid into this one.
    pub fn merge(&mut self, other: &CostRecorder) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::InvalidParameter(
                "cannot merge recorders over different grids".into(),
            ));
        }
        for (b, o) in self.buckets.iter_mut().zip(&other.buckets) {
            *b += o;
        }
        self.total += other.total;
        Ok(())
    }
}

/// Drive `state` with `horizon` requests sampled from `dist`, applying
/// `policy` and recording every pre-rearrangement cost.
pub fn run_trace<R: Rng + ?Sized>(
    state: &mut ListState,
    dist: &RequestDistribution,
    policy: Policy,
    horizon: u64,
    rng: &mut R,
    recorder: &mut CostRecorder,
) {
    for _ in 0..horizon {
        let item = dist.sample(rng);
        let cost = state.apply_request(item, policy);
        recorder.record(cost);
    }
}
