//! Experiment drivers: search-cost tail estimation, tail-exponent
//! comparison against the request law, the analytic union bound, and
//! the exclusion-process and coupled-run reports.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use solist_core::coupling::{occupancy_tail_bound, run_coupled, CoupleOptions, LoggedEvent};
use solist_core::exclusion::{kappa_pmf, kappa_tail, simulate, CaepRates, ExclusionState};
use solist_core::list::{run_trace, static_cost_tail};
use solist_core::stationary::{ProductForm, MAX_PRODUCT_FORM_ITEMS};
use solist_core::{CostRecorder, Family, ListState, Policy, RequestDistribution};

use crate::config::derive_seed;
use crate::error::{CliError, Result};

/// Tail mass below which an infinite law may be cut off for the
/// exponent comparison.
const NEGLIGIBLE_TAIL: f64 = 1e-12;

/// Largest automatic cutoff the comparison will search for.
const MAX_AUTO_SUPPORT: u64 = 1 << 41;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Exact,
    MonteCarlo,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Exact => write!(f, "exact"),
            Method::MonteCarlo => write!(f, "monte_carlo"),
        }
    }
}

/// One estimated point of `Pr[C > x]` with its diagnostics.
#[derive(Debug, Clone)]
pub struct TailEstimate {
    pub x: u64,
    pub value: f64,
    pub method: Method,
    /// 95% half-width across replications; zero for exact values.
    pub half_width: f64,
    /// Recorded requests behind the estimate; zero for exact values.
    pub sample_count: u64,
    /// Pooled exceedances across replications.
    pub hits: u64,
    /// Enough pooled exceedances (30) to trust the error bar.
    pub reliable: bool,
    /// First and second halves of the recorded window agree within
    /// twice the half-width, a drift check on the burn-in choice.
    pub stationary_ok: bool,
}

impl TailEstimate {
    fn exact(x: u64, value: f64) -> Self {
        Self {
            x,
            value,
            method: Method::Exact,
            half_width: 0.0,
            sample_count: 0,
            hits: 0,
            reliable: true,
            stationary_ok: true,
        }
    }
}

/// Whether [`exact_cost_tail`] can handle this policy and law.
pub fn exact_available(dist: &RequestDistribution, policy: Policy) -> bool {
    match policy {
        Policy::Static => true,
        Policy::Transposition => dist
            .support()
            .is_some_and(|n| n as usize <= MAX_PRODUCT_FORM_ITEMS),
        Policy::MoveToFront => false,
    }
}

/// Closed-form `Pr[C > x]`: the request tail itself for the static
/// list, the stationary product form for transposition on small
/// finite supports.
pub fn exact_cost_tail(
    dist: &RequestDistribution,
    policy: Policy,
    x_grid: &[u64],
) -> Result<Vec<TailEstimate>> {
    match policy {
        Policy::Static => {
            let identity = ListState::new();
            Ok(x_grid
                .iter()
                .map(|&x| TailEstimate::exact(x, static_cost_tail(&identity, dist, x)))
                .collect())
        }
        Policy::Transposition => {
            let n = dist
                .support()
                .filter(|&n| n as usize <= MAX_PRODUCT_FORM_ITEMS)
                .ok_or_else(|| {
                    CliError::Config(format!(
                        "exact transposition tails need a finite support of at most \
                         {MAX_PRODUCT_FORM_ITEMS} items; use the sampling mode instead"
                    ))
                })?;
            let form = ProductForm::new(&dist.pmf_prefix(n))?;
            Ok(x_grid
                .iter()
                .map(|&x| TailEstimate::exact(x, form.cost_tail(x)))
                .collect())
        }
        Policy::MoveToFront => Err(CliError::Config(
            "no exact method for move_to_front; use the sampling mode".into(),
        )),
    }
}

/// Monte Carlo `Pr[C > x]` under `policy`, averaged over independent
/// replications seeded as streams of `base_seed`. Each replication
/// starts from the identity arrangement, discards the burn-in prefix,
/// and records the rest.
pub fn simulate_cost_tail(
    dist: &RequestDistribution,
    policy: Policy,
    horizon: u64,
    burn_in: f64,
    x_grid: &[u64],
    replications: u32,
    base_seed: u64,
) -> Result<Vec<TailEstimate>> {
    if replications == 0 {
        return Err(CliError::Config("replications must be at least 1".into()));
    }
    if !(burn_in.is_finite() && (0.0..1.0).contains(&burn_in)) {
        return Err(CliError::Config(format!(
            "burn_in must lie in [0, 1), got {burn_in}"
        )));
    }
    let burn = (horizon as f64 * burn_in) as u64;
    let measured = horizon - burn;
    if measured < 2 {
        return Err(CliError::Config(format!(
            "horizon {horizon} leaves only {measured} recorded requests after burn-in"
        )));
    }
    let first_half = measured / 2;
    let second_half = measured - first_half;

    let halves: Vec<(CostRecorder, CostRecorder)> = (0..replications)
        .into_par_iter()
        .map(|rep| -> Result<(CostRecorder, CostRecorder)> {
            let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(base_seed, rep as u64));
            let mut state = ListState::new();
            for _ in 0..burn {
                let item = dist.sample(&mut rng);
                state.apply_request(item, policy);
            }
            let mut rec_a = CostRecorder::new(x_grid.to_vec())?;
            run_trace(&mut state, dist, policy, first_half, &mut rng, &mut rec_a);
            let mut rec_b = CostRecorder::new(x_grid.to_vec())?;
            run_trace(&mut state, dist, policy, second_half, &mut rng, &mut rec_b);
            Ok((rec_a, rec_b))
        })
        .collect::<Result<_>>()?;

    let reps = replications as f64;
    let mut out = Vec::with_capacity(x_grid.len());
    for (k, &x) in x_grid.iter().enumerate() {
        let mut fractions = Vec::with_capacity(halves.len());
        let mut hits_a = 0u64;
        let mut hits_b = 0u64;
        for (a, b) in &halves {
            let ha = a.exceed_counts()[k];
            let hb = b.exceed_counts()[k];
            hits_a += ha;
            hits_b += hb;
            fractions.push((ha + hb) as f64 / measured as f64);
        }
        let value = fractions.iter().sum::<f64>() / reps;
        let half_width = if replications >= 2 {
            let var = fractions
                .iter()
                .map(|f| (f - value).powi(2))
                .sum::<f64>()
                / (reps - 1.0);
            1.96 * (var / reps).sqrt()
        } else {
            1.96 * (value * (1.0 - value) / measured as f64).sqrt()
        };
        let a_hat = hits_a as f64 / (reps * first_half as f64);
        let b_hat = hits_b as f64 / (reps * second_half as f64);
        let hits = hits_a + hits_b;
        out.push(TailEstimate {
            x,
            value,
            method: Method::MonteCarlo,
            half_width,
            sample_count: replications as u64 * measured,
            hits,
            reliable: hits >= 30,
            stationary_ok: (a_hat - b_hat).abs() <= 2.0 * half_width + 1e-9,
        });
    }
    Ok(out)
}

/// One grid point of the exponent comparison.
#[derive(Debug, Clone)]
pub struct RatioRow {
    pub x: u64,
    pub cost: TailEstimate,
    pub request_tail: f64,
    /// `ln Pr[R > x] / ln Pr[C > x]`; present only for included rows.
    /// Oriented so the value is at least one: the cost tail dominates
    /// the request tail, so its log magnitude is the smaller one.
    pub ratio: Option<f64>,
    pub ratio_half_width: f64,
    /// The cost tail dominates the request tail, up to noise.
    pub cost_dominates: bool,
    /// Reason this row is excluded from the trend statistic.
    pub excluded: Option<String>,
}

#[derive(Debug, Clone)]
pub struct RatioReport {
    pub rows: Vec<RatioRow>,
    /// Spearman rank correlation of the ratio against `x` over the
    /// included rows; `None` with fewer than three rows or constant
    /// ratios.
    pub spearman: Option<f64>,
    /// Cutoff applied to an infinite law before the comparison.
    pub truncated_at: Option<u64>,
    /// Item count of the law the comparison actually ran on.
    pub n_items: u64,
}

/// Compare the search-cost tail with the request tail on a log scale.
///
/// The pointwise ratio `ln Pr[R > x] / ln Pr[C > x]` measures how much
/// heavier the cost tail is than the request tail, which is what the
/// best static arrangement achieves. The cost tail dominates, so the
/// ratio is at least one, and it decreases toward one as `x` grows
/// inside the regime where the tails have matching shape (all `x`
/// below the support for geometric-type laws, `x <= gamma * n` for
/// power-type). Infinite laws are cut off where their tail drops
/// below 1e-12.
pub fn optimality_ratio(
    dist: &RequestDistribution,
    policy: Policy,
    x_grid: &[u64],
    horizon: u64,
    burn_in: f64,
    replications: u32,
    gamma: f64,
    seed: Option<u64>,
) -> Result<RatioReport> {
    let (working, truncated_at) = match dist.support() {
        Some(_) => (dist.clone(), None),
        None => {
            let cut = negligible_point(dist)?;
            (dist.truncate(cut)?, Some(cut))
        }
    };
    let n_items = working.support().expect("working law is finite");

    let costs = if exact_available(&working, policy) {
        exact_cost_tail(&working, policy, x_grid)?
    } else {
        let seed = seed.ok_or_else(|| {
            CliError::Config("a seed is required: this ratio run needs sampling".into())
        })?;
        simulate_cost_tail(
            &working,
            policy,
            horizon,
            burn_in,
            x_grid,
            replications,
            seed,
        )?
    };

    let family = working.family();
    let mut rows = Vec::with_capacity(costs.len());
    for cost in costs {
        let x = cost.x;
        let request_tail = working.tail(x);
        let excluded = if x == 0 {
            Some("request tail is one at x = 0".to_string())
        } else if request_tail <= 0.0 {
            Some(format!("beyond the support ({n_items} items)"))
        } else if family == Family::PowerLaw && (x as f64) > gamma * n_items as f64 {
            Some(format!(
                "outside the matching regime for power-type laws (x > {gamma} * n)"
            ))
        } else if cost.value <= 0.0 {
            Some("no exceedances observed".to_string())
        } else if cost.value >= 1.0 {
            Some("every recorded cost exceeded x".to_string())
        } else {
            None
        };
        let (ratio, ratio_half_width) = if excluded.is_none() {
            let log_req = request_tail.ln();
            let log_cost = cost.value.ln();
            (
                Some(log_req / log_cost),
                log_req.abs() * cost.half_width / (cost.value * log_cost * log_cost),
            )
        } else {
            (None, 0.0)
        };
        let cost_dominates = cost.value + 1.5 * cost.half_width + 1e-12 >= request_tail;
        rows.push(RatioRow {
            x,
            cost,
            request_tail,
            ratio,
            ratio_half_width,
            cost_dominates,
            excluded,
        });
    }

    let xs: Vec<f64> = rows
        .iter()
        .filter(|r| r.ratio.is_some())
        .map(|r| r.x as f64)
        .collect();
    let ys: Vec<f64> = rows.iter().filter_map(|r| r.ratio).collect();
    let spearman = spearman(&xs, &ys);

    Ok(RatioReport {
        rows,
        spearman,
        truncated_at,
        n_items,
    })
}

/// Smallest `n` with `Pr[R > n] < 1e-12`, by doubling then bisection.
fn negligible_point(dist: &RequestDistribution) -> Result<u64> {
    let mut hi = 2u64;
    while dist.tail(hi) >= NEGLIGIBLE_TAIL {
        hi *= 2;
        if hi > MAX_AUTO_SUPPORT {
            return Err(CliError::Config(format!(
                "the request tail stays above {NEGLIGIBLE_TAIL} beyond {MAX_AUTO_SUPPORT} \
                 items; pass truncate_at= in the law description instead"
            )));
        }
    }
    let mut lo = 1u64;
    while lo + 1 < hi {
        let mid = lo + (hi - lo) / 2;
        if dist.tail(mid) < NEGLIGIBLE_TAIL {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Spearman rank correlation; `None` below three points or when either
/// side has no rank variance.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 3 {
        return None;
    }
    pearson(&ranks(xs), &ranks(ys))
}

/// Ranks starting at one, ties averaged.
fn ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = avg;
        }
        i = j + 1;
    }
    out
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in a.iter().zip(b) {
        num += (x - ma) * (y - mb);
        va += (x - ma).powi(2);
        vb += (y - mb).powi(2);
    }
    if va <= 0.0 || vb <= 0.0 {
        return None;
    }
    Some(num / (va * vb).sqrt())
}

/// Analytic upper bound on `Pr[C > x]`, split at a pivot item `y`: the
/// first `y` items all sit above position `x` only if their front
/// block has overhang past `x`, each later item `r < x` needs its own
/// front block pushed past `x`, and requests beyond `max(y, x-1)`
/// contribute their raw mass.
#[derive(Debug, Clone)]
pub struct TailBound {
    pub x: u64,
    pub y: u64,
    /// Overhang tail of the `y` front items.
    pub front_block: f64,
    /// Sum over requests `y < r < x` of `pmf(r)` times the overhang
    /// tail of the first `r` items.
    pub ladder: f64,
    /// Request mass beyond `max(y, x - 1)`.
    pub remainder: f64,
    pub request_tail: f64,
}

impl TailBound {
    pub fn total(&self) -> f64 {
        self.front_block + self.ladder + self.remainder
    }
}

/// Evaluate the union bound at `x` with pivot `y`.
pub fn cost_tail_bound(dist: &RequestDistribution, x: u64, y: u64) -> Result<TailBound> {
    if y == 0 || y > x {
        return Err(CliError::Config(format!(
            "the pivot must satisfy 1 <= y <= x, got y = {y}, x = {x}"
        )));
    }
    let front_block = overhang_tail(dist, y, x)?;
    let mut ladder = 0.0;
    for r in y + 1..x {
        let mass = dist.pmf(r);
        if mass == 0.0 {
            break;
        }
        ladder += mass * overhang_tail(dist, r, x)?;
    }
    let remainder = dist.tail(y.max(x - 1));
    Ok(TailBound {
        x,
        y,
        front_block,
        ladder,
        remainder,
        request_tail: dist.tail(x),
    })
}

/// `Pr[deepest of the first n items sits past x]` bounded by the
/// overhang tail of an n-particle exclusion process with rate ratio
/// `pmf(n+1)/pmf(n)`.
fn overhang_tail(dist: &RequestDistribution, n: u64, x: u64) -> Result<f64> {
    let beta = dist.ratio(n)?;
    if beta == 0.0 {
        return Ok(0.0);
    }
    if beta >= 1.0 {
        return Err(CliError::Config(format!(
            "the request law must strictly decrease at item {n} for the bound to apply"
        )));
    }
    Ok(kappa_tail(n as usize, beta, x - n + 1)?)
}

/// Default pivot `ceil(epsilon * x / ln x)`, clamped to `[1, x]`.
pub fn choose_pivot(x: u64, epsilon: f64) -> u64 {
    if x <= 1 {
        return 1;
    }
    let y = (epsilon * x as f64 / (x as f64).ln()).ceil() as u64;
    y.clamp(1, x)
}

/// One occupancy bin of the exclusion-process comparison.
#[derive(Debug, Clone)]
pub struct CaepRow {
    pub kappa: u64,
    pub empirical: f64,
    /// Batch-means standard error.
    pub std_err: f64,
    pub expected: f64,
}

#[derive(Debug, Clone)]
pub struct CaepReport {
    pub particles: usize,
    pub beta: f64,
    pub events: u64,
    pub burned: u64,
    pub batches: u32,
    pub rows: Vec<CaepRow>,
}

/// Simulate the exclusion process and compare the overhang occupancy
/// against its closed-form law, batch means giving the error bars.
pub fn run_caep(
    particles: usize,
    beta: f64,
    events: u64,
    batches: u32,
    burn_in: f64,
    seed: u64,
) -> Result<CaepReport> {
    if batches < 2 {
        return Err(CliError::Config("batches must be at least 2".into()));
    }
    if !(burn_in.is_finite() && (0.0..1.0).contains(&burn_in)) {
        return Err(CliError::Config(format!(
            "burn_in must lie in [0, 1), got {burn_in}"
        )));
    }
    if particles == 0 {
        return Err(CliError::Config("particles must be at least 1".into()));
    }
    let rates = CaepRates::from_beta(beta)?;
    let mut state = ExclusionState::packed(particles);
    let mut rng = ChaCha12Rng::seed_from_u64(seed);

    let burned = (events as f64 * burn_in) as u64;
    let per_batch = (events - burned) / batches as u64;
    if per_batch == 0 {
        return Err(CliError::Config(format!(
            "events {events} cannot cover {batches} batches after burn-in"
        )));
    }
    simulate(&mut state, rates, burned, &mut rng, false);

    let mut batch_fractions: Vec<Vec<f64>> = Vec::with_capacity(batches as usize);
    for _ in 0..batches {
        let stats = simulate(&mut state, rates, per_batch, &mut rng, false);
        batch_fractions.push(
            (0..stats.kappa_counts.len())
                .map(|i| stats.kappa_fraction(i))
                .collect(),
        );
    }

    let observed_max = batch_fractions.iter().map(|f| f.len()).max().unwrap_or(0);
    let mut rows = Vec::new();
    let mut kappa = 0u64;
    loop {
        let expected = kappa_pmf(particles, beta, kappa)?;
        if kappa as usize >= observed_max && expected < 1e-12 {
            break;
        }
        let values: Vec<f64> = batch_fractions
            .iter()
            .map(|f| f.get(kappa as usize).copied().unwrap_or(0.0))
            .collect();
        let (mean, se) = mean_se(&values);
        rows.push(CaepRow {
            kappa,
            empirical: mean,
            std_err: se,
            expected,
        });
        kappa += 1;
    }

    Ok(CaepReport {
        particles,
        beta,
        events,
        burned,
        batches,
        rows,
    })
}

/// One tail point of the coupled-run report.
#[derive(Debug, Clone)]
pub struct CoupleTailRow {
    pub x: u64,
    /// Across-replication mean of `Pr[deepest front item > x]` in the
    /// original list.
    pub empirical: f64,
    pub std_err: f64,
    /// Closed-form overhang bound at this point.
    pub bound: f64,
}

/// Boundary-rate diagnostics of the coupled run.
#[derive(Debug, Clone)]
pub struct RateSummary {
    pub left_mean: f64,
    pub left_se: f64,
    /// Request mass of the threshold item, the exact leftward rate.
    pub left_expected: f64,
    pub right_mean: f64,
    pub right_se: f64,
    /// Request mass of the first high item, the exact rightward rate.
    pub right_expected: f64,
}

#[derive(Debug, Clone)]
pub struct CoupleReport {
    pub threshold: u64,
    pub replications: u32,
    pub ticks: u64,
    pub lambda_max: f64,
    pub rows: Vec<CoupleTailRow>,
    pub rates: RateSummary,
    /// Event log of the first replication, when requested.
    pub events: Option<Vec<LoggedEvent>>,
}

/// Run independent coupled replications and aggregate the depth tails
/// against the closed-form bound. A broken position ordering anywhere
/// surfaces as the domination error.
#[allow(clippy::too_many_arguments)]
pub fn run_couple(
    dist: &RequestDistribution,
    threshold: u64,
    ticks: u64,
    replications: u32,
    burn_in: f64,
    x_span: u64,
    seed: u64,
    event_log: bool,
) -> Result<CoupleReport> {
    if replications == 0 {
        return Err(CliError::Config("replications must be at least 1".into()));
    }
    let runs: Vec<solist_core::coupling::CoupledRun> = (0..replications)
        .into_par_iter()
        .map(|rep| {
            let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(seed, rep as u64));
            let opts = CoupleOptions {
                burn_in,
                log_events: event_log && rep == 0,
            };
            run_coupled(dist, threshold, ticks, &mut rng, &opts)
        })
        .collect::<solist_core::Result<_>>()?;

    let mut rows = Vec::new();
    for x in threshold..=threshold + x_span {
        let values: Vec<f64> = runs.iter().map(|r| r.max_x_tail(x)).collect();
        let (mean, se) = mean_se(&values);
        rows.push(CoupleTailRow {
            x,
            empirical: mean,
            std_err: se,
            bound: occupancy_tail_bound(dist, threshold, x)?,
        });
    }

    let lefts: Vec<f64> = runs.iter().map(|r| r.left_rate_estimate()).collect();
    let rights: Vec<f64> = runs.iter().map(|r| r.right_rate_estimate()).collect();
    let (left_mean, left_se) = mean_se(&lefts);
    let (right_mean, right_se) = mean_se(&rights);

    let mut runs = runs;
    let events = runs.first_mut().and_then(|r| r.events.take());
    Ok(CoupleReport {
        threshold,
        replications,
        ticks,
        lambda_max: runs[0].lambda_max,
        rows,
        rates: RateSummary {
            left_mean,
            left_se,
            left_expected: dist.pmf(threshold),
            right_mean,
            right_se,
            right_expected: dist.pmf(threshold + 1),
        },
        events,
    })
}

/// Sample mean and its standard error; zero error for one value.
fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
