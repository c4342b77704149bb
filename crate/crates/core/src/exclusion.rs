//! A finite-particle exclusion process on the positive slots.
//!
//! `n` particles occupy distinct slots `1, 2, ...`. Each jump picks a
//! uniform particle and a direction (left with probability `p`, right
//! with `q = 1 - p`); the move is suppressed when the target slot is
//! occupied or below slot 1. With drift toward the wall (`beta = q/p
//! < 1`) the process is positive recurrent and reversible, and its
//! stationary law, the law of the rightmost particle's overhang
//! `kappa = Z_n - n`, and the partition functions are all available
//! in closed form here.

use std::collections::HashMap;

use rand::Rng;

use crate::chain::JumpChain;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Left,
    Right,
}

/// Jump rates, normalized so `p + q = 1`. The wall-ward drift
/// condition `p > q >= 0` is enforced at construction.
#[derive(Debug, Clone, Copy)]
pub struct CaepRates {
    p: f64,
    q: f64,
}

impl CaepRates {
    pub fn new(p: f64, q: f64) -> Result<Self> {
        if !(p.is_finite() && q.is_finite() && q >= 0.0 && p > q) {
            return Err(Error::InvalidParameter(format!(
                "rates need p > q >= 0, got p={p} q={q}"
            )));
        }
        let total = p + q;
        Ok(Self { p: p / total, q: q / total })
    }

    /// Rates with left/right ratio `beta = q/p`, `0 <= beta < 1`.
    pub fn from_beta(beta: f64) -> Result<Self> {
        if !(beta.is_finite() && (0.0..1.0).contains(&beta)) {
            return Err(Error::InvalidParameter(format!(
                "beta must lie in [0, 1), got {beta}"
            )));
        }
        Self::new(1.0 / (1.0 + beta), beta / (1.0 + beta))
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn beta(&self) -> f64 {
        self.q / self.p
    }
}

/// Particle configuration: strictly increasing occupied slots.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ExclusionState {
    positions: Vec<u64>,
}

impl ExclusionState {
    pub fn new(positions: Vec<u64>) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::InvalidParameter("need at least one particle".into()));
        }
        if positions[0] < 1 {
            return Err(Error::InvalidParameter("slots start at 1".into()));
        }
        if positions.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter(
                "positions must be strictly increasing".into(),
            ));
        }
        Ok(Self { positions })
    }

    /// The ground state: particles packed into slots `1..=n`.
    pub fn packed(n: usize) -> Self {
        assert!(n >= 1);
        Self { positions: (1..=n as u64).collect() }
    }

    pub fn positions(&self) -> &[u64] {
        &self.positions
    }

    pub fn n(&self) -> usize {
        self.positions.len()
    }

    /// Slot of the rightmost particle.
    pub fn max_slot(&self) -> u64 {
        *self.positions.last().unwrap()
    }

    /// Overhang of the rightmost particle beyond the packed state.
    pub fn kappa(&self) -> u64 {
        self.max_slot() - self.positions.len() as u64
    }

    /// Sum of occupied slots; the stationary weight is `beta` to this power.
    pub fn slot_sum(&self) -> u64 {
        self.positions.iter().sum()
    }

    /// Attempt to move particle `idx` one slot in `dir`. Returns
    /// whether the move happened; blocked moves (wall or occupied
    /// target) leave the state unchanged.
    pub fn attempt_move(&mut self, idx: usize, dir: Direction) -> bool {
        let z = self.positions[idx];
        match dir {
            Direction::Left => {
                if z == 1 || (idx > 0 && self.positions[idx - 1] == z - 1) {
                    return false;
                }
                self.positions[idx] = z - 1;
            }
            Direction::Right => {
                if idx + 1 < self.positions.len() && self.positions[idx + 1] == z + 1 {
                    return false;
                }
                self.positions[idx] = z + 1;
            }
        }
        true
    }
}

/// Occupancy counts from a simulation run.
#[derive(Debug, Clone)]
pub struct OccupancyStats {
    pub events: u64,
    /// `kappa_counts[i]` = number of post-event states with overhang `i`.
    pub kappa_counts: Vec<u64>,
    pub config_counts: Option<HashMap<Vec<u64>, u64>>,
}

impl OccupancyStats {
    pub fn kappa_fraction(&self, i: usize) -> f64 {
        let count = self.kappa_counts.get(i).copied().unwrap_or(0);
        count as f64 / self.events as f64
    }
}

/// Run `events` jumps of the uniformized chain: a uniform particle,
/// then a direction with probabilities `(p, q)`; blocked moves are
/// self-loops. Because the exit rate is constant across states, this
/// jump chain has the same stationary law as the continuous-time
/// process. The post-event state is tallied after every jump.
pub fn simulate<R: Rng + ?Sized>(
    state: &mut ExclusionState,
    rates: CaepRates,
    events: u64,
    rng: &mut R,
    track_configs: bool,
) -> OccupancyStats {
    let n = state.n();
    let mut kappa_counts: Vec<u64> = Vec::new();
    let mut config_counts = track_configs.then(HashMap::new);
    for _ in 0..events {
        let idx = rng.random_range(0..n);
        let dir = if rng.random::<f64>() < rates.p {
            Direction::Left
        } else {
            Direction::Right
        };
        state.attempt_move(idx, dir);
        let kappa = state.kappa() as usize;
        if kappa >= kappa_counts.len() {
            kappa_counts.resize(kappa + 1, 0);
        }
        kappa_counts[kappa] += 1;
        if let Some(counts) = config_counts.as_mut() {
            *counts.entry(state.positions.clone()).or_insert(0) += 1;
        }
    }
    OccupancyStats { events, kappa_counts, config_counts }
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta.is_finite() && 0.0 < beta && beta < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "beta must lie in (0, 1), got {beta}"
        )));
    }
    Ok(())
}

/// Partition function over `n` particles confined to slots `1..=n+k`:
/// `eta_{n,k} = beta^{n(n+1)/2} prod_{i=1..k} (1-beta^{n+i})/(1-beta^i)`.
pub fn eta_nk(n: usize, k: u64, beta: f64) -> Result<f64> {
    check_beta(beta)?;
    if n == 0 {
        return Err(Error::InvalidParameter("need at least one particle".into()));
    }
    let ground = n as f64 * (n as f64 + 1.0) / 2.0;
    let mut value = beta.powf(ground);
    for i in 1..=k {
        value *= (1.0 - beta.powf((n as u64 + i) as f64)) / (1.0 - beta.powf(i as f64));
    }
    Ok(value)
}

/// Unconfined partition function:
/// `eta_n = beta^{n(n+1)/2} prod_{i=1..n} (1-beta^i)^{-1}`.
pub fn eta_n(n: usize, beta: f64) -> Result<f64> {
    check_beta(beta)?;
    if n == 0 {
        return Err(Error::InvalidParameter("need at least one particle".into()));
    }
    let ground = n as f64 * (n as f64 + 1.0) / 2.0;
    let mut value = beta.powf(ground);
    for i in 1..=n {
        value /= 1.0 - beta.powi(i as i32);
    }
    Ok(value)
}

/// Stationary probability of one configuration: `beta^{slot sum} / eta_n`.
pub fn config_prob(state: &ExclusionState, beta: f64) -> Result<f64> {
    check_beta(beta)?;
    Ok(beta.powf(state.slot_sum() as f64) / eta_n(state.n(), beta)?)
}

fn kappa_pmf_unchecked(n: usize, beta: f64, i: u64) -> f64 {
    let mut value = beta.powf(i as f64) * (1.0 - beta.powi(n as i32));
    for j in 1..n as u64 {
        value *= 1.0 - beta.powf((i + j) as f64);
    }
    value
}

/// Stationary law of the overhang `kappa_n = Z_n - n`:
/// `Pr[kappa_n = i] = beta^i (1-beta^n) prod_{j=1..n-1} (1-beta^{i+j})`.
pub fn kappa_pmf(n: usize, beta: f64, i: u64) -> Result<f64> {
    check_beta(beta)?;
    if n == 0 {
        return Err(Error::InvalidParameter("need at least one particle".into()));
    }
    Ok(kappa_pmf_unchecked(n, beta, i))
}

/// `Pr[kappa_n >= i]`, summed until the geometric remainder bound
/// `beta^{m+1}/(1-beta)` is negligible against the accumulated mass.
pub fn kappa_tail(n: usize, beta: f64, i: u64) -> Result<f64> {
    check_beta(beta)?;
    if n == 0 {
        return Err(Error::InvalidParameter("need at least one particle".into()));
    }
    let mut acc = 0.0;
    let mut m = i;
    loop {
        acc += kappa_pmf_unchecked(n, beta, m);
        let remainder = beta.powf((m + 1) as f64) / (1.0 - beta);
        if remainder <= acc * 1e-16 || remainder < f64::MIN_POSITIVE {
            return Ok(acc);
        }
        m += 1;
    }
}

/// Limit of `kappa_pmf` as the particle count grows:
/// `beta^i prod_{j>=1} (1-beta^{i+j})`, truncated once the neglected
/// log-mass of the infinite product is certified below `tol/2`
/// (relative error at most `tol` for `tol <= 1`).
pub fn kappa_limit_pmf(beta: f64, i: u64, tol: f64) -> Result<f64> {
    check_beta(beta)?;
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance {tol} must be positive")));
    }
    let mut value = beta.powf(i as f64);
    let mut j = 1u64;
    loop {
        // For the skipped factors: sum_{l>j} -ln(1-beta^{i+l})
        //   <= beta^{i+j+1} / ((1-beta)(1-beta^{i+j+1})).
        let next = beta.powf((i + j) as f64);
        let bound = next * beta / ((1.0 - beta) * (1.0 - next * beta));
        if bound <= tol / 2.0 {
            return Ok(value);
        }
        value *= 1.0 - next;
        j += 1;
    }
}

/// Build the jump chain of the process confined to slots `1..=n+k`
/// (right moves out of the box are suppressed). Returns the chain and
/// the state list in enumeration order. Confinement preserves
/// reversibility, so the stationary law is the product form
/// renormalized by `eta_{n,k}`; this is the enumeration oracle for
/// the closed forms above.
pub fn capped_chain(
    n: usize,
    k: u64,
    rates: CaepRates,
) -> Result<(JumpChain, Vec<Vec<u64>>)> {
    use itertools::Itertools;
    if n == 0 {
        return Err(Error::InvalidParameter("need at least one particle".into()));
    }
    let cap = n as u64 + k;
    let states: Vec<Vec<u64>> = (1..=cap).combinations(n).collect();
    let index: HashMap<&[u64], usize> = states
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_slice(), i))
        .collect();
    let per_particle = 1.0 / n as f64;
    let mut rows = Vec::with_capacity(states.len());
    for state in &states {
        let mut row: Vec<(usize, f64)> = Vec::new();
        let mut stay = 0.0;
        for idx in 0..n {
            let z = state[idx];
            // Left move.
            if z > 1 && (idx == 0 || state[idx - 1] != z - 1) {
                let mut target = state.clone();
                target[idx] = z - 1;
                row.push((index[target.as_slice()], rates.p * per_particle));
            } else {
                stay += rates.p * per_particle;
            }
            // Right move, suppressed at the cap.
            if z < cap && (idx + 1 == n || state[idx + 1] != z + 1) {
                let mut target = state.clone();
                target[idx] = z + 1;
                row.push((index[target.as_slice()], rates.q * per_particle));
            } else {
                stay += rates.q * per_particle;
            }
        }
        if stay > 0.0 {
            row.push((index[state.as_slice()], stay));
        }
        rows.push(row);
    }
    Ok((JumpChain::new(rows)?, states))
}
