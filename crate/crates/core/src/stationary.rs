//! Exact stationary analysis of the transposition chain on small lists.
//!
//! The stationary law over permutations has a product form: a state
//! placing item `j` at position `X_j` has weight `prod_j pi_j^{-X_j}`,
//! normalized over all `N!` permutations. [`ProductForm`] evaluates
//! it by enumeration in log space; [`brute_force_stationary`] solves
//! the balance equations of the explicit chain instead and exists to
//! audit the formula.

use std::collections::HashMap;

use itertools::Itertools;

use crate::chain::JumpChain;
use crate::error::{Error, Result};

/// Enumeration beyond 8 items (40320 states per evaluation) stops
/// being interactive; larger lists go through simulation instead.
pub const MAX_PRODUCT_FORM_ITEMS: usize = 8;

/// Brute-force chains have `N!` states and a dense solve on top.
pub const MAX_BRUTE_FORCE_ITEMS: usize = 6;

fn validate_pmf(pmf: &[f64], max_items: usize) -> Result<()> {
    if pmf.is_empty() {
        return Err(Error::InvalidParameter("need at least one item".into()));
    }
    if pmf.len() > max_items {
        return Err(Error::Capacity(format!(
            "{} items exceeds the enumeration limit of {max_items}",
            pmf.len()
        )));
    }
    if pmf.iter().any(|&p| !(p.is_finite() && p > 0.0)) {
        return Err(Error::InvalidParameter(
            "probabilities must be strictly positive and finite".into(),
        ));
    }
    let total: f64 = pmf.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "probabilities sum to {total}, need 1 within 1e-9"
        )));
    }
    Ok(())
}

/// Product-form stationary law of the transposition rule on `N <= 8`
/// items, evaluated by enumeration with a max-shifted log-sum.
#[derive(Debug, Clone)]
pub struct ProductForm {
    pmf: Vec<f64>,
    log_pmf: Vec<f64>,
    max_log: f64,
    norm_sum: f64,
}

impl ProductForm {
    pub fn new(pmf: &[f64]) -> Result<Self> {
        validate_pmf(pmf, MAX_PRODUCT_FORM_ITEMS)?;
        let log_pmf: Vec<f64> = pmf.iter().map(|p| p.ln()).collect();
        let n = pmf.len();
        let mut max_log = f64::NEG_INFINITY;
        for perm in (0..n).permutations(n) {
            let lw = log_weight(&log_pmf, &perm);
            if lw > max_log {
                max_log = lw;
            }
        }
        let mut norm_sum = 0.0;
        for perm in (0..n).permutations(n) {
            norm_sum += (log_weight(&log_pmf, &perm) - max_log).exp();
        }
        Ok(Self { pmf: pmf.to_vec(), log_pmf, max_log, norm_sum })
    }

    pub fn n(&self) -> usize {
        self.pmf.len()
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    /// Probability of the state where item `j+1` sits at position
    /// `positions[j]`; `positions` must be a permutation of `1..=N`.
    pub fn prob_of_positions(&self, positions: &[u64]) -> Result<f64> {
        let perm = positions_to_perm(positions, self.n())?;
        let lw = log_weight(&self.log_pmf, &perm);
        Ok((lw - self.max_log).exp() / self.norm_sum)
    }

    /// Probability of the state listing items front to back.
    pub fn prob_of_order(&self, order: &[u64]) -> Result<f64> {
        self.prob_of_positions(&order_to_positions(order, self.n())?)
    }

    /// Stationary search-cost tail `Pr[C > x]`: the expected request
    /// mass sitting beyond position `x`.
    pub fn cost_tail(&self, x: u64) -> f64 {
        self.average(|perm| {
            perm.iter()
                .enumerate()
                .filter(|&(_, &pos)| (pos + 1) as u64 > x)
                .map(|(item, _)| self.pmf[item])
                .sum()
        })
    }

    /// `Pr[max over items 1..=top of position > x]` at stationarity.
    pub fn max_position_tail(&self, top: usize, x: u64) -> f64 {
        assert!(top >= 1 && top <= self.n());
        self.average(|perm| {
            let beyond = perm[..top].iter().any(|&pos| (pos + 1) as u64 > x);
            if beyond {
                1.0
            } else {
                0.0
            }
        })
    }

    fn average(&self, mut statistic: impl FnMut(&[usize]) -> f64) -> f64 {
        let n = self.n();
        let mut acc = 0.0;
        for perm in (0..n).permutations(n) {
            let w = (log_weight(&self.log_pmf, &perm) - self.max_log).exp();
            acc += w * statistic(&perm);
        }
        acc / self.norm_sum
    }
}

/// `perm[j]` = zero-based position of item `j+1`.
fn log_weight(log_pmf: &[f64], perm: &[usize]) -> f64 {
    perm.iter()
        .zip(log_pmf)
        .map(|(&pos, &lp)| -((pos + 1) as f64) * lp)
        .sum()
}

fn positions_to_perm(positions: &[u64], n: usize) -> Result<Vec<usize>> {
    if positions.len() != n {
        return Err(Error::InvalidParameter(format!(
            "expected {n} positions, got {}",
            positions.len()
        )));
    }
    let mut seen = vec![false; n];
    let mut perm = vec![0usize; n];
    for (j, &pos) in positions.iter().enumerate() {
        if pos < 1 || pos > n as u64 || seen[(pos - 1) as usize] {
            return Err(Error::InvalidParameter(format!(
                "positions must form a permutation of 1..={n}"
            )));
        }
        seen[(pos - 1) as usize] = true;
        perm[j] = (pos - 1) as usize;
    }
    Ok(perm)
}

fn order_to_positions(order: &[u64], n: usize) -> Result<Vec<u64>> {
    if order.len() != n {
        return Err(Error::InvalidParameter(format!(
            "expected {n} items, got {}",
            order.len()
        )));
    }
    let mut positions = vec![0u64; n];
    for (idx, &item) in order.iter().enumerate() {
        if item < 1 || item > n as u64 || positions[(item - 1) as usize] != 0 {
            return Err(Error::InvalidParameter(format!(
                "order must be a permutation of items 1..={n}"
            )));
        }
        positions[(item - 1) as usize] = idx as u64 + 1;
    }
    Ok(positions)
}

/// One-call convenience for `Pr[C > x]` at stationarity.
pub fn stationary_cost_tail(pmf: &[f64], x: u64) -> Result<f64> {
    Ok(ProductForm::new(pmf)?.cost_tail(x))
}

/// Stationary law obtained by solving the explicit transposition
/// chain; the independent oracle for [`ProductForm`].
#[derive(Debug, Clone)]
pub struct StationaryLaw {
    orders: Vec<Vec<u64>>,
    probs: Vec<f64>,
    index: HashMap<Vec<u64>, usize>,
}

impl StationaryLaw {
    pub fn orders(&self) -> &[Vec<u64>] {
        &self.orders
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob_of_order(&self, order: &[u64]) -> Option<f64> {
        self.index.get(order).map(|&i| self.probs[i])
    }

    pub fn cost_tail(&self, pmf: &[f64], x: u64) -> f64 {
        self.orders
            .iter()
            .zip(&self.probs)
            .map(|(order, &p)| {
                let mass: f64 = order
                    .iter()
                    .enumerate()
                    .filter(|&(idx, _)| (idx + 1) as u64 > x)
                    .map(|(_, &item)| pmf[(item - 1) as usize])
                    .sum();
                p * mass
            })
            .sum()
    }
}

/// Build the `N!`-state transposition chain (a request for the item
/// at position `k > 1` swaps it with position `k-1`) and solve for
/// its stationary law.
pub fn brute_force_stationary(pmf: &[f64]) -> Result<StationaryLaw> {
    validate_pmf(pmf, MAX_BRUTE_FORCE_ITEMS)?;
    let n = pmf.len();
    let orders: Vec<Vec<u64>> = (1..=n as u64).permutations(n).collect();
    let index: HashMap<Vec<u64>, usize> = orders
        .iter()
        .enumerate()
        .map(|(i, o)| (o.clone(), i))
        .collect();
    let mut rows = Vec::with_capacity(orders.len());
    for order in &orders {
        let mut row: Vec<(usize, f64)> = Vec::new();
        let mut stay = 0.0;
        for (idx, &item) in order.iter().enumerate() {
            let p = pmf[(item - 1) as usize];
            if idx == 0 {
                stay += p;
            } else {
                let mut target = order.clone();
                target.swap(idx - 1, idx);
                row.push((index[&target], p));
            }
        }
        if stay > 0.0 {
            row.push((index[order.as_slice()], stay));
        }
        rows.push(row);
    }
    let probs = JumpChain::new(rows)?.stationary()?;
    Ok(StationaryLaw { orders, probs, index })
}
