//! Stationary distributions of arbitrary finite jump chains.
//!
//! This is the crate's independent cross-check: product-form and other
//! closed-form stationary laws elsewhere are validated against a dense
//! linear solve of the balance equations, which shares no code with
//! the formulas it audits.

use faer::prelude::*;

use crate::error::{Error, Result};

/// Dense solves allocate an n-by-n matrix; this keeps that under
/// roughly half a gigabyte.
pub const MAX_DENSE_STATES: usize = 8192;

/// Residual ceiling for an accepted stationary solution.
pub const RESIDUAL_TOL: f64 = 1e-12;

/// A finite discrete-time jump chain in sparse row form.
#[derive(Debug, Clone)]
pub struct JumpChain {
    rows: Vec<Vec<(usize, f64)>>,
}

impl JumpChain {
    /// `rows[i]` lists `(target, probability)` pairs for state `i`.
    /// Every row must sum to one within 1e-12 with non-negative entries.
    pub fn new(rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::InvalidParameter("chain needs at least one state".into()));
        }
        for (i, row) in rows.iter().enumerate() {
            let mut sum = 0.0;
            for &(j, p) in row {
                if j >= n {
                    return Err(Error::InvalidParameter(format!(
                        "state {i} has transition to {j}, beyond {n} states"
                    )));
                }
                if !(0.0..=1.0 + 1e-12).contains(&p) {
                    return Err(Error::InvalidParameter(format!(
                        "state {i} has transition probability {p}"
                    )));
                }
                sum += p;
            }
            if (sum - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidParameter(format!(
                    "row {i} sums to {sum}, need 1 within 1e-12"
                )));
            }
        }
        Ok(Self { rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Solve the balance equations by dense LU: `pi P = pi` with one
    /// equation replaced by normalization. The result is verified
    /// (non-negative within rounding, residual below
    /// [`RESIDUAL_TOL`]) before being returned, and renormalized to
    /// sum exactly to one.
    pub fn stationary(&self) -> Result<Vec<f64>> {
        let n = self.len();
        if n > MAX_DENSE_STATES {
            return Err(Error::Capacity(format!(
                "{n} states exceeds the dense-solve limit of {MAX_DENSE_STATES}"
            )));
        }
        // A = P^T - I, with the last row replaced by the normalization.
        let mut a = Mat::<f64>::zeros(n, n);
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, p) in row {
                if j < n - 1 {
                    a[(j, i)] += p;
                }
            }
        }
        for i in 0..n - 1 {
            a[(i, i)] -= 1.0;
        }
        for i in 0..n {
            a[(n - 1, i)] = 1.0;
        }
        let mut b = Mat::<f64>::zeros(n, 1);
        b[(n - 1, 0)] = 1.0;

        let solution = a.partial_piv_lu().solve(&b);
        let mut pi: Vec<f64> = (0..n).map(|i| solution[(i, 0)]).collect();

        for (i, &p) in pi.iter().enumerate() {
            if !(p >= -1e-9) {
                return Err(Error::SolveFailed(format!(
                    "state {i} received probability {p}"
                )));
            }
        }
        for p in pi.iter_mut() {
            *p = p.max(0.0);
        }
        let total: f64 = pi.iter().sum();
        if !(total.is_finite() && total > 0.0) {
            return Err(Error::SolveFailed(format!("solution mass is {total}")));
        }
        for p in pi.iter_mut() {
            *p /= total;
        }

        let res = self.residual(&pi);
        if res > RESIDUAL_TOL {
            return Err(Error::SolveFailed(format!(
                "balance residual {res:e} exceeds {RESIDUAL_TOL:e}"
            )));
        }
        Ok(pi)
    }

    /// `max_j |(pi P)_j - pi_j|` for a candidate distribution.
    pub fn residual(&self, pi: &[f64]) -> f64 {
        assert_eq!(pi.len(), self.len());
        let mut out = vec![0.0; self.len()];
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, p) in row {
                out[j] += pi[i] * p;
            }
        }
        out.iter()
            .zip(pi)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}
