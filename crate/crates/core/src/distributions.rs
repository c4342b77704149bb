//! Request distributions over the positive integers.
//!
//! Every distribution here is a probability mass function on items
//! `1, 2, 3, ...` that is positive and non-increasing in the item
//! index. That monotonicity is what downstream consumers rely on:
//! search-cost bounds compare an item's mass against its successor's,
//! and the coupling construction thins streams by the ratio
//! `pmf(i+1) / pmf(i)`, which must not exceed one.
//!
//! Infinite-support families expose exact tails rather than partial
//! sums: the power-law tail is evaluated with an Euler-Maclaurin
//! expansion, the geometric tail in closed form. Sampling is by
//! inverse CDF. The power law keeps a growing cumulative table behind
//! a lock (extended in full before publication, so concurrent readers
//! never observe a partial entry) and falls back to analytic tail
//! inversion past the table cap, so arbitrarily deep tail samples stay
//! exact without unbounded memory.

use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, RwLock};

use rand::Rng;

use crate::error::{Error, Result};

/// Hard ceiling on the cached cumulative table of an infinite-support
/// distribution. Past this, sampling inverts the analytic tail.
const CUM_TABLE_CAP: usize = 1 << 21;

/// Initial cumulative table size on first use.
const CUM_TABLE_SEED: usize = 1 << 10;

/// Below this index the tail sum is done term by term; the
/// Euler-Maclaurin expansion takes over at or above it, where its
/// first omitted term is negligible at f64 precision.
const SERIES_PIVOT: u64 = 128;

/// Item indices are clamped here when inverting a tail so deep that
/// the index would overflow practical arithmetic. The tail mass beyond
/// the clamp is below 1e-9 for every supported parameter.
const QUANTILE_CLAMP: u64 = 1 << 62;

/// Sum of `i^(-alpha)` over `i >= m`, requiring `alpha > 1`.
///
/// Terms up to [`SERIES_PIVOT`] are summed directly; the remainder is
/// the Euler-Maclaurin expansion at the pivot with Bernoulli
/// corrections through order six. The first omitted term is below
/// 1e-18 relative for `alpha <= 16`.
fn power_tail_sum(alpha: f64, m: u64) -> f64 {
    let start = m.max(1);
    let pivot = start.max(SERIES_PIVOT);
    let mut sum = 0.0;
    for i in start..pivot {
        sum += (i as f64).powf(-alpha);
    }
    let x = pivot as f64;
    let head = x.powf(1.0 - alpha) / (alpha - 1.0) + 0.5 * x.powf(-alpha);
    let b2 = alpha * x.powf(-alpha - 1.0) / 12.0;
    let b4 = alpha * (alpha + 1.0) * (alpha + 2.0) * x.powf(-alpha - 3.0) / 720.0;
    let b6 = alpha
        * (alpha + 1.0)
        * (alpha + 2.0)
        * (alpha + 3.0)
        * (alpha + 4.0)
        * x.powf(-alpha - 5.0)
        / 30240.0;
    sum + head + b2 - b4 + b6
}

#[derive(Debug, Clone)]
enum Kind {
    PowerLaw {
        alpha: f64,
        /// Normalizing constant: `pmf(i) = norm * i^(-alpha)`.
        norm: f64,
        /// Cumulative table `cum[k] = Pr[R <= k+1]`, grown on demand.
        cum: Arc<RwLock<Vec<f64>>>,
    },
    Geometric {
        nu: f64,
    },
    Explicit {
        pmf: Arc<Vec<f64>>,
        /// `suffix[x] = Pr[R > x]`, length `N + 1`, exact backward sums.
        suffix: Arc<Vec<f64>>,
    },
    Truncated {
        base: Box<RequestDistribution>,
        n: u64,
        /// `Pr[base <= n]`, the conditioning mass.
        keep: f64,
    },
}

/// Shape class of a request law, truncation unwrapped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    PowerLaw,
    Geometric,
    Explicit,
}

/// A positive, non-increasing probability mass function on items
/// `1, 2, 3, ...`, with exact tails and inverse-CDF sampling.
#[derive(Debug, Clone)]
pub struct RequestDistribution {
    kind: Kind,
}

impl RequestDistribution {
    /// Power law `pmf(i) = c * i^(-alpha)` with `alpha > 1` and `c`
    /// the normalizing constant.
    pub fn power_law(alpha: f64) -> Result<Self> {
        if !alpha.is_finite() || alpha <= 1.0 {
            return Err(Error::InvalidParameter(format!(
                "power law needs finite alpha > 1, got {alpha}"
            )));
        }
        let norm = 1.0 / power_tail_sum(alpha, 1);
        Ok(Self {
            kind: Kind::PowerLaw {
                alpha,
                norm,
                cum: Arc::new(RwLock::new(Vec::new())),
            },
        })
    }

    /// Geometric `pmf(i) = (1 - nu) * nu^(i-1)` with `0 < nu < 1`.
    pub fn geometric(nu: f64) -> Result<Self> {
        if !nu.is_finite() || nu <= 0.0 || nu >= 1.0 {
            return Err(Error::InvalidParameter(format!(
                "geometric needs 0 < nu < 1, got {nu}"
            )));
        }
        Ok(Self {
            kind: Kind::Geometric { nu },
        })
    }

    /// Finite pmf given explicitly. Entries must be positive, finite,
    /// non-increasing, and sum to one within 1e-12; they are then
    /// renormalized to machine precision.
    pub fn explicit(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidParameter(
                "explicit pmf needs at least one entry".into(),
            ));
        }
        for (k, &w) in weights.iter().enumerate() {
            if !w.is_finite() || w <= 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "explicit pmf entry {} is {}, need positive finite",
                    k + 1,
                    w
                )));
            }
        }
        if let Some(k) = weights.windows(2).position(|w| w[1] > w[0]) {
            return Err(Error::InvalidParameter(format!(
                "explicit pmf increases from item {} to {}: {} < {}",
                k + 1,
                k + 2,
                weights[k],
                weights[k + 1]
            )));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "explicit pmf sums to {sum}, need 1 within 1e-12"
            )));
        }
        let pmf: Vec<f64> = weights.iter().map(|w| w / sum).collect();
        let mut suffix = vec![0.0; pmf.len() + 1];
        for x in (0..pmf.len()).rev() {
            suffix[x] = suffix[x + 1] + pmf[x];
        }
        Ok(Self {
            kind: Kind::Explicit {
                pmf: Arc::new(pmf),
                suffix: Arc::new(suffix),
            },
        })
    }

    /// This distribution conditioned on `{R <= n}`.
    ///
    /// The support must reach `n`: truncating an explicit or already
    /// truncated distribution below its last item is fine, extending
    /// past it is an error.
    pub fn truncate(&self, n: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter(
                "truncation point must be at least 1".into(),
            ));
        }
        if let Some(s) = self.support() {
            if n > s {
                return Err(Error::InvalidParameter(format!(
                    "cannot truncate at {n}: support ends at {s}"
                )));
            }
        }
        let keep = 1.0 - self.tail(n);
        Ok(Self {
            kind: Kind::Truncated {
                base: Box::new(self.clone()),
                n,
                keep,
            },
        })
    }

    /// Largest item with positive mass, or `None` for infinite support.
    pub fn support(&self) -> Option<u64> {
        match &self.kind {
            Kind::PowerLaw { .. } | Kind::Geometric { .. } => None,
            Kind::Explicit { pmf, .. } => Some(pmf.len() as u64),
            Kind::Truncated { n, .. } => Some(*n),
        }
    }

    /// Shape class of the law, looking through any truncation.
    pub fn family(&self) -> Family {
        match &self.kind {
            Kind::PowerLaw { .. } => Family::PowerLaw,
            Kind::Geometric { .. } => Family::Geometric,
            Kind::Explicit { .. } => Family::Explicit,
            Kind::Truncated { base, .. } => base.family(),
        }
    }

    /// `Pr[R = i]` for `i >= 1`; zero outside the support.
    pub fn pmf(&self, i: u64) -> f64 {
        if i == 0 {
            return 0.0;
        }
        match &self.kind {
            Kind::PowerLaw { alpha, norm, .. } => norm * (i as f64).powf(-alpha),
            Kind::Geometric { nu } => (1.0 - nu) * nu.powf((i - 1) as f64),
            Kind::Explicit { pmf, .. } => pmf.get(i as usize - 1).copied().unwrap_or(0.0),
            Kind::Truncated { base, n, keep } => {
                if i <= *n {
                    base.pmf(i) / keep
                } else {
                    0.0
                }
            }
        }
    }

    /// `Pr[R > x]` for `x >= 0`, evaluated directly (not via `1 - cdf`),
    /// so deep tails keep full relative precision.
    pub fn tail(&self, x: u64) -> f64 {
        if x == 0 {
            return 1.0;
        }
        match &self.kind {
            Kind::PowerLaw { alpha, norm, .. } => norm * power_tail_sum(*alpha, x + 1),
            Kind::Geometric { nu } => nu.powf(x as f64),
            Kind::Explicit { suffix, .. } => {
                let idx = (x as usize).min(suffix.len() - 1);
                suffix[idx]
            }
            Kind::Truncated { base, n, keep } => {
                if x >= *n {
                    0.0
                } else {
                    (base.tail(x) - base.tail(*n)) / keep
                }
            }
        }
    }

    /// `pmf(i+1) / pmf(i)`, the mass ratio at `i`. Zero when `i` is the
    /// last supported item; an error when `pmf(i)` is itself zero.
    pub fn ratio(&self, i: u64) -> Result<f64> {
        if i == 0 {
            return Err(Error::InvalidParameter("ratio needs i >= 1".into()));
        }
        if let Some(s) = self.support() {
            if i > s {
                return Err(Error::InvalidParameter(format!(
                    "ratio at {i} undefined: support ends at {s}"
                )));
            }
            if i == s {
                return Ok(0.0);
            }
        }
        Ok(match &self.kind {
            Kind::PowerLaw { alpha, .. } => (i as f64 / (i + 1) as f64).powf(*alpha),
            Kind::Geometric { nu } => *nu,
            Kind::Explicit { pmf, .. } => pmf[i as usize] / pmf[i as usize - 1],
            Kind::Truncated { base, .. } => base.ratio(i)?,
        })
    }

    /// First `n` pmf values, `pmf(1) ..= pmf(n)`.
    pub fn pmf_prefix(&self, n: u64) -> Vec<f64> {
        (1..=n).map(|i| self.pmf(i)).collect()
    }

    /// Draw one item by inverse CDF. Identical generator streams
    /// reproduce identical samples.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let u: f64 = rng.random();
        self.quantile(u)
    }

    /// Smallest item `i` with `Pr[R <= i] >= u`, for `u` in `[0, 1)`.
    fn quantile(&self, u: f64) -> u64 {
        match &self.kind {
            Kind::Geometric { nu } => {
                let i = 1.0 + ((1.0 - u).ln() / nu.ln()).floor();
                if i >= QUANTILE_CLAMP as f64 {
                    QUANTILE_CLAMP
                } else {
                    (i as u64).max(1)
                }
            }
            Kind::Explicit { suffix, .. } => {
                // Smallest i with suffix[i] <= 1 - u; suffix is
                // non-increasing with suffix[N] = 0.
                let target = 1.0 - u;
                let idx = suffix.partition_point(|&s| s > target);
                (idx as u64).max(1)
            }
            Kind::Truncated { base, keep, n } => base.quantile(u * keep).min(*n).max(1),
            Kind::PowerLaw { cum, .. } => self.power_quantile(u, cum),
        }
    }

    fn power_quantile(&self, u: f64, cum: &RwLock<Vec<f64>>) -> u64 {
        {
            let table = cum.read().expect("cumulative table lock poisoned");
            if let Some(i) = Self::table_lookup(&table, u) {
                return i;
            }
        }
        // Not covered: grow the table (bounded), then retry or fall
        // back to analytic inversion of the exact tail.
        self.grow_cum_table(cum, u);
        {
            let table = cum.read().expect("cumulative table lock poisoned");
            if let Some(i) = Self::table_lookup(&table, u) {
                return i;
            }
        }
        self.tail_invert(u)
    }

    fn table_lookup(table: &[f64], u: f64) -> Option<u64> {
        match table.last() {
            Some(&last) if u < last => {
                let idx = table.partition_point(|&c| c < u);
                Some(idx as u64 + 1)
            }
            _ => None,
        }
    }

    /// Double the cumulative table until it covers `u` or hits the cap.
    /// New entries are computed and appended under the write lock in
    /// one step, so readers only ever see complete prefixes.
    fn grow_cum_table(&self, cum: &RwLock<Vec<f64>>, u: f64) {
        let mut table = cum.write().expect("cumulative table lock poisoned");
        while table.last().map_or(true, |&last| last <= u) && table.len() < CUM_TABLE_CAP {
            let new_len = (table.len() * 2).clamp(CUM_TABLE_SEED, CUM_TABLE_CAP);
            let mut acc = table.last().copied().unwrap_or(0.0);
            for i in table.len() + 1..=new_len {
                acc += self.pmf(i as u64);
                table.push(acc);
            }
        }
    }

    /// Smallest `x` with `tail(x) <= 1 - u`, by exponential then binary
    /// search on the exact tail. Only reached past the table cap.
    fn tail_invert(&self, u: f64) -> u64 {
        let target = 1.0 - u;
        let mut lo = CUM_TABLE_CAP as u64; // tail(lo) > target, from the table
        let mut hi = lo;
        loop {
            hi = (hi * 2).min(QUANTILE_CLAMP);
            if self.tail(hi) <= target || hi == QUANTILE_CLAMP {
                break;
            }
            lo = hi;
        }
        while lo + 1 < hi {
            let mid = lo + (hi - lo) / 2;
            if self.tail(mid) <= target {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    }
}

impl fmt::Display for RequestDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            Kind::PowerLaw { alpha, .. } => write!(f, "kind=power_law alpha={alpha}"),
            Kind::Geometric { nu } => write!(f, "kind=geometric nu={nu}"),
            Kind::Explicit { pmf, .. } => {
                write!(f, "kind=explicit explicit=[")?;
                for (k, p) in pmf.iter().enumerate() {
                    if k > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{p}")?;
                }
                write!(f, "]")
            }
            Kind::Truncated { base, n, .. } => write!(f, "{base} truncate_at={n}"),
        }
    }
}

impl FromStr for RequestDistribution {
    type Err = Error;

    /// Parse a whitespace-separated `key=value` description:
    ///
    /// * `kind=power_law alpha=2.0`
    /// * `kind=geometric nu=0.5`
    /// * `kind=explicit explicit=[0.5,0.3,0.2]`
    ///
    /// any of which may append `truncate_at=N`.
    fn from_str(s: &str) -> Result<Self> {
        let mut kind: Option<String> = None;
        let mut alpha: Option<f64> = None;
        let mut nu: Option<f64> = None;
        let mut explicit: Option<Vec<f64>> = None;
        let mut truncate_at: Option<u64> = None;

        for token in tokenize(s) {
            let (key, value) = token.split_once('=').ok_or_else(|| {
                Error::InvalidParameter(format!("distribution token `{token}` is not key=value"))
            })?;
            match key {
                "kind" => kind = Some(value.to_string()),
                "alpha" => alpha = Some(parse_f64(key, value)?),
                "nu" => nu = Some(parse_f64(key, value)?),
                "truncate_at" => {
                    truncate_at = Some(value.parse().map_err(|_| {
                        Error::InvalidParameter(format!("truncate_at=`{value}` is not an integer"))
                    })?)
                }
                "explicit" => {
                    let inner = value
                        .strip_prefix('[')
                        .and_then(|v| v.strip_suffix(']'))
                        .ok_or_else(|| {
                            Error::InvalidParameter(
                                "explicit pmf must be bracketed: explicit=[p1,p2,...]".into(),
                            )
                        })?;
                    let mut entries = Vec::new();
                    for piece in inner.split(',') {
                        entries.push(parse_f64("explicit", piece.trim())?);
                    }
                    explicit = Some(entries);
                }
                other => {
                    return Err(Error::InvalidParameter(format!(
                        "unknown distribution key `{other}`"
                    )))
                }
            }
        }

        let base = match (kind.as_deref(), &explicit) {
            (Some("power_law"), _) => Self::power_law(alpha.ok_or_else(|| {
                Error::InvalidParameter("kind=power_law requires alpha=".into())
            })?)?,
            (Some("geometric"), _) => Self::geometric(
                nu.ok_or_else(|| Error::InvalidParameter("kind=geometric requires nu=".into()))?,
            )?,
            (Some("explicit"), Some(_)) | (None, Some(_)) => {
                Self::explicit(explicit.expect("checked above"))?
            }
            (Some("explicit"), None) => {
                return Err(Error::InvalidParameter(
                    "kind=explicit requires explicit=[p1,p2,...]".into(),
                ))
            }
            (Some(other), _) => {
                return Err(Error::InvalidParameter(format!(
                    "unknown distribution kind `{other}`"
                )))
            }
            (None, None) => {
                return Err(Error::InvalidParameter(
                    "distribution needs kind= or explicit=[...]".into(),
                ))
            }
        };

        match truncate_at {
            Some(n) => base.truncate(n),
            None => Ok(base),
        }
    }
}

/// Split on whitespace, except inside `[...]`, so bracketed lists may
/// contain spaces after commas.
fn tokenize(s: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    let mut depth = 0usize;
    for ch in s.chars() {
        match ch {
            '[' => {
                depth += 1;
                current.push(ch);
            }
            ']' => {
                depth = depth.saturating_sub(1);
                current.push(ch);
            }
            c if c.is_whitespace() && depth == 0 => {
                if !current.is_empty() {
                    tokens.push(std::mem::take(&mut current));
                }
            }
            c if c.is_whitespace() => {}
            c => current.push(c),
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

fn parse_f64(key: &str, value: &str) -> Result<f64> {
    value
        .parse()
        .map_err(|_| Error::InvalidParameter(format!("{key}=`{value}` is not a number")))
}
