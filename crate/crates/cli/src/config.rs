//! Run configuration shared by every subcommand.
//!
//! Each experiment reads the subset of fields it needs. Values come
//! from three layers: built-in defaults, then command-line flags, then
//! a `key = value` config file, each layer overriding the one before.

use std::path::{Path, PathBuf};

use solist_core::Policy;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Label written into the manifest; not used for computation.
    pub name: String,
    /// Request law description, e.g. `kind=geometric nu=0.5`.
    pub dist: String,
    pub policy: Policy,
    /// Requests per replication, burn-in included.
    pub horizon: u64,
    /// Fraction of the horizon discarded before recording.
    pub burn_in: f64,
    /// Tail evaluation points, strictly increasing.
    pub x_grid: Vec<u64>,
    pub replications: u32,
    /// Base seed; replication seeds are derived streams. Required by
    /// stochastic subcommands, ignored by exact ones.
    pub seed: Option<u64>,
    pub out_dir: PathBuf,
    /// Jump events for the exclusion and coupling runs.
    pub events: u64,
    /// Particle count of the exclusion process.
    pub particles: usize,
    /// Left-to-right rate ratio of the exclusion process.
    pub beta: f64,
    /// Front-class size of the coupled run.
    pub threshold: u64,
    /// Coupled tail grid reaches `threshold + x_span`.
    pub x_span: u64,
    /// Scale for the automatic pivot `y = ceil(epsilon * x / ln x)`.
    pub epsilon: f64,
    /// Explicit pivot overriding the automatic choice.
    pub pivot: Option<u64>,
    /// Power-law regime cap: tail points must satisfy `x <= gamma * n`.
    pub gamma: f64,
    /// Batches for the exclusion occupancy error bars.
    pub batches: u32,
    /// Write the per-event log of the first coupled replication.
    pub event_log: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            name: "run".into(),
            dist: String::new(),
            policy: Policy::Transposition,
            horizon: 1_000_000,
            burn_in: 0.5,
            x_grid: vec![1, 2, 4, 8, 16],
            replications: 8,
            seed: None,
            out_dir: PathBuf::from("out"),
            events: 1_000_000,
            particles: 2,
            beta: 0.5,
            threshold: 3,
            x_span: 10,
            epsilon: 0.5,
            pivot: None,
            gamma: 0.5,
            batches: 32,
            event_log: false,
        }
    }
}

impl RunConfig {
    /// Apply one `key = value` assignment. Keys match the long flag
    /// names with `-` or `_` accepted interchangeably.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.replace('-', "_");
        match key.as_str() {
            "name" => self.name = value.to_string(),
            "dist" => self.dist = value.to_string(),
            "policy" => self.policy = value.parse().map_err(core_config)?,
            "horizon" => self.horizon = parse_int(&key, value)?,
            "burn_in" => self.burn_in = parse_float(&key, value)?,
            "x_grid" => self.x_grid = parse_x_grid(value)?,
            "replications" => self.replications = parse_int(&key, value)?,
            "seed" => self.seed = Some(parse_int(&key, value)?),
            "out" => self.out_dir = PathBuf::from(value),
            "events" => self.events = parse_int(&key, value)?,
            "particles" => self.particles = parse_int(&key, value)?,
            "beta" => self.beta = parse_float(&key, value)?,
            "threshold" => self.threshold = parse_int(&key, value)?,
            "x_span" => self.x_span = parse_int(&key, value)?,
            "epsilon" => self.epsilon = parse_float(&key, value)?,
            "y" => self.pivot = Some(parse_int(&key, value)?),
            "gamma" => self.gamma = parse_float(&key, value)?,
            "batches" => self.batches = parse_int(&key, value)?,
            "event_log" => {
                self.event_log = value.parse().map_err(|_| {
                    CliError::Config(format!("event_log must be true or false, got `{value}`"))
                })?
            }
            other => return Err(CliError::Config(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Overlay assignments from a config file: one `key = value` per
    /// line, `#` comments and blank lines ignored.
    pub fn load_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)?;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Config(format!(
                    "{}:{}: expected key = value, got `{line}`",
                    path.display(),
                    lineno + 1
                ))
            })?;
            self.apply(key.trim(), value.trim())
                .map_err(|e| CliError::Config(format!("{}:{}: {e}", path.display(), lineno + 1)))?;
        }
        Ok(())
    }

    /// Range checks shared by all subcommands. Field-specific presence
    /// requirements stay with the command handlers.
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(CliError::Config("horizon must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.burn_in) {
            return Err(CliError::Config(format!(
                "burn_in must lie in [0, 1), got {}",
                self.burn_in
            )));
        }
        if self.x_grid.is_empty() {
            return Err(CliError::Config("x_grid must not be empty".into()));
        }
        if self.x_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CliError::Config(
                "x_grid must be strictly increasing".into(),
            ));
        }
        if self.replications == 0 {
            return Err(CliError::Config("replications must be at least 1".into()));
        }
        if self.events == 0 {
            return Err(CliError::Config("events must be at least 1".into()));
        }
        if self.particles == 0 {
            return Err(CliError::Config("particles must be at least 1".into()));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(CliError::Config(format!(
                "beta must lie in (0, 1), got {}",
                self.beta
            )));
        }
        if self.threshold == 0 {
            return Err(CliError::Config("threshold must be at least 1".into()));
        }
        if self.x_span == 0 {
            return Err(CliError::Config("x_span must be at least 1".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(CliError::Config(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(CliError::Config(format!(
                "gamma must lie in (0, 1], got {}",
                self.gamma
            )));
        }
        if self.batches < 2 {
            return Err(CliError::Config("batches must be at least 2".into()));
        }
        Ok(())
    }

    pub fn require_dist(&self) -> Result<&str> {
        if self.dist.is_empty() {
            return Err(CliError::Config(
                "a request law is required: pass --dist or set dist in the config file".into(),
            ));
        }
        Ok(&self.dist)
    }

    pub fn require_seed(&self) -> Result<u64> {
        self.seed.ok_or_else(|| {
            CliError::Config(
                "a seed is required: pass --seed or set seed in the config file".into(),
            )
        })
    }

    /// All assignments in a fixed order, replayable through
    /// [`RunConfig::apply`].
    pub fn assignments(&self) -> Vec<(&'static str, String)> {
        let policy = match self.policy {
            Policy::Transposition => "transposition",
            Policy::MoveToFront => "move_to_front",
            Policy::Static => "static",
        };
        let grid = self
            .x_grid
            .iter()
            .map(|x| x.to_string())
            .collect::<Vec<_>>()
            .join(",");
        let mut out = vec![
            ("name", self.name.clone()),
            ("dist", self.dist.clone()),
            ("policy", policy.to_string()),
            ("horizon", self.horizon.to_string()),
            ("burn_in", self.burn_in.to_string()),
            ("x_grid", grid),
            ("replications", self.replications.to_string()),
            ("out", self.out_dir.display().to_string()),
            ("events", self.events.to_string()),
            ("particles", self.particles.to_string()),
            ("beta", self.beta.to_string()),
            ("threshold", self.threshold.to_string()),
            ("x_span", self.x_span.to_string()),
            ("epsilon", self.epsilon.to_string()),
            ("gamma", self.gamma.to_string()),
            ("batches", self.batches.to_string()),
            ("event_log", self.event_log.to_string()),
        ];
        if let Some(seed) = self.seed {
            out.push(("seed", seed.to_string()));
        }
        if let Some(y) = self.pivot {
            out.push(("y", y.to_string()));
        }
        out
    }
}

fn core_config(e: solist_core::Error) -> CliError {
    CliError::Config(e.to_string())
}

fn parse_int<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| CliError::Config(format!("{key}=`{value}` is not a valid integer")))
}

fn parse_float(key: &str, value: &str) -> Result<f64> {
    let v: f64 = value
        .parse()
        .map_err(|_| CliError::Config(format!("{key}=`{value}` is not a number")))?;
    if !v.is_finite() {
        return Err(CliError::Config(format!("{key} must be finite, got {v}")));
    }
    Ok(v)
}

/// Grid syntax: `12` (single point), `4..14` (inclusive, step one),
/// `10..100..10` (inclusive with step), or `1,2,5,9` (explicit list).
pub fn parse_x_grid(s: &str) -> Result<Vec<u64>> {
    let s = s.trim();
    if s.is_empty() {
        return Err(CliError::Config("x_grid must not be empty".into()));
    }
    let grid: Vec<u64> = if let Some((start, rest)) = s.split_once("..") {
        let start: u64 = parse_int("x_grid", start)?;
        let (end, step) = match rest.split_once("..") {
            Some((end, step)) => (
                parse_int::<u64>("x_grid", end)?,
                parse_int::<u64>("x_grid", step)?,
            ),
            None => (parse_int::<u64>("x_grid", rest)?, 1),
        };
        if step == 0 {
            return Err(CliError::Config("x_grid step must be positive".into()));
        }
        if end < start {
            return Err(CliError::Config(format!(
                "x_grid range is empty: {start}..{end}"
            )));
        }
        (start..=end).step_by(step as usize).collect()
    } else {
        s.split(',')
            .map(|piece| parse_int("x_grid", piece.trim()))
            .collect::<Result<_>>()?
    };
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CliError::Config(
            "x_grid must be strictly increasing".into(),
        ));
    }
    Ok(grid)
}

/// Seed for stream `stream` under base seed `base`: one mixing round
/// of splitmix64, so replications get decorrelated but reproducible
/// generators.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
