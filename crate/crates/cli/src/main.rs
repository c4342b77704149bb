//! `solist`: experiment runner for self-organizing list dynamics.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use solist_cli::config::RunConfig;
use solist_cli::error::Result;
use solist_cli::experiments::{
    choose_pivot, cost_tail_bound, exact_cost_tail, optimality_ratio, run_caep, run_couple,
    simulate_cost_tail, TailEstimate,
};
use solist_cli::output;
use solist_core::RequestDistribution;

#[derive(Parser)]
#[command(
    name = "solist",
    version,
    about = "Search-cost experiments for self-organizing lists"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Sample the stationary search-cost tail under a list policy.
    Simulate(SimulateArgs),
    /// Exact search-cost tail for small finite request laws.
    Exact(ExactArgs),
    /// Exclusion-process occupancy versus its closed-form law.
    Caep(CaepArgs),
    /// Coupled two-list run with the position-domination audit.
    Couple(CoupleArgs),
    /// Log-scale comparison of the cost tail against the request tail.
    Ratio(RatioArgs),
    /// Analytic union bound on the cost tail.
    Bound(BoundArgs),
}

/// Flags shared by every subcommand.
#[derive(Args)]
struct CommonArgs {
    /// Run label recorded in the manifest.
    #[arg(long)]
    name: Option<String>,
    /// Output directory for CSV tables, manifest, and plot script.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Config file of `key = value` lines; its entries override flags.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Request law, e.g. "kind=geometric nu=0.5".
    #[arg(long)]
    dist: Option<String>,
    /// transposition, move_to_front, or static.
    #[arg(long)]
    policy: Option<String>,
    /// Requests per replication, burn-in included.
    #[arg(long)]
    horizon: Option<u64>,
    /// Fraction of the horizon discarded before recording.
    #[arg(long)]
    burn_in: Option<f64>,
    /// Tail points: "a..b", "a..b..step", or "v1,v2,...".
    #[arg(long)]
    x_grid: Option<String>,
    #[arg(long)]
    replications: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct ExactArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Request law with finite support, e.g. "kind=geometric nu=0.5 truncate_at=6".
    #[arg(long)]
    dist: Option<String>,
    /// transposition or static.
    #[arg(long)]
    policy: Option<String>,
    /// Tail points: "a..b", "a..b..step", or "v1,v2,...".
    #[arg(long)]
    x_grid: Option<String>,
}

#[derive(Args)]
struct CaepArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Particle count.
    #[arg(long)]
    particles: Option<usize>,
    /// Right-to-left rate ratio, in (0, 1).
    #[arg(long)]
    beta: Option<f64>,
    /// Jump events to simulate, burn-in included.
    #[arg(long)]
    events: Option<u64>,
    /// Batches behind the error bars.
    #[arg(long)]
    batches: Option<u32>,
    /// Fraction of events discarded before recording.
    #[arg(long)]
    burn_in: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct CoupleArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Request law, e.g. "kind=geometric nu=0.5".
    #[arg(long)]
    dist: Option<String>,
    /// Front-class size.
    #[arg(long)]
    threshold: Option<u64>,
    /// Ticks per replication, burn-in included.
    #[arg(long)]
    events: Option<u64>,
    #[arg(long)]
    replications: Option<u32>,
    /// Fraction of ticks discarded before recording.
    #[arg(long)]
    burn_in: Option<f64>,
    /// Depth grid reaches threshold + x_span.
    #[arg(long)]
    x_span: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Write the per-event log of the first replication.
    #[arg(long)]
    event_log: bool,
}

#[derive(Args)]
struct RatioArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Request law, e.g. "kind=power_law alpha=2 truncate_at=200".
    #[arg(long)]
    dist: Option<String>,
    /// transposition, move_to_front, or static.
    #[arg(long)]
    policy: Option<String>,
    /// Requests per replication when the run needs sampling.
    #[arg(long)]
    horizon: Option<u64>,
    #[arg(long)]
    burn_in: Option<f64>,
    /// Tail points: "a..b", "a..b..step", or "v1,v2,...".
    #[arg(long)]
    x_grid: Option<String>,
    #[arg(long)]
    replications: Option<u32>,
    /// Power-law regime cap: keep points with x <= gamma * n.
    #[arg(long)]
    gamma: Option<f64>,
    /// Needed only when the run falls back to sampling.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct BoundArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Request law, e.g. "kind=geometric nu=0.5".
    #[arg(long)]
    dist: Option<String>,
    /// Bound evaluation points: "a..b", "a..b..step", or "v1,v2,...".
    #[arg(long)]
    x_grid: Option<String>,
    /// Pivot scale for y = ceil(epsilon * x / ln x).
    #[arg(long)]
    epsilon: Option<f64>,
    /// Fixed pivot overriding the automatic choice.
    #[arg(long)]
    y: Option<u64>,
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Cmd::Simulate(a) => cmd_simulate(a),
        Cmd::Exact(a) => cmd_exact(a),
        Cmd::Caep(a) => cmd_caep(a),
        Cmd::Couple(a) => cmd_couple(a),
        Cmd::Ratio(a) => cmd_ratio(a),
        Cmd::Bound(a) => cmd_bound(a),
    }
}

/// Set `key` when the flag was given; config-file entries applied
/// later still win.
fn flag<T: ToString>(cfg: &mut RunConfig, key: &str, value: &Option<T>) -> Result<()> {
    if let Some(v) = value {
        cfg.apply(key, &v.to_string())?;
    }
    Ok(())
}

/// Defaults, then flags, then the config file.
fn finish(cfg: &mut RunConfig, common: &CommonArgs) -> Result<()> {
    flag(cfg, "name", &common.name)?;
    if let Some(out) = &common.out {
        cfg.apply("out", &out.display().to_string())?;
    }
    if let Some(path) = &common.config {
        cfg.load_file(path)?;
    }
    cfg.validate()
}

/// Create the output directory and its run-independent files.
fn prepare_out(cfg: &RunConfig, subcommand: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(&cfg.out_dir)?;
    output::write_manifest(&cfg.out_dir, cfg, subcommand)?;
    output::write_plot_script(&cfg.out_dir)?;
    Ok(cfg.out_dir.clone())
}

fn parse_dist(cfg: &RunConfig) -> Result<RequestDistribution> {
    Ok(cfg.require_dist()?.parse()?)
}

fn print_tail_rows(rows: &[TailEstimate], dist: &RequestDistribution) {
    for r in rows {
        let mut notes = Vec::new();
        if !r.reliable {
            notes.push("few exceedances");
        }
        if !r.stationary_ok {
            notes.push("halves drifted");
        }
        let note = if notes.is_empty() {
            String::new()
        } else {
            format!("  [{}]", notes.join(", "))
        };
        println!(
            "x={:<6} Pr[C>x] = {:.6e} +- {:.2e}   Pr[R>x] = {:.6e}{}",
            r.x,
            r.value,
            r.half_width,
            dist.tail(r.x),
            note
        );
    }
}

fn cmd_simulate(a: SimulateArgs) -> Result<()> {
    let mut cfg = RunConfig::default();
    flag(&mut cfg, "dist", &a.dist)?;
    flag(&mut cfg, "policy", &a.policy)?;
    flag(&mut cfg, "horizon", &a.horizon)?;
    flag(&mut cfg, "burn_in", &a.burn_in)?;
    flag(&mut cfg, "x_grid", &a.x_grid)?;
    flag(&mut cfg, "replications", &a.replications)?;
    flag(&mut cfg, "seed", &a.seed)?;
    finish(&mut cfg, &a.common)?;

    let dist = parse_dist(&cfg)?;
    let seed = cfg.require_seed()?;
    let rows = simulate_cost_tail(
        &dist,
        cfg.policy,
        cfg.horizon,
        cfg.burn_in,
        &cfg.x_grid,
        cfg.replications,
        seed,
    )?;
    let dir = prepare_out(&cfg, "simulate")?;
    let path = output::write_cost_tail(&dir, &rows, &dist)?;
    print_tail_rows(&rows, &dist);
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_exact(a: ExactArgs) -> Result<()> {
    let mut cfg = RunConfig::default();
    flag(&mut cfg, "dist", &a.dist)?;
    flag(&mut cfg, "policy", &a.policy)?;
    flag(&mut cfg, "x_grid", &a.x_grid)?;
    finish(&mut cfg, &a.common)?;

    let dist = parse_dist(&cfg)?;
    let rows = exact_cost_tail(&dist, cfg.policy, &cfg.x_grid)?;
    let dir = prepare_out(&cfg, "exact")?;
    let path = output::write_cost_tail(&dir, &rows, &dist)?;
    print_tail_rows(&rows, &dist);
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_caep(a: CaepArgs) -> Result<()> {
    let mut cfg = RunConfig::default();
    flag(&mut cfg, "particles", &a.particles)?;
    flag(&mut cfg, "beta", &a.beta)?;
    flag(&mut cfg, "events", &a.events)?;
    flag(&mut cfg, "batches", &a.batches)?;
    flag(&mut cfg, "burn_in", &a.burn_in)?;
    flag(&mut cfg, "seed", &a.seed)?;
    finish(&mut cfg, &a.common)?;

    let seed = cfg.require_seed()?;
    let report = run_caep(
        cfg.particles,
        cfg.beta,
        cfg.events,
        cfg.batches,
        cfg.burn_in,
        seed,
    )?;
    let dir = prepare_out(&cfg, "caep")?;
    let path = output::write_caep(&dir, &report)?;
    let worst = report
        .rows
        .iter()
        .map(|r| (r.empirical - r.expected).abs())
        .fold(0.0f64, f64::max);
    println!(
        "{} particles, beta={}, {} bins, largest |empirical - expected| = {:.3e}",
        report.particles,
        report.beta,
        report.rows.len(),
        worst
    );
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_couple(a: CoupleArgs) -> Result<()> {
    let mut cfg = RunConfig::default();
    flag(&mut cfg, "dist", &a.dist)?;
    flag(&mut cfg, "threshold", &a.threshold)?;
    flag(&mut cfg, "events", &a.events)?;
    flag(&mut cfg, "replications", &a.replications)?;
    flag(&mut cfg, "burn_in", &a.burn_in)?;
    flag(&mut cfg, "x_span", &a.x_span)?;
    flag(&mut cfg, "seed", &a.seed)?;
    if a.event_log {
        cfg.apply("event_log", "true")?;
    }
    finish(&mut cfg, &a.common)?;

    let dist = parse_dist(&cfg)?;
    let seed = cfg.require_seed()?;
    let report = run_couple(
        &dist,
        cfg.threshold,
        cfg.events,
        cfg.replications,
        cfg.burn_in,
        cfg.x_span,
        seed,
        cfg.event_log,
    )?;
    let dir = prepare_out(&cfg, "couple")?;
    let paths = output::write_couple(&dir, &report)?;
    println!(
        "threshold {}: left rate {:.4e} (expect {:.4e}), right rate {:.4e} (expect {:.4e})",
        report.threshold,
        report.rates.left_mean,
        report.rates.left_expected,
        report.rates.right_mean,
        report.rates.right_expected
    );
    for r in &report.rows {
        println!(
            "x={:<6} Pr[max X > x] = {:.6e} +- {:.2e}   bound = {:.6e}",
            r.x, r.empirical, r.std_err, r.bound
        );
    }
    for p in paths {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn cmd_ratio(a: RatioArgs) -> Result<()> {
    let mut cfg = RunConfig::default();
    flag(&mut cfg, "dist", &a.dist)?;
    flag(&mut cfg, "policy", &a.policy)?;
    flag(&mut cfg, "horizon", &a.horizon)?;
    flag(&mut cfg, "burn_in", &a.burn_in)?;
    flag(&mut cfg, "x_grid", &a.x_grid)?;
    flag(&mut cfg, "replications", &a.replications)?;
    flag(&mut cfg, "gamma", &a.gamma)?;
    flag(&mut cfg, "seed", &a.seed)?;
    finish(&mut cfg, &a.common)?;

    let dist = parse_dist(&cfg)?;
    let report = optimality_ratio(
        &dist,
        cfg.policy,
        &cfg.x_grid,
        cfg.horizon,
        cfg.burn_in,
        cfg.replications,
        cfg.gamma,
        cfg.seed,
    )?;
    let dir = prepare_out(&cfg, "ratio")?;
    let path = output::write_ratio(&dir, &report)?;
    if let Some(cut) = report.truncated_at {
        println!("infinite law cut off at {cut} items (tail below 1e-12)");
    }
    for r in &report.rows {
        match (&r.ratio, &r.excluded) {
            (Some(ratio), _) => println!(
                "x={:<6} ratio = {:.6} +- {:.4}   cost_dominates = {}",
                r.x, ratio, r.ratio_half_width, r.cost_dominates
            ),
            (None, Some(reason)) => println!("x={:<6} excluded: {reason}", r.x),
            (None, None) => unreachable!("row without ratio must carry a reason"),
        }
    }
    match report.spearman {
        Some(s) => println!("spearman(ratio, x) = {s:.4}"),
        None => println!("spearman(ratio, x): not enough informative rows"),
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_bound(a: BoundArgs) -> Result<()> {
    let mut cfg = RunConfig::default();
    flag(&mut cfg, "dist", &a.dist)?;
    flag(&mut cfg, "x_grid", &a.x_grid)?;
    flag(&mut cfg, "epsilon", &a.epsilon)?;
    flag(&mut cfg, "y", &a.y)?;
    finish(&mut cfg, &a.common)?;

    let dist = parse_dist(&cfg)?;
    let mut rows = Vec::with_capacity(cfg.x_grid.len());
    for &x in &cfg.x_grid {
        let y = cfg.pivot.unwrap_or_else(|| choose_pivot(x, cfg.epsilon));
        rows.push(cost_tail_bound(&dist, x, y)?);
    }
    let dir = prepare_out(&cfg, "bound")?;
    let path = output::write_bound(&dir, &rows)?;
    for r in &rows {
        println!(
            "x={:<6} y={:<4} bound = {:.6e}   Pr[R>x] = {:.6e}",
            r.x,
            r.y,
            r.total(),
            r.request_tail
        );
    }
    println!("wrote {}", path.display());
    Ok(())
}
