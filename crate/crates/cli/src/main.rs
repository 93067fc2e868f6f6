use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use firegrid::estimation::{
    estimate_trajectory, residual_analysis, write_estimates_csv, write_qq_csv,
};
use firegrid::fire::{simulate_trajectory, write_trajectory_csv};
use firegrid::harness::{
    self, replication_streams, sequence_schedule, theorem2_bound, write_outputs,
    write_schedule_csv, ExperimentConfig, RunOptions, BUILTIN_PREFIX,
};
use firegrid::online::{calibrate_lr_threshold, Algorithm, IntervalPolicy};
use firegrid::opf::regret_constants;
use firegrid::rng::{self, tag};

const USAGE_ERROR: u8 = 2;
const RUNTIME_ERROR: u8 = 1;

/// Bushfire-aware power-flow planning: fire simulation, estimation and
/// online regret experiments.
#[derive(Debug, Parser)]
#[command(name = "firegrid", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one fire trajectory and its parameter schedule.
    Simulate(SimulateArgs),
    /// Estimate spread parameters along a simulated trajectory and write
    /// the residual Q-Q pairs.
    #[command(alias = "analyze")]
    Estimate(EstimateArgs),
    /// Run the regret study.
    Experiment(ExperimentArgs),
    /// Print the Lipschitz constants and the regret bound.
    Bound(CommonArgs),
    /// Calibrate the likelihood-ratio alarm level by simulation.
    Calibrate(CalibrateArgs),
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// Config file, or `builtin:ieee11` / `builtin:ieee57`.
    #[arg(long, value_name = "FILE")]
    config: String,
    /// Master seed; overrides the config.
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    /// Number of periods; overrides the config.
    #[arg(long, value_name = "T")]
    horizon: Option<usize>,
    /// Worker threads [default: available parallelism].
    #[arg(long, value_name = "N")]
    threads: Option<usize>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Output directory.
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Parameter sequence to draw.
    #[arg(long, default_value_t = 0)]
    sequence: usize,
    /// Replication within the sequence.
    #[arg(long, default_value_t = 0)]
    rep: usize,
}

#[derive(Debug, Args)]
struct EstimateArgs {
    #[command(flatten)]
    sim: SimulateArgs,
    /// Fewest frontier or burning nodes for a period to enter the Q-Q
    /// analysis.
    #[arg(long, value_name = "N", default_value_t = 30)]
    min_count: u64,
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Output directory.
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Comma-separated algorithms: adaptive, naive, global_average,
    /// likelihood_ratio, clairvoyant.
    #[arg(long, value_name = "LIST", value_delimiter = ',')]
    algorithms: Option<Vec<String>>,
    /// Replications per sequence.
    #[arg(long, value_name = "N")]
    reps: Option<usize>,
    /// Parameter sequences.
    #[arg(long, value_name = "N")]
    sequences: Option<usize>,
    /// Candidate detection intervals.
    #[arg(long, value_name = "POLICY", value_parser = ["exhaustive", "geometric"])]
    interval_policy: Option<String>,
    /// Use the config's full replication counts.
    #[arg(long)]
    full_scale: bool,
    /// Also write the per-step log.
    #[arg(long)]
    step_log: bool,
}

#[derive(Debug, Args)]
struct CalibrateArgs {
    /// Number of periods of the null stream.
    #[arg(long, value_name = "T", default_value_t = 2000)]
    horizon: usize,
    /// Simulated null runs.
    #[arg(long, value_name = "N", default_value_t = 1000)]
    reps: usize,
    /// Target false-alarm rate.
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Master seed.
    #[arg(long, value_name = "U64", default_value_t = 0)]
    seed: u64,
}

/// Error class deciding the exit code.
#[derive(Debug)]
enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<firegrid::Error> for Failure {
    fn from(e: firegrid::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

fn usage(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Usage(e.into())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(USAGE_ERROR)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(RUNTIME_ERROR)
        }
    }
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Simulate(args) => simulate(&args, None),
        Command::Estimate(args) => simulate(&args.sim, Some(args.min_count)),
        Command::Experiment(args) => experiment(&args),
        Command::Bound(args) => bound(&args),
        Command::Calibrate(args) => calibrate(&args),
    }
}

/// Loads the config and applies the shared overrides. Everything that goes
/// wrong here is the caller's input, so it maps to a usage error.
fn load_config(args: &CommonArgs) -> Result<ExperimentConfig, Failure> {
    if !args.config.starts_with(BUILTIN_PREFIX) && !Path::new(&args.config).is_file() {
        return Err(usage(anyhow::anyhow!(
            "config file `{}` not found",
            args.config
        )));
    }
    let mut cfg = ExperimentConfig::load(&args.config).map_err(usage)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(horizon) = args.horizon {
        cfg.horizon = horizon;
        cfg.checkpoints.retain(|&c| c <= horizon);
    }
    if let Some(n) = args.threads {
        if n == 0 {
            return Err(usage(anyhow::anyhow!("--threads must be at least 1")));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the worker pool")?;
    }
    Ok(cfg)
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(())
}

fn simulate(args: &SimulateArgs, qq_min_count: Option<u64>) -> Result<(), Failure> {
    let cfg = load_config(&args.common)?;
    cfg.validate().map_err(usage)?;
    let grid = cfg.grid().context("building the grid")?;
    let schedule = sequence_schedule(&cfg, args.sequence)?;
    let (origins, mut fire_rng) = replication_streams(&cfg, &grid, args.sequence, args.rep)?;
    let trajectory = simulate_trajectory(&grid, &origins, &schedule, cfg.horizon, &mut fire_rng)?;
    create_dir(&args.out)?;
    write_schedule_csv(&args.out.join("schedule.csv"), &schedule)?;
    match qq_min_count {
        None => {
            write_trajectory_csv(&args.out.join("trajectory.csv"), &grid, &trajectory)?;
            let last = trajectory.last().map_or(0, |s| s.count());
            println!(
                "{} periods, {} nodes burning at the end",
                trajectory.len(),
                last
            );
        }
        Some(min_count) => {
            write_estimates_csv(
                &args.out.join("estimates.csv"),
                &estimate_trajectory(&grid, &trajectory),
            )?;
            let series = residual_analysis(&grid, &trajectory, &schedule, min_count)?;
            write_qq_csv(&args.out.join("qq.csv"), &series)?;
            for s in &series {
                println!(
                    "area {} {}: {} residuals, KS {:.4} (1% critical {:.4})",
                    s.area + 1,
                    s.stream.label(),
                    s.residuals.len(),
                    s.ks_statistic,
                    s.ks_critical_1pct()
                );
            }
        }
    }
    Ok(())
}

fn experiment(args: &ExperimentArgs) -> Result<(), Failure> {
    let mut cfg = load_config(&args.common)?;
    if args.full_scale {
        cfg.full_scale();
    }
    if let Some(n) = args.reps {
        cfg.reps = n;
    }
    if let Some(n) = args.sequences {
        cfg.sequences = n;
    }
    if let Some(list) = &args.algorithms {
        cfg.algorithms = list
            .iter()
            .map(|s| s.trim().parse::<Algorithm>())
            .collect::<Result<_, _>>()
            .map_err(usage)?;
    }
    if let Some(p) = &args.interval_policy {
        cfg.interval_policy = p.parse::<IntervalPolicy>().map_err(usage)?;
    }
    cfg.validate().map_err(usage)?;
    let opts = RunOptions {
        step_log: args.step_log,
    };
    let result = harness::run_experiment(&cfg, &opts)?;
    write_outputs(&args.out, &result, &cfg.checkpoints, args.step_log)?;
    for &alg in &cfg.algorithms {
        let (m, se) = result
            .record
            .at(alg, cfg.horizon)
            .expect("horizon is recorded");
        println!(
            "{:<18} R({}) = {:.4} (se {:.4})",
            alg.name(),
            cfg.horizon,
            m,
            se
        );
    }
    println!("{:.1} s, outputs in {}", result.seconds, args.out.display());
    Ok(())
}

fn bound(args: &CommonArgs) -> Result<(), Failure> {
    let cfg = load_config(args)?;
    cfg.validate().map_err(usage)?;
    let grid = cfg.grid().context("building the grid")?;
    let net = cfg.network(&grid).map_err(usage)?;
    let (k_plus, k_minus) = regret_constants(&net);
    let changes = vec![cfg.changes_plus; cfg.areas];
    let changes_minus = vec![cfg.changes_minus; cfg.areas];
    let b = theorem2_bound(
        cfg.horizon,
        &changes,
        &changes_minus,
        cfg.nu_max_plus,
        cfg.nu_max_minus,
        k_plus,
        k_minus,
    );
    println!("K_plus = {k_plus}");
    println!("K_minus = {k_minus}");
    println!(
        "regret bound at T = {} with {} / {} changes, nu_max = {} / {}: {b}",
        cfg.horizon, cfg.changes_plus, cfg.changes_minus, cfg.nu_max_plus, cfg.nu_max_minus
    );
    Ok(())
}

fn calibrate(args: &CalibrateArgs) -> Result<(), Failure> {
    let mut r = rng::stream(args.seed, &[tag::CALIBRATION, args.horizon as u64]);
    let threshold =
        calibrate_lr_threshold(args.horizon, args.reps, args.alpha, &mut r).map_err(usage)?;
    println!("{threshold}");
    Ok(())
}
