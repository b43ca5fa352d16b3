use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use swarm_fdir::harness::export::{
    comparison_csv, curve_csv, export_trial, file_stem, metadata_json, write_file,
};
use swarm_fdir::harness::{
    monte_carlo, named_scenario, run_trial, MonteCarloSummary, Overrides, ScenarioConfig, TrialSummary,
    SCENARIO_NAMES,
};
use swarm_fdir::solver::StartMode;
use swarm_fdir::{Error, Result};

const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "swarm-fdir", version, about = "Range-based integrity monitoring for robot swarms")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a single seeded trial per variant and export its time series.
    Run(RunArgs),
    /// Run many seeded trials per variant and export aggregate curves.
    MonteCarlo(RunArgs),
    /// Monte Carlo over a grid of penalty, noise and start-mode values.
    Sweep(SweepArgs),
    /// List the built-in scenarios.
    ListScenarios,
    /// Check a scenario file and print the resolved configuration.
    ValidateConfig {
        config: PathBuf,
    },
}

#[derive(Debug, Args)]
struct Source {
    /// Built-in scenario name.
    #[arg(long, conflicts_with = "config", required_unless_present = "config")]
    scenario: Option<String>,
    /// Scenario file (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Only run variants whose name contains this string.
    #[arg(long)]
    variant: Option<String>,
}

#[derive(Debug, Args)]
struct Common {
    #[arg(long)]
    nu_max: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    /// Master seed; trial t uses seed + t.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, env = "SWARM_FDIR_OUT_DIR", default_value = "out")]
    out_dir: PathBuf,
    /// Worker threads for running trials (1 runs them sequentially).
    #[arg(long)]
    threads: Option<usize>,
    /// Add per-robot error columns to trial CSVs.
    #[arg(long)]
    per_robot: bool,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    source: Source,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    omega_max: Option<f64>,
    /// warm, cold or reset.
    #[arg(long)]
    start: Option<StartMode>,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    source: Source,
    /// Comma-separated penalty values.
    #[arg(long, value_delimiter = ',')]
    rho: Vec<f64>,
    /// Comma-separated range noise bounds.
    #[arg(long, value_delimiter = ',')]
    omega_max: Vec<f64>,
    /// Comma-separated start modes.
    #[arg(long, value_delimiter = ',')]
    start: Vec<StartMode>,
    #[command(flatten)]
    common: Common,
}

fn main() -> ExitCode {
    ExitCode::from(run_cli(std::env::args_os()))
}

/// Parses and executes a command line, returning the process exit code.
fn run_cli<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config_error() {
                EXIT_CONFIG
            } else {
                EXIT_RUNTIME
            }
        }
    }
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::ListScenarios => {
            for name in SCENARIO_NAMES {
                let s = named_scenario(name)?;
                println!("{:<12} {:>3} variant(s)  {}", s.name, s.variants.len(), s.description);
            }
            Ok(())
        }
        Command::ValidateConfig { config } => {
            let cfg = load_file(&config)?;
            print!("{}", cfg.to_json_pretty());
            println!();
            Ok(())
        }
        Command::Run(a) => {
            let mut configs = resolve(&a.source, &a.common, a.rho, a.omega_max, a.start)?;
            // A single trial can only use extra threads inside the solver.
            let parallel = a.common.threads != Some(1);
            configs.iter_mut().for_each(|c| c.parallel_nodes |= parallel);
            with_threads(a.common.threads, |_| run_single(&configs, &a.common))
        }
        Command::MonteCarlo(a) => {
            let configs = resolve(&a.source, &a.common, a.rho, a.omega_max, a.start)?;
            with_threads(a.common.threads, |par| run_monte_carlo("monte-carlo", &configs, &a.common, par))
        }
        Command::Sweep(a) => {
            let base = resolve(&a.source, &a.common, None, None, None)?;
            let configs = sweep_grid(&base, &a.rho, &a.omega_max, &a.start)?;
            with_threads(a.common.threads, |par| run_monte_carlo("sweep", &configs, &a.common, par))
        }
    }
}

fn load_file(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    ScenarioConfig::from_json(&text)
}

fn resolve(
    src: &Source,
    common: &Common,
    rho: Option<f64>,
    omega_max: Option<f64>,
    start: Option<StartMode>,
) -> Result<Vec<ScenarioConfig>> {
    let mut configs = match (&src.scenario, &src.config) {
        (Some(name), _) => named_scenario(name)?.variants,
        (None, Some(path)) => vec![load_file(path)?],
        (None, None) => return Err(Error::Config("either --scenario or --config is required".into())),
    };
    if let Some(filter) = &src.variant {
        configs.retain(|c| c.name.contains(filter.as_str()));
        if configs.is_empty() {
            return Err(Error::Config(format!("no variant matches '{filter}'")));
        }
    }
    if common.threads == Some(0) {
        return Err(Error::invalid("threads", "must be >= 1"));
    }
    let ov = Overrides {
        rho,
        omega_max,
        nu_max: common.nu_max,
        start,
        steps: common.steps,
        trials: common.trials,
        seed: common.seed,
    };
    for c in &mut configs {
        ov.apply(c);
        if common.per_robot {
            c.per_robot_columns = true;
        }
        c.validate()?;
    }
    Ok(configs)
}

fn sweep_grid(base: &[ScenarioConfig], rho: &[f64], omega: &[f64], start: &[StartMode]) -> Result<Vec<ScenarioConfig>> {
    let mut out = Vec::new();
    for b in base {
        let rhos = if rho.is_empty() { vec![b.solver.rho] } else { rho.to_vec() };
        let omegas = if omega.is_empty() { vec![b.noise.omega_max] } else { omega.to_vec() };
        let starts = if start.is_empty() { vec![b.solver.start] } else { start.to_vec() };
        for &r in &rhos {
            for &o in &omegas {
                for &s in &starts {
                    let mut c = b.clone();
                    c.solver.rho = r;
                    c.noise.omega_max = o;
                    c.solver.start = s;
                    c.name = format!("{}/rho{r}-omega{o}-{}", b.name, s.as_str());
                    c.validate()?;
                    out.push(c);
                }
            }
        }
    }
    Ok(out)
}

/// Runs `f` on a dedicated pool when a thread count is given. The flag passed
/// to `f` says whether trials may run concurrently.
fn with_threads<F>(threads: Option<usize>, f: F) -> Result<()>
where
    F: FnOnce(bool) -> Result<()> + Send,
{
    match threads {
        Some(1) => f(false),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {n} threads: {e}")))?
            .install(|| f(true)),
        None => f(true),
    }
}

fn command_line() -> String {
    std::env::args().collect::<Vec<_>>().join(" ")
}

fn run_single(configs: &[ScenarioConfig], common: &Common) -> Result<()> {
    let mut results = Vec::new();
    for cfg in configs {
        let seed = cfg.trial_seed(0);
        let m = run_trial(cfg, seed)?;
        export_trial(&common.out_dir, &file_stem(&cfg.name), &m, cfg.per_robot_columns)?;
        let s = TrialSummary::from(&m);
        println!(
            "{} seed={} steps={} final_mean_rmse={:.6} detected={:?} targets={:?} diverged={}",
            cfg.name,
            seed,
            m.records.len(),
            s.final_mean_rmse,
            s.final_confirmed,
            s.final_targets,
            s.diverged
        );
        results.push(s);
    }
    let meta = metadata_json(&command_line(), configs, &results)?;
    write_file(&common.out_dir.join("metadata.json"), &meta)
}

fn run_monte_carlo(command: &str, configs: &[ScenarioConfig], common: &Common, parallel: bool) -> Result<()> {
    let mut summaries: Vec<MonteCarloSummary> = Vec::new();
    for cfg in configs {
        let (s, _) = monte_carlo(cfg, parallel)?;
        let stem = file_stem(&cfg.name);
        write_file(&common.out_dir.join(format!("{stem}.curve.csv")), &curve_csv(&s))?;
        println!(
            "{} trials={} diverged={} final_mean_rmse={:.6} precision={:.3} recall={:.3} alarm_steps={}",
            cfg.name, s.trials, s.diverged, s.final_mean_rmse, s.precision, s.recall, s.alarm_steps
        );
        summaries.push(s);
    }
    let rows: Vec<(&ScenarioConfig, &MonteCarloSummary)> = configs.iter().zip(&summaries).collect();
    write_file(&common.out_dir.join("comparison.csv"), &comparison_csv(&rows))?;
    let meta = metadata_json(&format!("{command}: {}", command_line()), configs, &summaries)?;
    write_file(&common.out_dir.join("metadata.json"), &meta)
}
