//! `v2g`: run single markets, Monte Carlo sweeps and step-curve dumps.
//!
//! Exit codes: 0 success (a run that ends without trade included),
//! 1 usage error, 2 configuration or I/O error, 3 invariant violation.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use v2g_market::equilibrium::LinearFit;
use v2g_market::report::{
    curves_at, write_curves_csv, write_fit_csv, write_summary_csv, write_sweep_csv, write_trace_csv,
};
use v2g_market::{
    fit_linear_curves, generate, run_greedy, run_market, run_sweep, Baseline, MarketError,
    MechanismConfig, MechanismTrace64, ScenarioConfig, StepCurve64, StopReason, SweepSpec,
};

#[derive(Parser)]
#[command(
    name = "v2g",
    version,
    about = "Two-layer vehicle-to-grid market simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one market and write trace.csv and summary.csv.
    Run {
        /// Scenario config (TOML).
        config: PathBuf,
        #[command(flatten)]
        common: Common,
        /// Baselines to run; defaults to both.
        #[arg(long, value_enum, num_args = 1..)]
        baseline: Vec<BaselineArg>,
    },
    /// Run a seeded sweep and write sweep.csv.
    Sweep {
        /// Sweep spec (TOML).
        spec: PathBuf,
        #[command(flatten)]
        common: Common,
        /// Baselines to run; overrides the spec.
        #[arg(long, value_enum, num_args = 1..)]
        baseline: Vec<BaselineArg>,
    },
    /// Dump the two-layer run's supply and demand curves (curves.csv) and
    /// their linear fits (fit.csv).
    Curves {
        /// Scenario config (TOML).
        config: PathBuf,
        #[command(flatten)]
        common: Common,
        /// Only dump this iteration (1-based); default is every iteration.
        #[arg(long)]
        iteration: Option<usize>,
    },
}

#[derive(Args)]
struct Common {
    /// Override the seed from the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long, short, default_value = ".")]
    out: PathBuf,
    /// Maximum number of mechanism iterations.
    #[arg(long)]
    t_max: Option<usize>,
    /// Relative price-change convergence threshold.
    #[arg(long)]
    xi: Option<f64>,
}

impl Common {
    fn mechanism(&self, base: MechanismConfig) -> MechanismConfig {
        MechanismConfig {
            t_max: self.t_max.unwrap_or(base.t_max),
            xi: self.xi.unwrap_or(base.xi),
            ..base
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BaselineArg {
    TwoLayer,
    Greedy,
}

impl From<BaselineArg> for Baseline {
    fn from(b: BaselineArg) -> Self {
        match b {
            BaselineArg::TwoLayer => Baseline::TwoLayer,
            BaselineArg::Greedy => Baseline::Greedy,
        }
    }
}

enum Failure {
    Usage(String),
    Config(String),
    Invariant(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Config(_) => 2,
            Failure::Invariant(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Config(m) | Failure::Invariant(m) => m,
        }
    }
}

impl From<MarketError> for Failure {
    fn from(e: MarketError) -> Self {
        match e {
            MarketError::InvariantViolation(_)
            | MarketError::InfeasibleAllocation(_)
            | MarketError::SingularMarket
            | MarketError::SingularIteration { .. } => Failure::Invariant(e.to_string()),
            _ => Failure::Config(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Run {
            config,
            common,
            baseline,
        } => cmd_run(&config, &common, &baseline),
        Command::Sweep {
            spec,
            common,
            baseline,
        } => cmd_sweep(&spec, &common, &baseline),
        Command::Curves {
            config,
            common,
            iteration,
        } => cmd_curves(&config, &common, iteration),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

fn load_scenario(path: &Path, common: &Common) -> Result<ScenarioConfig, Failure> {
    let mut config = ScenarioConfig::load(path)?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, Failure> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Failure::Config(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    File::create(&path)
        .map(BufWriter::new)
        .map_err(|e| Failure::Config(format!("cannot create {}: {e}", path.display())))
}

fn selected(baselines: &[BaselineArg]) -> Vec<Baseline> {
    let mut out: Vec<Baseline> = baselines.iter().map(|&b| b.into()).collect();
    out.dedup();
    out
}

fn cmd_run(path: &Path, common: &Common, baselines: &[BaselineArg]) -> Result<(), Failure> {
    let config = load_scenario(path, common)?;
    let mechanism = common.mechanism(MechanismConfig::default());
    mechanism.validate()?;
    let instance = generate::<f64>(&config)?;
    let mut chosen = selected(baselines);
    if chosen.is_empty() {
        chosen = vec![Baseline::TwoLayer, Baseline::Greedy];
    }

    let mut traces: Vec<(Baseline, MechanismTrace64)> = Vec::new();
    for baseline in chosen {
        let (trace, checked_against) = match baseline {
            Baseline::TwoLayer => (
                run_market(&instance.buyers, &instance.aggregators, &mechanism)?,
                mechanism,
            ),
            Baseline::Greedy => (
                run_greedy(&instance.buyers, &instance.aggregators)?,
                MechanismConfig {
                    t_max: 1,
                    ..mechanism
                },
            ),
        };
        trace.check_invariants(&instance.buyers, &instance.aggregators, &checked_against)?;
        let price = trace
            .final_price()
            .map_or("none".to_string(), |p| format!("{p:.6}"));
        if trace.stop_reason == StopReason::NoTrade {
            println!(
                "{}: no trade (supply and demand do not cross) after {} iteration(s)",
                baseline.as_str(),
                trace.iterations_run()
            );
        } else {
            println!(
                "{}: {} after {} iteration(s), price {}, mean utility {:.6}",
                baseline.as_str(),
                trace.stop_reason.as_str(),
                trace.iterations_run(),
                price,
                trace.mean_utility_per_aggregator()
            );
        }
        traces.push((baseline, trace));
    }

    let refs: Vec<(Baseline, &MechanismTrace64)> = traces.iter().map(|(b, t)| (*b, t)).collect();
    write_trace_csv(create(&common.out, "trace.csv")?, &refs)?;
    write_summary_csv(create(&common.out, "summary.csv")?, &refs)?;
    Ok(())
}

fn cmd_sweep(path: &Path, common: &Common, baselines: &[BaselineArg]) -> Result<(), Failure> {
    let mut spec = SweepSpec::load(path)?;
    if let Some(seed) = common.seed {
        spec.base_config.seed = seed;
    }
    spec.mechanism_config = common.mechanism(spec.mechanism_config);
    let chosen = selected(baselines);
    if !chosen.is_empty() {
        spec.baselines = chosen;
    }
    let result = run_sweep(&spec)?;
    write_sweep_csv(create(&common.out, "sweep.csv")?, &result)?;
    println!(
        "{} rows ({} runs) written to {}",
        result.rows.len(),
        result.runs.len(),
        common.out.join("sweep.csv").display()
    );
    Ok(())
}

fn cmd_curves(path: &Path, common: &Common, iteration: Option<usize>) -> Result<(), Failure> {
    let config = load_scenario(path, common)?;
    let mechanism = common.mechanism(MechanismConfig::default());
    let instance = generate::<f64>(&config)?;
    let trace = run_market(&instance.buyers, &instance.aggregators, &mechanism)?;
    trace.check_invariants(&instance.buyers, &instance.aggregators, &mechanism)?;

    let records: Vec<_> = match iteration {
        None => trace.iterations.iter().collect(),
        Some(t) if t >= 1 && t <= trace.iterations.len() => vec![&trace.iterations[t - 1]],
        Some(t) => {
            return Err(Failure::Usage(format!(
                "iteration {t} is out of range: the run stopped after {} iteration(s)",
                trace.iterations.len()
            )))
        }
    };

    let curves: Vec<(usize, StepCurve64, StepCurve64)> = records
        .iter()
        .map(|rec| {
            let (s, d) = curves_at(&instance.buyers, &instance.aggregators, rec);
            (rec.t, s, d)
        })
        .collect();
    let fits: Vec<(usize, LinearFit<f64>, Option<f64>)> = curves
        .iter()
        .zip(&records)
        .filter_map(|((t, s, d), rec)| fit_linear_curves(s, d).ok().map(|fit| (*t, fit, rec.price)))
        .collect();

    let curve_refs: Vec<_> = curves.iter().map(|(t, s, d)| (*t, s, d)).collect();
    let fit_refs: Vec<_> = fits.iter().map(|(t, f, p)| (*t, f, *p)).collect();
    write_curves_csv(create(&common.out, "curves.csv")?, &curve_refs)?;
    write_fit_csv(create(&common.out, "fit.csv")?, &fit_refs)?;
    println!(
        "{} iteration(s) of curves written to {}",
        curves.len(),
        common.out.display()
    );
    Ok(())
}
