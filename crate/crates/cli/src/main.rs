use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use cholcast::cv::LeakageMode;
use cholcast::pipeline::{self, InputsConfig, NoopObserver, RunConfig, Stage};
use cholcast::simulate::{self, SimConfig};
use cholcast::{Error, Horizon};

#[derive(Parser, Debug)]
#[command(name = "cholcast", version, about = "Cholera incidence forecasting pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic set of the five input files.
    Simulate(SimulateArgs),
    /// Interpolate reports and aggregate covariates into panel.csv.
    Prepare(RunArgs),
    /// Extract the windowed feature matrix into features.csv.
    Features(RunArgs),
    /// Significance filter and correlation pruning per horizon.
    Select(RunArgs),
    /// Select, then tune booster parameters (trials.json).
    Tune(RunArgs),
    /// Tune, rank, forward-select and fit the final models (model.gbt).
    Train(RunArgs),
    /// Train, then score gbtree and the linear baseline (metrics.json).
    Evaluate(RunArgs),
    /// Evaluate, then write forecasts.csv.
    Forecast(RunArgs),
    /// Forecast, then write per-governorate plot series.
    PlotData(RunArgs),
    /// Full pipeline.
    Run(RunArgs),
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 21)]
    n_governorates: usize,
    #[arg(long, default_value_t = 300)]
    n_days: usize,
    /// Output directory for the input files.
    #[arg(long, default_value = "data")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// JSON run configuration; every field is optional.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory holding the five input files.
    #[arg(long)]
    inputs: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Training-row exclusion rule: `anchor` or `label`.
    #[arg(long)]
    leakage: Option<LeakageMode>,
    /// Horizons to run (1-4), comma separated.
    #[arg(long, value_delimiter = ',')]
    horizons: Option<Vec<u8>>,
    /// Number of tuning trials per horizon.
    #[arg(long)]
    trials: Option<usize>,
}

impl RunArgs {
    fn config(&self) -> Result<RunConfig, Error> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        if let Some(d) = &self.inputs {
            cfg.inputs = InputsConfig::Dir(d.clone());
        }
        if let Some(d) = &self.out {
            cfg.output_dir = d.clone();
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(m) = self.leakage {
            cfg.leakage = m;
        }
        if let Some(hs) = &self.horizons {
            cfg.horizons = hs
                .iter()
                .map(|&k| Horizon::new(k).ok_or_else(|| Error::Config(format!("horizon must be 1-4, got {k}"))))
                .collect::<Result<_, _>>()?;
        }
        if let Some(n) = self.trials {
            cfg.tpe.n_trials = n;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn execute(command: Command) -> Result<(), Error> {
    let (args, stage) = match command {
        Command::Simulate(a) => {
            let cfg = SimConfig {
                seed: a.seed,
                n_governorates: a.n_governorates,
                n_days: a.n_days,
                ..SimConfig::default()
            };
            let inputs = simulate::simulate(&cfg)?;
            simulate::write_inputs(&a.out, &inputs)?;
            info!("wrote synthetic inputs to {}", a.out.display());
            return Ok(());
        }
        Command::Prepare(a) => (a, Stage::Prepare),
        Command::Features(a) => (a, Stage::Features),
        Command::Select(a) => (a, Stage::Select),
        Command::Tune(a) => (a, Stage::Tune),
        Command::Train(a) => (a, Stage::Train),
        Command::Evaluate(a) => (a, Stage::Evaluate),
        Command::Forecast(a) => (a, Stage::Forecast),
        Command::PlotData(a) => (a, Stage::PlotData),
        Command::Run(a) => (a, Stage::PlotData),
    };
    let cfg = args.config()?;
    pipeline::run_from_config(&cfg, stage, &NoopObserver)?;
    info!("{stage} finished; outputs in {}", cfg.output_dir.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
