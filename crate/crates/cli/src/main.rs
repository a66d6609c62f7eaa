//! Command-line driver for the stochastic NPZD model.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 inference failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use npzd_core::harness::{self, Experiment, ExperimentConfig};
use npzd_core::{obs, Error, Result};

#[derive(Parser)]
#[command(name = "npzd", version, about = "Stochastic NPZD model: simulation, twin experiments, inference and forecasts")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Log more (repeat for debug output).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Subcommand)]
enum Command {
    /// Free-running prior ensemble over the hindcast span.
    Simulate(Common),
    /// Simulate a truth, observe it and infer it back.
    Twin(Common),
    /// Infer states and parameters from an observation file.
    Infer(Common),
    /// Continue stored posterior draws through the forecast span.
    Forecast(Common),
    /// Quantile summary of a trajectory draws file.
    Summarize {
        /// Draws CSV (`trajectories/draws.csv` of an earlier run).
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (JSON); omitted fields take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Forcing CSV; defaults to the synthetic climatology.
    #[arg(long)]
    forcing: Option<PathBuf>,
    /// Observation CSV (`infer`).
    #[arg(long)]
    obs: Option<PathBuf>,
    #[arg(long)]
    particles: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Directory of a previous `infer`/`twin` run (`forecast`).
    #[arg(long)]
    input: Option<PathBuf>,
}

impl Common {
    fn experiment(&self) -> Result<Experiment> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(f) = &self.forcing {
            cfg.forcing_path = Some(f.clone());
        }
        if let Some(o) = &self.obs {
            cfg.obs_path = Some(o.clone());
        }
        if let Some(n) = self.particles {
            cfg.particles = n;
        }
        if let Some(n) = self.iterations {
            cfg.iterations = n;
            if cfg.warmup >= n {
                cfg.warmup = n / 10;
                log::warn!("warmup reduced to {} to fit {} iterations", cfg.warmup, n);
            }
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(t) = self.threads {
            rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build_global()
                .map_err(|e| Error::Config(format!("cannot start {t} threads: {e}")))?;
        }
        Experiment::load(cfg)
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(c) => {
            let exp = c.experiment()?;
            harness::simulate_to_dir(&exp, &c.out)?;
        }
        Command::Twin(c) => {
            let exp = c.experiment()?;
            let twin = harness::twin_to_dir(&exp, &c.out)?;
            log::info!(
                "{} observations, {} stored draws",
                twin.truth.observations.len(),
                twin.inference.draws.len()
            );
        }
        Command::Infer(c) => {
            let exp = c.experiment()?;
            let path = exp
                .config
                .obs_path
                .clone()
                .ok_or_else(|| Error::Config("infer needs --obs or obs_path in the config".into()))?;
            let observations = obs::read_observations(&path)?;
            harness::infer_to_dir(&exp, &observations, &c.out)?;
        }
        Command::Forecast(c) => {
            let exp = c.experiment()?;
            let input = c
                .input
                .as_deref()
                .ok_or_else(|| Error::Config("forecast needs --input <directory of an earlier run>".into()))?;
            harness::forecast_to_dir(&exp, input, &c.out)?;
        }
        Command::Summarize { input, out } => {
            harness::summarize_file(&input, &out)?;
        }
    }
    Ok(())
}

fn log_level(verbose: u8) -> &'static str {
    match verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(log_level(cli.verbose))).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
