use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rescap::experiment::{execute, CliError, Command, ExperimentConfig};

#[derive(Parser)]
#[command(name = "rescap", version, about = "Reservoir computing experiments on stationary signals")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate data, drive the reservoir and train a ridge readout.
    Simulate(Args),
    /// Closed-form capacity of the reservoir model.
    Capacity(Args),
    /// Error surfaces over one or two parameter axes.
    Surface(Args),
    /// Volatility filtering table: reservoir, reservoir model and Kalman filter.
    Benchmark(Args),
    /// Separation and fading-memory probes.
    CheckProperties(Args),
}

#[derive(clap::Args)]
struct Args {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Overrides the master seed of the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long)]
    workers: Option<usize>,
}

fn run(command: Command, args: &Args) -> Result<(), CliError> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(w) = args.workers {
        if w == 0 {
            return Err(CliError::Config("--workers must be at least 1".into()));
        }
        pool = pool.num_threads(w);
    }
    let pool = pool.build().map_err(|e| CliError::Config(e.to_string()))?;
    let outputs = pool.install(|| execute(command, &cfg))?;
    outputs.write_to(&args.out)?;
    log::info!("wrote {} files to {}", outputs.files.len(), args.out.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (command, args) = match &cli.command {
        Cmd::Simulate(a) => (Command::Simulate, a),
        Cmd::Capacity(a) => (Command::Capacity, a),
        Cmd::Surface(a) => (Command::Surface, a),
        Cmd::Benchmark(a) => (Command::Benchmark, a),
        Cmd::CheckProperties(a) => (Command::CheckProperties, a),
    };
    match run(command, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
