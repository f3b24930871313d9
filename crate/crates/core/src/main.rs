use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use foliation_lab::experiments::{cmd_area_sweep, cmd_birkhoff, cmd_foliation, cmd_verify, Config, ExperimentError, Seeds};

#[derive(Parser)]
#[command(name = "foliation-lab", version, about = "Perturbed cat map experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON configuration file; defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Parameter value: the orbit parameter for `birkhoff`, a single-point grid otherwise.
    #[arg(long, global = true)]
    p: Option<f64>,
    /// Replaces every seed of the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Map invariants and the cone check.
    Verify,
    /// Areas and measures of the partition rectangles across the grid.
    AreaSweep,
    /// Birkhoff averages with checkpoints at one parameter.
    Birkhoff,
    /// Birkhoff averages along sampled conjugacy curves.
    Foliation,
}

fn configure(cli: &Cli) -> Result<Config, ExperimentError> {
    let mut config = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    if let Some(out) = &cli.out {
        config.output_dir = out.clone();
    }
    if let Some(seed) = cli.seed {
        config.seeds = Seeds::all(seed);
    }
    if let Some(p) = cli.p {
        match cli.command {
            Command::Birkhoff => {}
            Command::Foliation if p != 0.0 => config.p_grid = vec![0.0, p],
            _ => config.p_grid = vec![p],
        }
    }
    config.validate()?;
    Ok(config)
}

fn set_threads() -> Result<(), ExperimentError> {
    let Ok(value) = std::env::var("FOLIATION_LAB_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .map_err(|_| ExperimentError::Config(format!("FOLIATION_LAB_THREADS={value} is not a thread count")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| ExperimentError::Config(e.to_string()))
}

fn run(cli: &Cli) -> Result<bool, ExperimentError> {
    set_threads()?;
    let config = configure(cli)?;
    let outcome = match cli.command {
        Command::Verify => cmd_verify(&config)?,
        Command::AreaSweep => cmd_area_sweep(&config)?,
        Command::Birkhoff => cmd_birkhoff(&config, cli.p.unwrap_or(0.0))?,
        Command::Foliation => cmd_foliation(&config)?,
    };
    for line in &outcome.checks {
        println!("{line}");
    }
    for path in &outcome.outputs {
        println!("wrote {}", path.display());
    }
    Ok(outcome.passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
