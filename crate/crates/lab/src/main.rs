use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use svrp_lab::experiment::{load_problem, ConstantsEcho, CONSTANTS_TOL};
use svrp_lab::{preset, run_experiment, ExperimentConfig, ExperimentReport, LabError};

/// Federated optimization experiments with SVRP and its baselines.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config.
    Run {
        config: PathBuf,
        /// Output directory, overriding the config.
        #[arg(long, env = "SVRP_LAB_OUT")]
        out: Option<PathBuf>,
    },
    /// Run a named preset, or print its config.
    Preset {
        name: String,
        /// Print the config as JSON instead of running it.
        #[arg(long)]
        emit_config: bool,
        #[arg(long, env = "SVRP_LAB_OUT")]
        out: Option<PathBuf>,
    },
    /// Print the measured constants of a config's problem.
    Constants { config: PathBuf },
    /// Redraw plot.svg from a report directory.
    Plot {
        dir: PathBuf,
        /// One line per seed instead of medians.
        #[arg(long)]
        per_seed: bool,
    },
}

fn run(mut config: ExperimentConfig, out: Option<PathBuf>) -> Result<(), LabError> {
    if let Some(out) = out {
        config.output_dir = out;
    }
    let report = run_experiment(&config)?;
    println!("wrote {}", config.output_dir.display());
    println!("algo,median,q1,q3");
    for s in &report.summary {
        println!("{},{:e},{:e},{:e}", s.algo, s.median, s.q1, s.q3);
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), LabError> {
    match cli.command {
        Command::Run { config, out } => run(ExperimentConfig::load(&config)?, out),
        Command::Preset { name, emit_config, out } => {
            let config = preset(&name)?;
            if emit_config {
                println!("{}", config.to_json());
                Ok(())
            } else {
                run(config, out)
            }
        }
        Command::Constants { config } => {
            let config = ExperimentConfig::load(&config)?;
            let problem = load_problem(&config)?;
            let c = problem.constants(CONSTANTS_TOL)?;
            let echo = ConstantsEcho::new(&problem, c);
            println!("{}", serde_json::to_string_pretty(&echo).expect("serializable"));
            Ok(())
        }
        Command::Plot { dir, per_seed } => {
            let report = ExperimentReport::load(&dir)?;
            svrp_lab::plot::write_plot(&dir, &report, per_seed)?;
            println!("wrote {}", dir.join("plot.svg").display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
