use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mlqmcfe_cli::{run_cbc, run_experiment, run_plan, ExperimentConfig};

#[derive(Parser)]
#[command(name = "mlqmcfe", version, about = "Multi-level QMC finite element experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run { config: PathBuf },
    /// Print and write the level plan only.
    Plan { config: PathBuf },
    /// Emit a CBC generating vector for the configured weights.
    Cbc {
        #[arg(long)]
        s: usize,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        config: PathBuf,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Run { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let out = run_experiment(&cfg)?;
            print!("{}", out.log);
            println!("wrote {}", out.dir.display());
            Ok(if out.passed { ExitCode::SUCCESS } else { ExitCode::from(2) })
        }
        Command::Plan { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            print!("{}", run_plan(&cfg)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Cbc { s, n, config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let text = run_cbc(&cfg, s, n)?;
            match out {
                Some(path) => std::fs::write(&path, text)?,
                None => print!("{text}"),
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
