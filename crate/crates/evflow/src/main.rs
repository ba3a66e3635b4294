use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use evflow::cli::{cmd_convergence, cmd_run, parse_config, CliError};

#[derive(Parser)]
#[command(
    name = "evflow",
    about = "Transient Darcy flow on multiblock non-matching rectangular grids"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one transient solve described by a config file.
    Run {
        config: PathBuf,
        /// Number of worker threads (levels run in parallel).
        #[arg(long)]
        threads: Option<usize>,
        /// Override the [output] dir of the config.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Run a refinement study and write convergence.csv.
    Convergence {
        config: PathBuf,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
}

fn execute() -> Result<(), CliError> {
    let cli = Cli::parse();
    let (config_path, threads, output_dir) = match &cli.command {
        Command::Run {
            config,
            threads,
            output_dir,
        }
        | Command::Convergence {
            config,
            threads,
            output_dir,
        } => (config.clone(), *threads, output_dir.clone()),
    };
    if let Some(n) = threads {
        // Ignore failure: the global pool may already exist in tests.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    let config = parse_config(&config_path)?;
    let out_dir = output_dir.unwrap_or_else(|| config.output_dir.clone());
    match cli.command {
        Command::Run { .. } => {
            let summary = cmd_run(&config, &out_dir)?;
            println!("{}", summary.line());
            for f in &summary.files {
                println!("wrote {}", f.display());
            }
            Ok(())
        }
        Command::Convergence { .. } => {
            let outcome = cmd_convergence(&config, &out_dir)?;
            println!("wrote {}", outcome.csv_path.display());
            if outcome.failed_levels > 0 {
                return Err(CliError::Solver(format!(
                    "{} of {} levels failed; see the status column",
                    outcome.failed_levels,
                    outcome.report.levels.len()
                )));
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match execute() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
