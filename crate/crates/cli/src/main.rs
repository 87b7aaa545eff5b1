use std::path::PathBuf;

use clap::{Parser, Subcommand};

use hetero_opt::{compare, experiments, CliError};

#[derive(Parser)]
#[command(name = "hetero-opt", version, about = "Seeded optimization experiments with deterministic artifacts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute the experiment described by a JSON config file.
    Run {
        config: PathBuf,
        /// Output directory (default: `output` from the config, else runs/<config stem>).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Replace an existing run directory instead of refusing.
        #[arg(long)]
        force: bool,
        #[arg(short, long)]
        verbose: bool,
    },
    /// Merge gradient-norm columns from finished runs into one CSV.
    Compare {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        #[arg(long, default_value = "comparison.csv")]
        out: PathBuf,
    },
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run {
            config,
            out,
            force,
            verbose,
        } => {
            let dir = experiments::run_config_file(&config, out, force, verbose)?;
            println!("run complete: {}", dir.display());
            Ok(())
        }
        Command::Compare { dirs, out } => {
            compare::compare_dirs(&dirs, &out)?;
            println!("comparison written: {}", out.display());
            Ok(())
        }
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = execute(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
