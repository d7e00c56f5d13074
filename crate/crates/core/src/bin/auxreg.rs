use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use auxreg::cli::{self, AnyConfig, CliError, Overrides};

#[derive(Parser)]
#[command(name = "auxreg", version, about = "Two-step kernel regression with a training-only auxiliary variable")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte Carlo experiment described by a JSON config.
    Run {
        config: PathBuf,
        #[command(flatten)]
        flags: Flags,
    },
    /// Fit estimators per group on a CSV file and compare the groups.
    Analyze {
        data: PathBuf,
        config: PathBuf,
        #[command(flatten)]
        flags: Flags,
    },
    /// Check a config and report every problem found.
    Validate {
        config: PathBuf,
        #[command(flatten)]
        flags: Flags,
    },
}

#[derive(Args)]
struct Flags {
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl From<Flags> for Overrides {
    fn from(f: Flags) -> Self {
        Overrides { seed: f.seed, workers: f.workers, out: f.out }
    }
}

fn read(path: &PathBuf) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Validation(vec![format!("cannot read {}: {e}", path.display())]))
}

fn execute(cmd: Command) -> Result<Vec<PathBuf>, CliError> {
    match cmd {
        Command::Run { config, flags } => match cli::read_config(&config)? {
            AnyConfig::Experiment(c) => cli::run_experiment(c, &flags.into()).map(|(_, p)| p),
            AnyConfig::Analyze(_) => Err(CliError::Validation(vec!["run needs an experiment config (with a 'setting' key)".into()])),
        },
        Command::Analyze { data, config, flags } => match cli::read_config(&config)? {
            AnyConfig::Analyze(c) => cli::analyze(&data, c, &flags.into()).map(|(_, p)| p),
            AnyConfig::Experiment(_) => Err(CliError::Validation(vec!["analyze needs an analysis config (no 'setting' key)".into()])),
        },
        Command::Validate { config, flags } => {
            let cfg = cli::validate(&read(&config)?)?;
            if flags.workers == Some(0) {
                return Err(CliError::Validation(vec!["workers must be >= 1".into()]));
            }
            let kind = match cfg {
                AnyConfig::Experiment(_) => "experiment",
                AnyConfig::Analyze(_) => "analysis",
            };
            println!("{{\"valid\":true,\"kind\":\"{kind}\"}}");
            Ok(Vec::new())
        }
    }
}

fn main() -> ExitCode {
    let args = Cli::parse();
    match execute(args.command) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code())
        }
    }
}
