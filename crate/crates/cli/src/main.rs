use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use omr_cli::{run, validate_config, ExperimentFile, Overrides};

#[derive(Parser)]
#[command(
    name = "omr",
    version,
    about = "Run OMR and baseline forwarding experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        config: PathBuf,
        #[command(flatten)]
        overrides: OverrideArgs,
    },
    /// Check a config file and report every problem found.
    Validate { config: PathBuf },
    /// Print a config with every default filled in.
    PrintConfig {
        config: PathBuf,
        #[command(flatten)]
        overrides: OverrideArgs,
    },
}

#[derive(Args)]
struct OverrideArgs {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    workers: Option<usize>,
}

impl From<OverrideArgs> for Overrides {
    fn from(a: OverrideArgs) -> Self {
        Overrides {
            seed: a.seed,
            trials: a.trials,
            out: a.out,
            workers: a.workers,
        }
    }
}

fn load(path: &PathBuf, overrides: Option<OverrideArgs>) -> Result<ExperimentFile, ExitCode> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        eprintln!("{}: {e}", path.display());
        ExitCode::from(2)
    })?;
    let mut cfg = validate_config(&text).map_err(|d| {
        for line in d.0 {
            eprintln!("{}: {line}", path.display());
        }
        ExitCode::from(2)
    })?;
    if let Some(o) = overrides {
        cfg.apply(&o.into());
        if cfg.trials == 0 {
            eprintln!("--trials: must be >= 1");
            return Err(ExitCode::from(2));
        }
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Validate { config } => match load(&config, None) {
            Ok(_) => {
                println!("{}: ok", config.display());
                ExitCode::SUCCESS
            }
            Err(c) => c,
        },
        Command::PrintConfig { config, overrides } => match load(&config, Some(overrides)) {
            Ok(cfg) => match toml::to_string(&cfg) {
                Ok(s) => {
                    print!("{s}");
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("{e}");
                    ExitCode::FAILURE
                }
            },
            Err(c) => c,
        },
        Command::Run { config, overrides } => {
            let cfg = match load(&config, Some(overrides)) {
                Ok(c) => c,
                Err(c) => return c,
            };
            match run(&cfg) {
                Ok(report) => {
                    println!(
                        "{}: {} summary rows in {}",
                        cfg.scenario.name(),
                        report.summary.len(),
                        cfg.out.display()
                    );
                    if report.ok() {
                        ExitCode::SUCCESS
                    } else {
                        for e in &report.errors {
                            eprintln!("{}: {}", e.point, e.message);
                        }
                        eprintln!(
                            "{} point(s) failed; see error_manifest.csv",
                            report.errors.len()
                        );
                        ExitCode::from(1)
                    }
                }
                Err(e) => {
                    eprintln!("{e}");
                    ExitCode::from(1)
                }
            }
        }
    }
}
