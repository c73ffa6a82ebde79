mod cli;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cli::CliError;

#[derive(Parser)]
#[command(name = "icdsim", version, about = "Closed-loop virtual ICD on a 2D tissue model")]
struct Args {
    /// More log output (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one closed-loop episode.
    Run {
        config: PathBuf,
        /// Overrides the config's output_dir.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Run the device over a recorded EGM without feedback.
    Replay {
        egm: PathBuf,
        /// Device programming (JSON); defaults if omitted.
        #[arg(long)]
        icd: Option<PathBuf>,
        /// NSR template (JSON) for morphology scoring.
        #[arg(long)]
        template: Option<PathBuf>,
        #[arg(short, long, default_value = "out")]
        out: PathBuf,
    },
    /// Induce re-entry and save the checkpoint and activation map.
    Induce {
        config: PathBuf,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Sweep ATP percentage and train length over one episode.
    Sweep {
        config: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = [81.0, 88.0])]
        pct: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_values_t = [8, 12])]
        pulses: Vec<usize>,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Draw SVG plots of a finished run directory.
    Plot {
        run_dir: PathBuf,
        #[arg(long)]
        icd: Option<PathBuf>,
    },
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        2 => "debug",
        _ => "trace",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
}

fn config_verbosity(path: &std::path::Path) -> u8 {
    std::fs::read_to_string(path)
        .ok()
        .and_then(|t| serde_json::from_str::<serde_json::Value>(&t).ok())
        .and_then(|v| v.get("verbosity").and_then(|x| x.as_u64()))
        .map_or(0, |v| v.min(3) as u8)
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Run { config, out } => {
            let report = cli::cmd_run(&config, out)?;
            println!("{}", serde_json::to_string(&report.outcome).unwrap_or_default());
        }
        Command::Replay { egm, icd, template, out } => {
            let report = cli::cmd_replay(&egm, icd.as_deref(), template.as_deref(), &out)?;
            println!("{}", serde_json::to_string(&report.outcome).unwrap_or_default());
        }
        Command::Induce { config, out } => cli::cmd_induce(&config, out)?,
        Command::Sweep { config, pct, pulses, out } => {
            for row in cli::cmd_sweep(&config, &pct, &pulses, out)? {
                println!(
                    "pct={} pulses={} outcome={:?} therapies={} one_round={}",
                    row.pct, row.pulses, row.outcome, row.therapies, row.terminated_in_one_round
                );
            }
        }
        Command::Plot { run_dir, icd } => cli::cmd_plot(&run_dir, icd.as_deref())?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    let from_config = match &args.command {
        Command::Run { config, .. } | Command::Induce { config, .. } | Command::Sweep { config, .. } => {
            config_verbosity(config)
        }
        _ => 0,
    };
    init_logging(args.verbose.max(from_config));
    match dispatch(args.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("icdsim: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
