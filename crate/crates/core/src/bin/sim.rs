use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use longoil::cli::{parse_config, run_scenario};
use longoil::exec::Exec;

/// Run a long-OIL / two-photon interference scenario from a config file.
#[derive(Parser, Debug)]
#[command(name = "sim", version)]
struct Args {
    /// Scenario configuration (`key = value unit` lines).
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the number of field trials.
    #[arg(long)]
    trials: Option<usize>,
    /// Run on one thread.
    #[arg(long)]
    serial: bool,
    /// Suppress the summary on stdout.
    #[arg(long)]
    quiet: bool,
}

fn run(args: &Args) -> longoil::Result<()> {
    let mut cfg = parse_config(&args.config)?;
    if let Some(seed) = args.seed {
        cfg = cfg.with_override("seed", &seed.to_string())?;
    }
    if let Some(trials) = args.trials {
        cfg = cfg.with_override("trials", &trials.to_string())?;
    }
    let exec = if args.serial { Exec::Serial } else { Exec::default() };
    let summary = run_scenario(&cfg, &args.out, exec)?;
    if !args.quiet {
        print!("{}", summary.report());
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
