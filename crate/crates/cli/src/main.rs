use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use moldctl_cli::{load_config, run, CliError, Command, EXIT_CONFIG};

#[derive(Parser)]
#[command(
    name = "moldctl",
    version,
    about = "Cavity-pressure tracking control toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Closed- or open-loop simulation; writes trajectory.csv and metrics.json
    Simulate(Args),
    /// Lie-derivative oracle checks; writes verification.json
    Verify(Args),
    /// Routh-Hurwitz analysis under both gain mappings; writes routh.json
    Stability(Args),
    /// Gain search; writes tune_trace.csv and best_gains.json
    Tune(Args),
}

#[derive(clap::Args)]
struct Args {
    /// JSON run configuration
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overriding `output_dir` in the config
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter("MOLDCTL_LOG")).init();
    let cli = Cli::parse();
    let (cmd, args) = match cli.command {
        Cmd::Simulate(a) => (Command::Simulate, a),
        Cmd::Verify(a) => (Command::Verify, a),
        Cmd::Stability(a) => (Command::Stability, a),
        Cmd::Tune(a) => (Command::Tune, a),
    };
    match execute(cmd, &args) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_CONFIG)
        }
    }
}

fn execute(cmd: Command, args: &Args) -> anyhow::Result<u8> {
    let cfg =
        load_config(&args.config).with_context(|| format!("loading {}", args.config.display()))?;
    let out = args.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
    let outcome = run(cmd, &cfg, &out).map_err(|e: CliError| anyhow::Error::new(e))?;
    println!("{}", outcome.summary);
    for f in &outcome.files {
        println!("wrote {}", f.display());
    }
    Ok(outcome.exit_code)
}
