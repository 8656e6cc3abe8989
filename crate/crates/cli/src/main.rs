use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use dclab_cli::{invoke, resolve_out_dir, Command};

/// Experiments on weighted degenerate curl-curl systems.
#[derive(Parser, Debug)]
#[command(name = "dclab", version)]
struct Args {
    /// Experiment to run.
    #[arg(value_enum)]
    command: Command,
    /// JSON configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (the DCLAB_OUT environment variable takes precedence).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed overriding every seed of the configuration.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let out_dir = resolve_out_dir(args.out.as_deref());
    let manifest = invoke(args.command, &args.config, out_dir.clone(), args.seed);
    match &manifest.error {
        Some(e) => eprintln!("dclab {}: {e}", manifest.command),
        None => eprintln!(
            "dclab {}: wrote {} artifacts to {}",
            manifest.command,
            manifest.artifacts.len(),
            out_dir.display()
        ),
    }
    ExitCode::from(manifest.exit_code() as u8)
}
