//! Command-line orchestration: configuration, experiment dispatch, reproducible outputs and
//! gnuplot scripts.

pub mod config;
pub mod error;
pub mod experiments;
pub mod output;
pub mod plots;

use std::fs;
use std::path::{Path, PathBuf};

pub use config::{Command, ExperimentConfig};
pub use error::CliError;
pub use output::{Artifact, ArtifactKind, Outputs, RunManifest};
pub use plots::{emit_plots, PlotScript};

/// Environment variable that overrides the output directory.
pub const OUT_ENV: &str = "DCLAB_OUT";
pub const DEFAULT_OUT: &str = "out";

/// Output directory: `DCLAB_OUT` if set and non-empty, then `--out`, then `out`.
pub fn resolve_out_dir(cli_out: Option<&Path>) -> PathBuf {
    match std::env::var_os(OUT_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => cli_out.map_or_else(|| PathBuf::from(DEFAULT_OUT), Path::to_path_buf),
    }
}

/// Reads, validates and runs the configuration at `config_path`.
///
/// The manifest is written to the output directory in every case, including configuration
/// errors; its status carries the outcome.
pub fn invoke(command: Command, config_path: &Path, out_dir: PathBuf, seed: Option<u64>) -> RunManifest {
    let mut manifest = RunManifest::new(command.name(), config_path);
    manifest.seed = seed;
    let parsed = fs::read(config_path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", config_path.display())))
        .and_then(|bytes| {
            manifest.config_sha256 = Some(output::sha256_hex(&bytes));
            let text = String::from_utf8(bytes).map_err(|_| CliError::Config("config is not UTF-8".into()))?;
            ExperimentConfig::parse(command, &text, seed, out_dir.clone())
        });
    match parsed {
        Ok(cfg) => run(&cfg, manifest),
        Err(e) => {
            manifest.finish(Err(e));
            if let Err(w) = manifest.write(&out_dir) {
                eprintln!("dclab: cannot write manifest: {w}");
            }
            manifest
        }
    }
}

/// Runs a validated experiment, writes its outputs and plot scripts, then the manifest.
pub fn run(config: &ExperimentConfig, mut manifest: RunManifest) -> RunManifest {
    manifest.seed = config.seed;
    let result = match Outputs::create(&config.out_dir) {
        Ok(mut out) => {
            let mut result = experiments::execute(config, &mut out);
            if config.output().plots && !matches!(result, Err(CliError::Config(_) | CliError::Io(_))) {
                let plotted = write_plots(&mut out, &manifest);
                if result.is_ok() {
                    result = plotted;
                }
            }
            manifest.artifacts = out.into_artifacts();
            result
        }
        Err(e) => Err(e),
    };
    manifest.finish(result);
    if let Err(e) = manifest.write(&config.out_dir) {
        manifest.finish(Err(e));
    }
    manifest
}

fn write_plots(out: &mut Outputs, manifest: &RunManifest) -> Result<(), CliError> {
    if out.artifacts().iter().all(|a| a.kind != ArtifactKind::Csv) {
        return Ok(());
    }
    let listing = RunManifest { artifacts: out.artifacts().to_vec(), ..manifest.clone() };
    for script in emit_plots(&listing, out.dir())? {
        out.plot(&script.name, &script.content)?;
    }
    Ok(())
}
