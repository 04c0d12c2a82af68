use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use facade_core::pipeline::{run_pipeline, stage_metrics, Backend, RunOptions};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum BackendArg {
    Diffusion,
    Patch,
}

impl From<BackendArg> for Backend {
    fn from(b: BackendArg) -> Self {
        match b {
            BackendArg::Diffusion => Backend::Diffusion,
            BackendArg::Patch => Backend::Patch,
        }
    }
}

/// Reconstruct textured cuboid buildings from facade photos listed in a
/// scene manifest.
///
/// Exit status is 0 when every facade succeeded, 2 when some facades were
/// skipped, and 1 on a fatal error.
#[derive(Debug, Parser)]
#[command(version)]
struct Args {
    /// Scene manifest (JSON).
    manifest: PathBuf,
    /// Output directory for the glTF scene, facade textures and report.
    #[arg(long)]
    out: PathBuf,
    /// Write intermediate stage outputs under <out>/debug.
    #[arg(long)]
    debug: bool,
    /// Seed for the randomized stages.
    #[arg(long)]
    seed: Option<u64>,
    /// Inpainting backend; overrides the manifest.
    #[arg(long, value_enum)]
    backend: Option<BackendArg>,
    /// Disable collinear segment and candidate deduplication.
    #[arg(long)]
    no_dedup: bool,
    /// Write stage timings, candidate counts and slice statistics here.
    #[arg(long)]
    metrics: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    let opts = RunOptions {
        debug: args.debug,
        seed: args.seed,
        backend: args.backend.map(Backend::from),
        no_dedup: args.no_dedup,
        metrics: args.metrics.is_some(),
    };
    let report = match run_pipeline(&args.manifest, &args.out, &opts) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    if let Some(path) = &args.metrics {
        let text = serde_json::to_string_pretty(&stage_metrics(&report)).expect("metrics serialize");
        if let Err(e) = std::fs::write(path, text) {
            eprintln!("error: cannot write {}: {e}", path.display());
            return ExitCode::from(1);
        }
    }
    for f in &report.facades {
        if let Some(fail) = &f.failure {
            eprintln!("facade {} skipped at {:?}: {}", f.id, fail.stage, fail.reason);
        }
    }
    for w in &report.warnings {
        log::warn!("{w}");
    }
    let failed = report.failed_facades();
    println!(
        "{} of {} facades reconstructed, {} blocks, scene at {}",
        report.facades.len() - failed,
        report.facades.len(),
        report.blocks.len(),
        args.out.join(&report.gltf).display()
    );
    if failed > 0 {
        ExitCode::from(2)
    } else {
        ExitCode::SUCCESS
    }
}
