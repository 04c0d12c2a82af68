use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use facade_core::inpaint::{
    evaluate, ChunkSize, DiffusionInpainter, EvalConfig, InpaintBackend, PatchConfig, PatchInpainter, TilerConfig,
};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum BackendArg {
    Diffusion,
    Patch,
}

/// Score an inpainting backend on seeded synthetic facades with free-form
/// masks, filled through the tiler, and dump the metrics as JSON.
#[derive(Debug, Parser)]
#[command(version)]
struct Args {
    #[arg(long, value_enum, default_value = "diffusion")]
    backend: BackendArg,
    #[arg(long, default_value_t = 8)]
    pairs: usize,
    #[arg(long, default_value_t = 1200)]
    width: usize,
    #[arg(long, default_value_t = 800)]
    height: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Context radius around each mask component, pixels.
    #[arg(long, default_value_t = 100)]
    radius: usize,
    /// Also run each pair as one whole-image call and report the savings.
    #[arg(long)]
    compare_untiled: bool,
    /// Metrics file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    let diffusion = DiffusionInpainter::default();
    let patch = PatchInpainter(PatchConfig {
        seed: args.seed,
        ..Default::default()
    });
    let backend: &dyn InpaintBackend = match args.backend {
        BackendArg::Diffusion => &diffusion,
        BackendArg::Patch => &patch,
    };
    let tiler = TilerConfig {
        context_radius: args.radius,
        max_chunk: ChunkSize {
            width: 600,
            height: 400,
        },
    };
    let cfg = EvalConfig {
        pairs: args.pairs,
        width: args.width,
        height: args.height,
        seed: args.seed,
        compare_untiled: args.compare_untiled,
        ..Default::default()
    };
    let metrics = match evaluate(backend, &tiler, &cfg) {
        Ok(m) => m,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let text = serde_json::to_string_pretty(&metrics).expect("metrics serialize");
    match &args.out {
        Some(path) => {
            if let Err(e) = std::fs::write(path, text) {
                eprintln!("error: cannot write {}: {e}", path.display());
                return ExitCode::from(1);
            }
        }
        None => println!("{text}"),
    }
    ExitCode::SUCCESS
}
