use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use neumann_curvature::cli::{execute, exit_code, load_config, write_error_artifact, Command};

/// Prescribed Gaussian curvature with Neumann boundary conditions on
/// spherical caps and bands.
#[derive(Debug, Parser)]
#[command(name = "ncurv", version)]
struct Args {
    command: Command,
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `out` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for the data-parallel kernels.
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    #[cfg(feature = "parallel")]
    if let Some(n) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not configure {n} threads: {e}");
        }
    }
    #[cfg(not(feature = "parallel"))]
    if args.threads.is_some_and(|n| n > 1) {
        log::warn!("built without the `parallel` feature; running on one thread");
    }
    let mut config = match load_config(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            let out = args.out.unwrap_or_else(|| PathBuf::from("out"));
            let code = exit_code(&e);
            write_error_artifact(&out, args.command, e.kind(), e.to_string(), code);
            return ExitCode::from(code as u8);
        }
    };
    if let Some(out) = args.out {
        config.out = out;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let outcome = execute(args.command, &config, &config.out);
    for a in &outcome.artifacts {
        log::info!("wrote {}", a.display());
    }
    ExitCode::from(outcome.exit_code as u8)
}
