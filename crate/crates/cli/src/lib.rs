//! The `wppl` command-line driver.
//!
//! Every command that writes artifacts writes them into one `--out`
//! directory together with a `manifest.json` ([`manifest::RunManifest`])
//! recording the arguments, seeds and input hashes. `wppl rerun` replays a
//! manifest into a fresh directory.

pub mod args;
pub mod bench;
mod commands;
mod error;
pub mod manifest;
pub mod stats;

use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Cmd};
pub use error::CliError;

/// Environment variable capping the worker-thread count.
pub const THREADS_ENV: &str = "WPPL_THREADS";

fn init_threads(deterministic: bool) {
    let threads = if deterministic {
        Some(1)
    } else {
        std::env::var(THREADS_ENV).ok().and_then(|v| v.parse::<usize>().ok()).filter(|&n| n > 0)
    };
    if let Some(n) = threads {
        // fails only if a pool already exists, e.g. on `rerun`
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

/// Run with full `argv` (binary name first).
pub fn run(argv: &[String]) -> Result<(), CliError> {
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return Ok(());
        }
        Err(e) => return Err(CliError::Usage(e.to_string().trim_end().to_string())),
    };
    init_threads(cli.deterministic);
    let ctx = commands::Ctx {
        deterministic: cli.deterministic,
        args: manifest::strip_out(&argv[1..]),
    };
    match &cli.command {
        Cmd::Gen(a) => commands::gen(&ctx, a),
        Cmd::Check { file } => commands::check(file),
        Cmd::Density { file, z } => commands::density(file, z),
        Cmd::Simulate { file, seed } => commands::simulate(file, *seed),
        Cmd::Refsample(a) => commands::refsample(&ctx, a),
        Cmd::Train(a) => commands::train_cmd(&ctx, a),
        Cmd::Infer(a) => commands::infer(&ctx, a),
        Cmd::Eval(a) => commands::eval(&ctx, a),
        Cmd::Ess { cache, chain } => commands::ess(cache, *chain),
        Cmd::Bench(a) => commands::bench(&ctx, a),
        Cmd::Rerun { manifest, out } => {
            let m = manifest::RunManifest::read(manifest)?;
            let mut argv = vec![argv[0].clone()];
            argv.extend(m.args);
            argv.extend(["--out".to_string(), out.display().to_string()]);
            run(&argv)
        }
    }
}

/// Run and map the outcome to an exit code: 0 success, 1 user error,
/// 2 numerical failure.
pub fn main_with_args(argv: &[String]) -> i32 {
    match run(argv) {
        Ok(()) => 0,
        Err(e) => {
            match &e {
                CliError::Usage(msg) if msg.starts_with("error:") => eprintln!("{msg}"),
                _ => eprintln!("error: {e}"),
            }
            e.exit_code()
        }
    }
}
