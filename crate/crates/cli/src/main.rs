use std::process::ExitCode;

use clap::Parser;
use laf_epipolar_cli::{run, threads_from_env, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = threads_from_env().and_then(|threads| {
        if let Some(n) = threads {
            // fails only if a pool already exists, which cannot happen here
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
        run(&cli, &mut std::io::stdout().lock())
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("lafcorr: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
