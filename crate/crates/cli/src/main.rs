mod args;
mod commands;
mod config;
mod fail;
mod store;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use args::Cli;
use fail::Fail;

/// Honours `FRINGEFORGE_THREADS` as a cap on the worker pool.
fn init_threads() -> Result<(), Fail> {
    let Ok(v) = std::env::var("FRINGEFORGE_THREADS") else { return Ok(()) };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Fail::Usage(format!("FRINGEFORGE_THREADS={v:?} must be a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Fail::Usage(format!("cannot size the thread pool: {e}")))
}

fn real_main() -> Result<(), Fail> {
    let argv = config::expand(std::env::args_os().collect())?;
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return Ok(());
        }
        Err(e) => {
            let text = e.render().to_string();
            return Err(Fail::Usage(text.strip_prefix("error: ").unwrap_or(&text).trim_end().to_string()));
        }
    };
    init_threads()?;
    commands::run(cli.command)
}

fn main() -> ExitCode {
    match real_main() {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}
