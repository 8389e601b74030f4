use std::process::ExitCode;

use clap::Parser;
use lmtp_cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    #[cfg(feature = "parallel")]
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("lmtp: cannot configure {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    #[cfg(not(feature = "parallel"))]
    if cli.threads.is_some_and(|n| n > 1) {
        log::warn!("built without the `parallel` feature; --threads is ignored");
    }

    match run(&cli) {
        Ok(out) => {
            for line in &out.summary {
                println!("{line}");
            }
            println!("report: {} ({})", out.dir.display(), out.files.join(", "));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("lmtp: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
