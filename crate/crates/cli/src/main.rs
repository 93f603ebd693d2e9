use bvlap_cli::{run, threads_from_env, RunConfig, EXIT_INPUT};
use clap::Parser;
use std::process::ExitCode;

fn main() -> ExitCode {
    let cfg = match RunConfig::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match threads_from_env() {
        Ok(Some(n)) => {
            if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                eprintln!("bvlap: {e}");
                return ExitCode::from(EXIT_INPUT as u8);
            }
        }
        Ok(None) => {}
        Err(msg) => {
            eprintln!("bvlap: {msg}");
            return ExitCode::from(EXIT_INPUT as u8);
        }
    }
    let outcome = run(&cfg);
    if let Some(f) = &outcome.failure {
        eprintln!("bvlap {}: {} ({})", cfg.command.name(), f.message, f.kind);
    } else {
        for p in &outcome.files {
            println!("{}", p.display());
        }
    }
    ExitCode::from(outcome.exit_code as u8)
}
