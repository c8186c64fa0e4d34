use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use rcrl_harness::cli::{run, Cli};
use rcrl_harness::output::OUT_ROOT_VAR;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let root = std::env::var_os(OUT_ROOT_VAR).map(PathBuf::from);
    match run(cli, root.as_deref()) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
