use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use conic_liouville::cli::{run_file, RunOptions, USAGE};

#[derive(Parser, Debug)]
#[command(version, about = "Mean-field and Liouville equations with conic singularities on the disk")]
struct Args {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `[output] dir`.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Random seed; overrides `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Refinement-ladder depth; overrides `refine`.
    #[arg(long)]
    refine: Option<usize>,
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    let opts = RunOptions { output: args.output, seed: args.seed, refine: args.refine };
    let outcome = run_file(&args.config, &opts);
    for m in &outcome.messages {
        if m == USAGE {
            eprintln!("{m}");
        } else {
            eprintln!("error: {m}");
        }
    }
    for f in &outcome.files {
        println!("{}", f.display());
    }
    ExitCode::from(outcome.status.code() as u8)
}
