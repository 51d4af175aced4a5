use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use skelsafe::cli::{run, thread_limit, AdaptMode, CliError, Command, ExperimentConfig, RunOptions};

/// Synthetic skeleton action recognition under domain shift.
#[derive(Parser, Debug)]
#[command(name = "skelsafe", version)]
struct Args {
    #[arg(value_enum)]
    command: Command,
    /// JSON experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed; overrides `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Replace an existing output directory of the command.
    #[arg(long)]
    force: bool,
    /// Adaptation mode; both modes run when omitted.
    #[arg(long, value_enum)]
    mode: Option<AdaptMode>,
}

fn fail(e: &CliError) -> ExitCode {
    eprintln!("{}", e.to_json());
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail(&CliError::Config(e.to_string().trim().to_string())),
    };
    let threads = match thread_limit() {
        Ok(t) => t,
        Err(e) => return fail(&e),
    };
    if let Some(n) = threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            return fail(&CliError::Config(e.to_string()));
        }
    }
    let config = match ExperimentConfig::load(&args.config) {
        Ok(c) => c,
        Err(e) => return fail(&e),
    };
    let options = RunOptions {
        out: args.out,
        seed: args.seed,
        force: args.force,
        mode: args.mode,
    };
    match run(args.command, config, &options) {
        Ok(dir) => {
            println!(
                "{}",
                serde_json::json!({"status": "ok", "output": dir.display().to_string()})
            );
            ExitCode::SUCCESS
        }
        Err(e) => fail(&e),
    }
}
