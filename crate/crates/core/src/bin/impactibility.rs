use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use impactibility::pipeline::{exit_code, run, Command, RunConfig};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Sub {
    Simulate,
    Fit,
    Predict,
    Calibrate,
    PolicyEval,
    Diagnose,
    All,
}

impl From<Sub> for Command {
    fn from(s: Sub) -> Self {
        match s {
            Sub::Simulate => Command::Simulate,
            Sub::Fit => Command::Fit,
            Sub::Predict => Command::Predict,
            Sub::Calibrate => Command::Calibrate,
            Sub::PolicyEval => Command::PolicyEval,
            Sub::Diagnose => Command::Diagnose,
            Sub::All => Command::All,
        }
    }
}

/// Causal-forest impactibility toolkit.
#[derive(Debug, Parser)]
#[command(version, about)]
struct Cli {
    #[arg(value_enum)]
    command: Sub,
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let loaded = match &cli.config {
        Some(path) => RunConfig::load(path),
        None => Ok(RunConfig::default()),
    };
    let mut config = match loaded {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if cli.seed.is_some() {
        config.seed = cli.seed;
    }
    if cli.threads.is_some() {
        config.threads = cli.threads;
    }
    if let Some(out) = cli.out {
        config.out = out;
    }
    if let Some(n) = config.threads {
        if n == 0 {
            eprintln!("error: --threads must be positive");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let result = run(cli.command.into(), &config);
    if let Err(e) = &result {
        eprintln!("error: {e}");
    }
    ExitCode::from(exit_code(&result) as u8)
}
