use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use critvar_cli::config::split_overrides;
use critvar_cli::run::exit;
use critvar_cli::{execute, ExperimentConfig, Subcommand};

/// Large-deviation experiments for critical variational SPDEs.
///
/// Any `--section.key=value` argument overrides the config file, e.g.
/// `--model.b=1.5` or `--ldp.eps=[0.2,0.1]`.
#[derive(Debug, Parser)]
#[command(name = "critvar", version)]
struct Cli {
    #[arg(value_enum)]
    command: Subcommand,
    /// Experiment file (TOML, or JSON by extension).
    #[arg(long)]
    config: PathBuf,
    /// Replaces the config's top-level seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Worker threads (defaults to all cores).
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let (args, overrides) = split_overrides(std::env::args());
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { exit::CONFIG as u8 } else { 0 });
        }
    };
    let cfg = match ExperimentConfig::load(&cli.config).and_then(|c| c.with_overrides(&overrides)) {
        Ok(mut c) => {
            if let Some(s) = cli.seed {
                c.seed = s;
            }
            c
        }
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(exit::CONFIG as u8);
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("config error: thread pool: {e}");
            return ExitCode::from(exit::CONFIG as u8);
        }
    }
    ExitCode::from(execute(&cfg, cli.command, &cli.out_dir, cli.threads) as u8)
}
