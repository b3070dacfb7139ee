use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::error::ErrorKind;
use clap::Parser;
use roughshe_cli::commands::{run, Failure, Subcommand};
use roughshe_cli::config::RunConfig;
use roughshe_cli::output::OutputDir;

/// Stochastic heat equation with space-rough noise: kernels, noise, skeleton,
/// simulation, rate functions and large-deviation experiments.
#[derive(Debug, Parser)]
#[command(name = "roughshe", version)]
struct Cli {
    #[arg(value_enum)]
    command: Subcommand,
    /// JSON run configuration.
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Overrides the seed of the config.
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    /// Caps parallel trajectories; defaults to the available parallelism.
    #[arg(long, value_name = "N")]
    workers: Option<usize>,
    /// Output directory; overrides `output_dir` of the config.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let mut cfg = match RunConfig::from_path(&cli.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{}: {e}", cli.config.display());
            return ExitCode::from(2);
        }
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let workers = cli.workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get())).max(1);
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(workers).build_global() {
        eprintln!("cannot start {workers} workers: {e}");
        return ExitCode::from(1);
    }
    let dir = cli.out.or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from("roughshe-out").join(cli.command.name()));
    let hash = cfg.hash();
    let start = Instant::now();
    let result = OutputDir::create(&dir, &hash).map_err(Failure::from).and_then(|mut out| {
        let details = run(cli.command, &cfg, &mut out)?;
        Ok(out.finish(cli.command.name(), cfg.seed, workers, start.elapsed().as_secs_f64(), details)?)
    });
    match result {
        Ok(manifest) => {
            println!("{} done in {:.2}s; manifest {}", cli.command.name(), start.elapsed().as_secs_f64(), manifest.display());
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("{}: {f}", cli.command.name());
            ExitCode::from(f.exit_code() as u8)
        }
    }
}
