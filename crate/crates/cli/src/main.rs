use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use driftbench::experiment::{prepare, write_partition};
use driftbench::report::{report, PLOTS_DIR};
use driftbench::run::run;
use driftbench::ExperimentConfig;

#[derive(Parser)]
#[command(
    name = "driftbench",
    version,
    about = "Privacy-drift experiments over incremental and federated training"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Replace every seed in the config with one derived from this value.
    #[arg(long, global = true)]
    seed_override: Option<u64>,
    /// Write outputs here instead of the config's output_dir (for `report`: where the plots go).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Build the four non-IID splits and write them with a class histogram.
    Partition { config: PathBuf },
    /// Run the full paradigm x client-count x permutation matrix.
    Run {
        config: PathBuf,
        /// Matrix cells run concurrently.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Render plots and print the correlation table for a results directory.
    Report { results_dir: PathBuf },
}

fn load(cli: &Cli, path: &Path) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed_override {
        cfg.apply_seed_override(seed);
    }
    if let Some(dir) = &cli.out_dir {
        cfg.output_dir = dir.clone();
    }
    Ok(cfg)
}

fn execute(cli: &Cli) -> Result<bool> {
    match &cli.command {
        Command::Partition { config } => {
            let cfg = load(cli, config)?;
            let prep = prepare(&cfg)?;
            for path in write_partition(&prep, &cfg.output_dir)? {
                println!("wrote {}", path.display());
            }
            Ok(true)
        }
        Command::Run { config, jobs } => {
            let cfg = load(cli, config)?;
            let manifest = run(&cfg, *jobs)?;
            println!(
                "{} cells, {} failed, {:.1}s; results in {}",
                manifest.cells.len(),
                manifest.failed_cells,
                manifest.duration_secs,
                cfg.output_dir.display()
            );
            Ok(manifest.failed_cells == 0)
        }
        Command::Report { results_dir } => {
            let plots = cli.out_dir.clone().unwrap_or_else(|| results_dir.join(PLOTS_DIR));
            let out = report(results_dir, &plots)?;
            print!("{}", out.table);
            println!("wrote {} plots to {}", out.files.len(), plots.display());
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: some matrix cells failed; see the manifest");
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
