//! Batch experiment runner.
//!
//! Exit status: 0 when every run succeeded, 2 when some runs failed (details
//! in `summary.json`), 1 on configuration or I/O errors.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use jaspa::experiment::{run_experiment, snapshot_seed, ExperimentConfig};

#[derive(Parser, Debug)]
#[command(
    name = "simulate",
    about = "Run a joint AP selection and power allocation experiment"
)]
struct Args {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overriding `output_dir` from the configuration.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; defaults to the number of logical CPUs.
    #[arg(long)]
    jobs: Option<usize>,
    /// Print the cells and their snapshot seeds, then exit.
    #[arg(long)]
    list_cells: bool,
}

fn run(args: Args) -> jaspa::Result<ExitCode> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(out) = args.out {
        cfg.output_dir = out;
    }

    if args.list_cells {
        for cell in cfg.cell_list() {
            let seeds: Vec<String> = (0..cfg.replications.min(3))
                .map(|r| snapshot_seed(cfg.base_seed, cell, r).to_string())
                .collect();
            let more = if cfg.replications > 3 { ", ..." } else { "" };
            println!(
                "{}\t{} replications\tseeds {}{more}",
                cell.dir_name(),
                cfg.replications,
                seeds.join(", ")
            );
        }
        return Ok(ExitCode::SUCCESS);
    }

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = args.jobs {
        pool = pool.num_threads(j.max(1));
    }
    let pool = pool
        .build()
        .map_err(|e| jaspa::Error::Config(format!("thread pool: {e}")))?;
    let report = pool.install(|| run_experiment(&cfg))?;

    let failures = report.failures();
    eprintln!(
        "{} runs, {} failed; results in {}",
        report.runs.len(),
        failures,
        cfg.output_dir.display()
    );
    Ok(if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
