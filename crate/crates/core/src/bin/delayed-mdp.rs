use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use delayed_mdp::bench::{aggregate, run_all, run_sweep, write_outputs, RunRecord};
use delayed_mdp::checks::run_suite;
use delayed_mdp::config::{ExperimentConfig, SweepConfig};

#[derive(Parser)]
#[command(version, about = "Delayed-feedback adversarial MDP benchmarks")]
struct Cli {
    /// Worker threads for seeds and sweep points.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment config.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Replace the seed list with this single seed.
        #[arg(long)]
        seed_override: Option<u64>,
    },
    /// Run every point of a parameter grid.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed_override: Option<u64>,
    },
    /// Run acceptance suites and print one line per criterion.
    Check {
        #[arg(default_value = "all")]
        suite: String,
    },
}

fn output_dir(flag: Option<PathBuf>, cfg: &ExperimentConfig) -> PathBuf {
    flag.or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from("results"))
}

fn report(cfg: &ExperimentConfig, records: &[RunRecord], dir: &Path) -> delayed_mdp::Result<()> {
    write_outputs(cfg, records, dir)?;
    let agg = aggregate(records)?;
    println!(
        "{}: {} runs, K={}, final regret mean {:.3} median {:.3} iqr {:.3}",
        cfg.name, agg.runs, agg.episodes, agg.final_mean, agg.final_median, agg.final_iqr
    );
    Ok(())
}

fn execute(cli: Cli) -> delayed_mdp::Result<bool> {
    match cli.command {
        Command::Run { config, out, seed_override } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(seed) = seed_override {
                cfg = cfg.with_seeds(vec![seed]);
            }
            let records = run_all(&cfg)?;
            report(&cfg, &records, &output_dir(out, &cfg))?;
            Ok(true)
        }
        Command::Sweep { config, out, seed_override } => {
            let mut sweep = SweepConfig::load(&config)?;
            if let Some(seed) = seed_override {
                sweep.base.seeds = vec![seed];
            }
            let dir = output_dir(out, &sweep.base);
            for (cfg, records) in run_sweep(&sweep)? {
                report(&cfg, &records, &dir)?;
            }
            Ok(true)
        }
        Command::Check { suite } => {
            let results = run_suite(&suite)?;
            for r in &results {
                println!("{r}");
            }
            let failed = results.iter().filter(|r| !r.passed).count();
            println!("{} passed, {failed} failed", results.len() - failed);
            Ok(failed == 0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
