use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::info;
use ringkit::config::ExperimentConfig;
use ringkit::runner::{reseed, synth_specs};
use ringkit::{rerender, ReportOverrides, RunError, SynthConfig};
use ringkit_core::eval::{MergeMode, StratifyBy};

#[derive(Parser)]
#[command(name = "ringkit", version, about = "Vital-sign estimation experiments on ring PPG recordings")]
struct Cli {
    /// Worker threads; falls back to RINGKIT_JOBS, then the number of CPUs.
    #[arg(long, global = true, env = "RINGKIT_JOBS")]
    jobs: Option<usize>,
    /// Log progress and per-window failures to stderr.
    #[arg(long, short, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write synthetic sessions in the on-disk session format.
    Synth {
        /// JSON with a `dataset` of kind `synth` or `cohort`.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Replaces the cohort seed, or seeds listed sessions as seed + index.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run an experiment and write reports.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides `out` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides `seed` in the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Rebuild report files from a previous run's pairs.csv.
    Report {
        /// Directory written by `run`.
        #[arg(long)]
        run: PathBuf,
        /// Defaults to the run directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_parser = parse_stratify)]
        stratify_by: Option<StratifyBy>,
        #[arg(long, value_parser = parse_merge)]
        merge_mode: Option<MergeMode>,
        #[arg(long)]
        include_out_of_band: Option<bool>,
    },
}

fn parse_stratify(s: &str) -> Result<StratifyBy, String> {
    match s {
        "none" => Ok(StratifyBy::None),
        "scenario" => Ok(StratifyBy::Scenario),
        "activity" => Ok(StratifyBy::Activity),
        _ => Err(format!("expected none, scenario or activity, got {s}")),
    }
}

fn parse_merge(s: &str) -> Result<MergeMode, String> {
    match s {
        "pooled" => Ok(MergeMode::Pooled),
        "fold_mean" => Ok(MergeMode::FoldMean),
        _ => Err(format!("expected pooled or fold_mean, got {s}")),
    }
}

fn dispatch(command: Command) -> Result<(), RunError> {
    match command {
        Command::Synth { config, out, seed } => {
            let mut cfg = SynthConfig::load(&config)?;
            if let Some(seed) = seed {
                reseed(&mut cfg.dataset, seed);
            }
            let specs = synth_specs(&cfg.dataset)
                .ok_or_else(|| RunError::Config("synth needs a dataset of kind synth or cohort".into()))?;
            let dirs = ringkit::write_synth(&specs, &out)?;
            info!("wrote {} sessions to {}", dirs.len(), out.display());
            Ok(())
        }
        Command::Run { config, out, seed } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            let out = out
                .or_else(|| cfg.out.clone())
                .ok_or_else(|| RunError::Config("no output directory: pass --out or set out".into()))?;
            let result = ringkit::run(&cfg, &out)?;
            let w = &result.manifest.windows;
            info!(
                "{} windows evaluated of {} ({} dropped), {} report rows in {}",
                w.used,
                w.input,
                w.dropped(),
                result.report.len(),
                out.display()
            );
            Ok(())
        }
        Command::Report {
            run,
            out,
            stratify_by,
            merge_mode,
            include_out_of_band,
        } => {
            let out = out.unwrap_or_else(|| run.clone());
            let overrides = ReportOverrides {
                stratify_by,
                merge_mode,
                include_out_of_band,
            };
            let rows = rerender(&run, &out, overrides)?;
            info!("{rows} report rows in {}", out.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(if cli.verbose { log::LevelFilter::Debug } else { log::LevelFilter::Warn })
        .parse_env("RINGKIT_LOG")
        .init();
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("ringkit: config error: --jobs must be at least 1");
            return ExitCode::from(2);
        }
        pool = pool.num_threads(jobs);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("ringkit: {e}");
            return ExitCode::from(3);
        }
    };
    match pool.install(|| dispatch(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ringkit: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
