//! Batch pipeline over study directories: simulate policy families, score
//! offline and online metrics, fit uncertainty weights, and correlate.
//! Exit codes: 0 success, 2 configuration or input error, 3 evaluation error.

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use loopgap::config::{load_config, StudyConfig};
use loopgap::pipeline::{
    cmd_correlate, cmd_fit_uwe, cmd_report, cmd_score_offline, cmd_score_online, cmd_simulate,
    PipelineError, StageReport,
};

#[derive(Parser)]
#[command(
    name = "loopgap",
    version,
    about = "Offline and online evaluation of driving policies on deterministic studies"
)]
struct Cli {
    /// TOML run configuration; built-in defaults when absent.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed (overrides study.seed).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Study directory (overrides paths.out; default "study").
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads; 0 or absent uses all cores.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Also emit SVG scatter plots alongside the CSV scatter data.
    #[arg(long, global = true)]
    svg: bool,
    /// Override one config key, e.g. --set correlation.bootstrap=500
    /// (repeatable; applies before flag overrides).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a study: tracks, policies, ground truth, predictions, episodes.
    Simulate,
    /// Offline metric report for one prediction dataset (CSV on stdout).
    ScoreOffline {
        /// Dataset path; falls back to paths.dataset.
        dataset: Option<PathBuf>,
    },
    /// Online score report for one episode log (CSV on stdout).
    ScoreOnline {
        /// Episode log path; falls back to paths.episodes.
        episodes: Option<PathBuf>,
    },
    /// Fit UWE weights on a study; writes uwe.toml and fit_diagnostics.json.
    FitUwe {
        /// Study directory; falls back to --out, then paths.out.
        study: Option<PathBuf>,
    },
    /// Correlate offline metrics with online outcomes over a study.
    Correlate {
        /// Study directory; falls back to --out, then paths.out.
        study: Option<PathBuf>,
        /// Online metric that orders the correlation report.
        #[arg(long, value_name = "METRIC")]
        primary_online: Option<String>,
    },
    /// Fit, tabulate, and correlate a study in one pass.
    Report {
        /// Study directory; falls back to --out, then paths.out.
        study: Option<PathBuf>,
        /// Online metric that orders the correlation report.
        #[arg(long, value_name = "METRIC")]
        primary_online: Option<String>,
    },
}

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}

fn print_stage(stage: &StageReport) {
    for note in &stage.notes {
        eprintln!("note: {note}");
    }
    for file in &stage.files {
        println!("wrote {}", file.display());
    }
    println!("{}", stage.summary);
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    let mut cfg = load_config(cli.config.as_deref(), &cli.set)?;
    if let Some(seed) = cli.seed {
        cfg.study.seed = seed;
    }
    match &cli.cmd {
        Cmd::Correlate { primary_online: Some(p), .. } | Cmd::Report { primary_online: Some(p), .. } => {
            cfg.correlation.primary = p.clone();
            cfg.validate()?;
        }
        _ => {}
    }

    let study_dir = |pos: &Option<PathBuf>, cfg: &StudyConfig| -> PathBuf {
        pos.clone()
            .or_else(|| cli.out.clone())
            .or_else(|| cfg.paths.out.clone())
            .unwrap_or_else(|| PathBuf::from("study"))
    };
    let input_path = |pos: &Option<PathBuf>, fallback: &Option<PathBuf>, what: &str| -> Result<PathBuf, PipelineError> {
        pos.clone()
            .or_else(|| fallback.clone())
            .ok_or_else(|| PipelineError::Usage(format!("no {what} path given and paths.{what} is not set")))
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs.unwrap_or(0))
        .build()
        .map_err(|e| PipelineError::Runtime(format!("cannot build thread pool: {e}")))?;

    pool.install(|| -> Result<(), PipelineError> {
        match &cli.cmd {
            Cmd::Simulate => {
                let out = study_dir(&None, &cfg);
                print_stage(&cmd_simulate(&cfg, &out)?);
            }
            Cmd::ScoreOffline { dataset } => {
                let path = input_path(dataset, &cfg.paths.dataset, "dataset")?;
                let (csv, notes) = cmd_score_offline(&cfg, &path)?;
                for note in notes {
                    eprintln!("note: {note}");
                }
                print!("{csv}");
            }
            Cmd::ScoreOnline { episodes } => {
                let path = input_path(episodes, &cfg.paths.episodes, "episodes")?;
                print!("{}", cmd_score_online(&cfg, &path)?);
            }
            Cmd::FitUwe { study } => {
                print_stage(&cmd_fit_uwe(&cfg, &study_dir(study, &cfg))?);
            }
            Cmd::Correlate { study, .. } => {
                print_stage(&cmd_correlate(&cfg, &study_dir(study, &cfg), cli.svg)?);
            }
            Cmd::Report { study, .. } => {
                print_stage(&cmd_report(&cfg, &study_dir(study, &cfg), cli.svg)?);
            }
        }
        Ok(())
    })
}
