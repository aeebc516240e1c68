//! `vibropt` command-line driver.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data or I/O
//! error, 3 numerical failure.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use vibropt::estimators::EstimatorKind;
use vibropt::experiment::{fixture_config, paper_config, write_atomic, Config, StageOutcome, Workspace};
use vibropt::signal_io::{synth_dataset, write_corpus};
use vibropt::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "vibropt", version, about = "Pipeline and classifier optimisation for vibration fault data")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// TOML configuration; the built-in fixture configuration when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Overrides the configured cache directory.
    #[arg(long, global = true)]
    cache_dir: Option<PathBuf>,
    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Restricts a stage to the named experiment (repeatable).
    #[arg(long = "experiment", global = true)]
    experiments: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Scan the data source and record labels and folds.
    Ingest,
    /// Write the synthetic corpus as a CSV directory tree.
    Synth {
        #[arg(long)]
        out: PathBuf,
    },
    /// Search stage hyperparameters and orderings per fold.
    OptimizeSp,
    /// Extract features with each fold's winning pipeline.
    Extract,
    /// Select features, tune and evaluate the classifiers.
    Train,
    /// Paired tests on per-entry errors. With two `--experiment` flags runs
    /// an ad hoc comparison (first is the alternative).
    Compare {
        #[arg(long)]
        estimator: Option<EstimatorKind>,
    },
    /// Re-score test folds with the saved models of one experiment.
    Evaluate {
        #[arg(long)]
        estimator: EstimatorKind,
    },
    /// Summary tables from finished stages.
    Report,
    /// Every stage in order.
    All,
    /// Print a configuration template.
    InitConfig {
        /// Template for the full-size study on a directory corpus.
        #[arg(long)]
        full: bool,
        /// Corpus root used by the `--full` template.
        #[arg(long, default_value = "data/mafaulda")]
        data_root: PathBuf,
        /// Write to this file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(g: &Global) -> Result<Config> {
    let mut cfg = match &g.config {
        Some(p) => Config::load(p)?,
        None => fixture_config(),
    };
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(d) = &g.cache_dir {
        cfg.paths.cache_dir = d.clone();
    }
    if let Some(d) = &g.out_dir {
        cfg.paths.output_dir = d.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Writes to stdout, ignoring a closed pipe.
fn emit(text: &str) {
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

fn print_outcomes(outcomes: &[StageOutcome]) {
    for o in outcomes {
        let state = if o.cached { "up to date" } else { "written" };
        emit(&format!("{:<12} {:<28} {state}\n", o.stage, o.target));
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(j) = cli.global.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build_global()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    }
    let only = &cli.global.experiments;
    match cli.command {
        Command::InitConfig { full, data_root, out } => {
            let cfg = if full { paper_config(&data_root) } else { fixture_config() };
            let text = cfg.to_toml();
            match out {
                Some(p) => write_atomic(&p, text.as_bytes())?,
                None => emit(&text),
            }
            Ok(())
        }
        Command::Synth { out } => {
            let cfg = load_config(&cli.global)?;
            let spec = cfg.data.synth_spec().ok_or_else(|| {
                Error::Config("synth needs a configuration with synthetic data".into())
            })?;
            let d = synth_dataset(&spec, cfg.seed)?;
            write_corpus(&d, &out)?;
            emit(&format!("wrote {} windows to {}\n", d.len(), out.display()));
            Ok(())
        }
        command => {
            let ws = Workspace::new(load_config(&cli.global)?)?;
            let outcomes = match command {
                Command::Ingest => vec![ws.ingest()?],
                Command::OptimizeSp => ws.optimize_sp(only)?,
                Command::Extract => ws.extract(only)?,
                Command::Train => ws.train(only)?,
                Command::Compare { estimator } => match only.as_slice() {
                    [] => ws.compare(None, estimator)?,
                    [alt, null] => ws.compare(Some((alt, null)), estimator)?,
                    _ => {
                        return Err(Error::InvalidArgument(
                            "compare takes no --experiment or exactly two".into(),
                        ))
                    }
                },
                Command::Evaluate { estimator } => {
                    let [exp] = only.as_slice() else {
                        return Err(Error::InvalidArgument("evaluate takes exactly one --experiment".into()));
                    };
                    let ev = ws.evaluate(exp, estimator)?;
                    let mut text = String::new();
                    for (fold, m) in &ev.folds {
                        text += &format!("fold {fold}: f1 {:.4}  accuracy {:.4}  mae {:.4}\n", m.f1_weighted, m.accuracy, m.mae);
                    }
                    text += &format!(
                        "pooled: f1 {:.4}  accuracy {:.4}  mae {:.4}\nmatches stored predictions: {}\n",
                        ev.pooled.f1_weighted, ev.pooled.accuracy, ev.pooled.mae, ev.matches_stored
                    );
                    emit(&text);
                    if !ev.matches_stored {
                        return Err(Error::Numerical("re-scored predictions differ from the stored ones".into()));
                    }
                    Vec::new()
                }
                Command::Report => vec![ws.report()?],
                Command::All => ws.run_all()?,
                Command::InitConfig { .. } | Command::Synth { .. } => unreachable!(),
            };
            print_outcomes(&outcomes);
            if matches!(command_name(&outcomes), Some("report")) {
                let txt = ws.out_dir.join("report.txt");
                if let Ok(t) = std::fs::read_to_string(&txt) {
                    emit(&format!("\n{t}"));
                }
            }
            Ok(())
        }
    }
}

fn command_name(outcomes: &[StageOutcome]) -> Option<&str> {
    outcomes.last().map(|o| o.stage.as_str())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
