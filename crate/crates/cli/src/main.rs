//! `addm`: train, score and evaluate density-matrix anomaly detectors from the
//! command line. Reports are written as one JSON object per line.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use addm_core::grid::DEFAULT_BUDGET;
use addm_core::{
    fit_model, grid_search, load_dataset, load_model, run_ablation, run_experiment, save_model,
    split_and_standardize, AffInput, EvaluationReport, ExperimentConfig, GridSpec, Method,
    ThresholdSource,
};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

#[derive(Parser)]
#[command(name = "addm", version, about = "Density-matrix anomaly detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train on the normal rows of the training split and save the model.
    Fit {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        hyper: Hyper,
        /// Where to write the model file.
        #[arg(long)]
        model: PathBuf,
    },
    /// Score every row of a CSV file with a saved model.
    Score {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Split, train, score the held-out rows and report metrics.
    Eval {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        hyper: Hyper,
        /// Also save the trained model.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Search a lattice of settings; list flags take comma-separated values.
    Gridsearch {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        grid: GridArgs,
        /// Maximum number of lattice points to evaluate.
        #[arg(long, default_value_t = DEFAULT_BUDGET)]
        budget: usize,
    },
    /// Run several methods on the same split.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        hyper: Hyper,
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "ae,kde,addm,laddm,laddm-norecon"
        )]
        methods: Vec<Method>,
    },
}

#[derive(Args)]
struct Common {
    /// CSV with feature columns followed by a 0/1 label column.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "addm")]
    method: Method,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Fraction of anomalies used for the threshold; defaults to the dataset's rate.
    #[arg(long)]
    outlier_rate: Option<f64>,
    #[arg(long, default_value_t = 0.8)]
    train_frac: f64,
    #[arg(long, default_value = "augmented")]
    aff_input: AffInput,
    /// Scores the threshold is taken over: the test batch or the training rows.
    #[arg(long, default_value = "test")]
    threshold: ThresholdSource,
    /// Epochs for the Fourier-feature fit; defaults to --epochs.
    #[arg(long)]
    aff_epochs: Option<usize>,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    /// Record wall-clock seconds in reports, which makes them non-reproducible.
    #[arg(long)]
    include_timing: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Hyper {
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    #[arg(long, default_value_t = 512)]
    features: usize,
    #[arg(long, default_value_t = 512)]
    rank: usize,
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long, value_delimiter = ',', default_value = "16,4")]
    encoder: Vec<usize>,
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
}

#[derive(Args)]
struct GridArgs {
    #[arg(long, value_delimiter = ',', default_value = "1")]
    gamma: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "512")]
    features: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "512")]
    rank: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0.5")]
    alpha: Vec<f64>,
    /// Encoder sizes; repeat the flag to try several architectures.
    #[arg(long, default_value = "16,4")]
    encoder: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "30")]
    epochs: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0.001")]
    lr: Vec<f64>,
}

fn parse_sizes(s: &str) -> Result<Vec<usize>, String> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<usize>()
                .map_err(|e| format!("bad encoder size '{p}': {e}"))
        })
        .collect()
}

impl Common {
    fn config(&self, hyper: &Hyper) -> ExperimentConfig {
        ExperimentConfig {
            method: self.method,
            gamma: hyper.gamma,
            num_features: hyper.features,
            rank: hyper.rank,
            alpha: hyper.alpha,
            encoder: hyper.encoder.clone(),
            epochs: hyper.epochs,
            lr: hyper.lr,
            ..self.base()
        }
    }

    fn base(&self) -> ExperimentConfig {
        ExperimentConfig {
            method: self.method,
            batch_size: self.batch_size,
            seed: self.seed,
            outlier_rate: self.outlier_rate,
            train_frac: self.train_frac,
            aff_input: self.aff_input,
            aff_epochs: self.aff_epochs,
            threshold: self.threshold,
            ..ExperimentConfig::default()
        }
    }
}

fn output(path: Option<&Path>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn report_line(mut report: EvaluationReport, timing: bool) -> String {
    if !timing {
        report.seconds = None;
    }
    report.to_json_line()
}

fn run(cli: Cli) -> Result<(), Box<dyn std::error::Error>> {
    match cli.command {
        Command::Fit {
            common,
            hyper,
            model,
        } => {
            let ds = load_dataset(&common.data)?;
            let cfg = common.config(&hyper);
            cfg.validate()?;
            let split =
                split_and_standardize(&ds, cfg.train_frac, cfg.split_seed.unwrap_or(cfg.seed))?;
            let rate = cfg.outlier_rate.unwrap_or_else(|| ds.outlier_rate());
            let trained = fit_model(&split.train, split.scaler, &cfg, rate)?;
            save_model(&model, &trained)?;
            let mut out = output(common.out.as_deref())?;
            let line = json!({
                "model": model.display().to_string(),
                "method": cfg.method,
                "tau": trained.tau,
                "outlier_rate": rate,
                "n_train": split.train.rows(),
            });
            writeln!(out, "{line}")?;
            out.flush()?;
        }
        Command::Score { data, model, out } => {
            let ds = load_dataset(&data)?;
            let trained = load_model(&model)?;
            let normality = trained.normality_scores(&ds.features)?;
            let detector = trained.detector();
            let mut out = output(out.as_deref())?;
            for (row, s) in normality.iter().enumerate() {
                let line = json!({
                    "row": row,
                    "score": -s,
                    "anomaly": detector.classify(*s).is_anomaly(),
                });
                writeln!(out, "{line}")?;
            }
            out.flush()?;
        }
        Command::Eval {
            common,
            hyper,
            model,
        } => {
            let ds = load_dataset(&common.data)?;
            let cfg = common.config(&hyper);
            let report = run_experiment(&ds, &cfg)?;
            if let Some(path) = model {
                let split =
                    split_and_standardize(&ds, cfg.train_frac, cfg.split_seed.unwrap_or(cfg.seed))?;
                save_model(
                    &path,
                    &fit_model(&split.train, split.scaler, &cfg, report.outlier_rate)?,
                )?;
            }
            let mut out = output(common.out.as_deref())?;
            writeln!(out, "{}", report_line(report, common.include_timing))?;
            out.flush()?;
        }
        Command::Gridsearch {
            common,
            grid,
            budget,
        } => {
            let ds = load_dataset(&common.data)?;
            let spec = GridSpec {
                gamma: grid.gamma,
                num_features: grid.features,
                rank: grid.rank,
                alpha: grid.alpha,
                encoder: grid
                    .encoder
                    .iter()
                    .map(|s| parse_sizes(s))
                    .collect::<Result<_, _>>()?,
                epochs: grid.epochs,
                lr: grid.lr,
            };
            let outcome = grid_search(&ds, &common.base(), &spec, budget)?;
            let mut out = output(common.out.as_deref())?;
            for (index, report) in &outcome.reports {
                let line = json!({
                    "trial": index,
                    "auc_roc": report.auc_roc,
                    "auc_pr": report.auc_pr,
                    "f1": report.f1,
                    "config": report.config,
                });
                writeln!(out, "{line}")?;
            }
            for (index, cause) in &outcome.failures {
                writeln!(out, "{}", json!({ "trial": index, "error": cause }))?;
            }
            writeln!(
                out,
                "{{\"best_trial\":{},\"report\":{}}}",
                outcome.best_index,
                report_line(outcome.best_report, common.include_timing)
            )?;
            out.flush()?;
        }
        Command::Ablate {
            common,
            hyper,
            methods,
        } => {
            let ds = load_dataset(&common.data)?;
            let reports = run_ablation(&ds, &common.config(&hyper), &methods)?;
            let mut out = output(common.out.as_deref())?;
            for report in reports {
                writeln!(out, "{}", report_line(report, common.include_timing))?;
            }
            out.flush()?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
