//! Train/test orchestration for every method and the evaluation report.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autoencoder::{
    reconstruction_errors, train_laddm, train_reconstruction, AffInput, AutoencoderParams,
    LaddmConfig, LaddmModel,
};
use crate::dataset::{split_and_standardize, LabeledDataset, Scaler};
use crate::density::{train_mle, DensityMatrixModel, MleConfig};
use crate::detector::{compute_threshold, DetectorModel, Label};
use crate::error::{Error, Result};
use crate::fourier::{sample_rff, train_aff, AffConfig, FourierFeatureMap};
use crate::kernel::{kde_log_estimate, log_normalization_constant, GaussianKernelParams};
use crate::metrics::{auc_pr, auc_roc, f1_score};
use crate::optim::OptimizerKind;
use crate::seed::derive_seed;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Fourier features and a density matrix on the raw features.
    Addm,
    /// Autoencoder trained jointly with the density matrix.
    Laddm,
    /// Exact Parzen estimate.
    Kde,
    /// Autoencoder reconstruction error alone.
    Ae,
    /// Latent model trained on the log-likelihood term only.
    LaddmNorecon,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Addm,
        Method::Laddm,
        Method::Kde,
        Method::Ae,
        Method::LaddmNorecon,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Addm => "addm",
            Method::Laddm => "laddm",
            Method::Kde => "kde",
            Method::Ae => "ae",
            Method::LaddmNorecon => "laddm-norecon",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown method '{s}'")))
    }
}

/// Which scores the threshold is computed over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdSource {
    /// The evaluation batch itself.
    #[default]
    Test,
    /// The training scores, as for a deployed model.
    Train,
}

impl FromStr for ThresholdSource {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "test" => Ok(ThresholdSource::Test),
            "train" => Ok(ThresholdSource::Train),
            other => Err(Error::invalid(format!(
                "unknown threshold source '{other}'"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub method: Method,
    pub gamma: f64,
    pub num_features: usize,
    pub rank: usize,
    pub alpha: f64,
    /// Encoder output widths, latent size last.
    pub encoder: Vec<usize>,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Seed of the train/test split; defaults to `seed`.
    #[serde(default)]
    pub split_seed: Option<u64>,
    /// Overrides the dataset's anomaly fraction when set.
    pub outlier_rate: Option<f64>,
    pub train_frac: f64,
    pub aff_input: AffInput,
    /// Feature-map fitting epochs; defaults to `epochs`.
    pub aff_epochs: Option<usize>,
    pub aff_lr: f64,
    pub aff_pairs: usize,
    pub threshold: ThresholdSource,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            method: Method::Addm,
            gamma: 1.0,
            num_features: 512,
            rank: 512,
            alpha: 0.5,
            encoder: vec![16, 4],
            epochs: 30,
            lr: 1e-3,
            batch_size: 64,
            seed: 42,
            split_seed: None,
            outlier_rate: None,
            train_frac: 0.8,
            aff_input: AffInput::Augmented,
            aff_epochs: None,
            aff_lr: AffConfig::default().lr,
            aff_pairs: AffConfig::default().num_pairs,
            threshold: ThresholdSource::Test,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return bad(format!("gamma must be positive, got {}", self.gamma));
        }
        if self.num_features == 0 || self.rank == 0 {
            return bad("features and rank must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad(format!("alpha must lie in [0, 1], got {}", self.alpha));
        }
        if matches!(
            self.method,
            Method::Laddm | Method::LaddmNorecon | Method::Ae
        ) && (self.encoder.is_empty() || self.encoder.contains(&0))
        {
            return bad(format!("invalid encoder sizes {:?}", self.encoder));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite())
            || !(self.aff_lr >= 0.0 && self.aff_lr.is_finite())
        {
            return bad("learning rates must be finite and non-negative".into());
        }
        if self.batch_size == 0 || self.aff_pairs == 0 {
            return bad("batch size and pair count must be positive".into());
        }
        if !(self.train_frac > 0.0 && self.train_frac < 1.0) {
            return bad(format!(
                "train_frac must lie in (0, 1), got {}",
                self.train_frac
            ));
        }
        if let Some(r) = self.outlier_rate {
            if !(0.0..=1.0).contains(&r) {
                return bad(format!("outlier rate must lie in [0, 1], got {r}"));
            }
        }
        Ok(())
    }

    fn aff_config(&self, stream: u64) -> AffConfig {
        AffConfig {
            num_pairs: self.aff_pairs,
            epochs: self.aff_epochs.unwrap_or(self.epochs),
            lr: self.aff_lr,
            batch_size: AffConfig::default().batch_size,
            seed: derive_seed(self.seed, stream),
        }
    }

    fn laddm_config(&self) -> LaddmConfig {
        LaddmConfig {
            encoder: self.encoder.clone(),
            gamma: self.gamma,
            num_features: self.num_features,
            rank: self.rank,
            alpha: if self.method == Method::LaddmNorecon {
                1.0
            } else {
                self.alpha
            },
            epochs: self.epochs,
            lr: self.lr,
            batch_size: self.batch_size,
            seed: self.seed,
            aff_input: self.aff_input,
            warmup_epochs: 10,
            aff: self.aff_config(2),
            optimizer: OptimizerKind::Adam,
        }
    }
}

/// The fitted scorer behind a [`TrainedModel`].
#[derive(Debug, Clone)]
pub enum Estimator {
    Addm {
        feature_map: FourierFeatureMap,
        density: DensityMatrixModel,
    },
    Laddm(LaddmModel),
    Kde {
        train: Tensor,
        gamma: f64,
    },
    Autoencoder(AutoencoderParams),
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub config: ExperimentConfig,
    pub scaler: Scaler,
    pub estimator: Estimator,
    /// Threshold on normality scores, calibrated on the training scores.
    pub tau: f64,
}

impl TrainedModel {
    /// Normality scores of raw (unstandardized) rows.
    pub fn normality_scores(&self, raw: &Tensor) -> Result<Vec<f64>> {
        self.normality_scores_standardized(&self.scaler.transform(raw)?)
    }

    /// Normality scores of rows already mapped through the scaler: the log
    /// density for the density methods and the negated squared
    /// reconstruction error for the plain autoencoder. Higher means more
    /// normal.
    pub fn normality_scores_standardized(&self, x: &Tensor) -> Result<Vec<f64>> {
        match &self.estimator {
            Estimator::Addm {
                feature_map,
                density,
            } => density.log_density_batch(&feature_map.transform_normalized(x)?),
            Estimator::Laddm(m) => {
                let o = crate::autoencoder::embed(&m.autoencoder, x, m.aff_input)?;
                m.density
                    .log_density_batch(&m.feature_map.transform_normalized(&o)?)
            }
            Estimator::Kde { train, gamma } => {
                let params = GaussianKernelParams::new(*gamma, train.cols())?;
                let rows: Vec<Vec<f64>> =
                    (0..train.rows()).map(|i| train.row(i).to_vec()).collect();
                (0..x.rows())
                    .into_par_iter()
                    .map(|i| kde_log_estimate(&rows, x.row(i), &params))
                    .collect()
            }
            Estimator::Autoencoder(ae) => Ok(reconstruction_errors(ae, x)?
                .into_iter()
                .map(|e| -e)
                .collect()),
        }
    }

    pub fn detector(&self) -> DetectorModel {
        DetectorModel {
            tau: self.tau,
            outlier_rate: self.config.outlier_rate.unwrap_or(f64::NAN),
        }
    }

    /// Labels raw rows against the stored threshold.
    pub fn classify(&self, raw: &Tensor) -> Result<Vec<Label>> {
        Ok(self.detector().classify_batch(&self.normality_scores(raw)?))
    }
}

/// Fits `cfg.method` on standardized normal rows and calibrates the stored
/// threshold on their scores at `outlier_rate`.
pub fn fit_model(
    train: &Tensor,
    scaler: Scaler,
    cfg: &ExperimentConfig,
    outlier_rate: f64,
) -> Result<TrainedModel> {
    cfg.validate()?;
    let (n, d) = train.expect_matrix("training data")?;
    if n == 0 {
        return Err(Error::Empty("training data"));
    }
    let estimator = match cfg.method {
        Method::Addm => {
            let mut map = sample_rff(d, cfg.num_features, cfg.gamma, derive_seed(cfg.seed, 1))?;
            let aff = cfg.aff_config(2);
            if aff.epochs > 0 && n >= 2 {
                let rows: Vec<Vec<f64>> = (0..n).map(|i| train.row(i).to_vec()).collect();
                map = train_aff(&map, &rows, cfg.gamma, &aff)?;
            }
            let phi = map.transform_normalized(train)?;
            let log_m = log_normalization_constant(&GaussianKernelParams::new(cfg.gamma, d)?)?;
            let density =
                DensityMatrixModel::from_features(&phi, cfg.rank.min(cfg.num_features), log_m)?;
            let mle = MleConfig {
                epochs: cfg.epochs,
                lr: cfg.lr,
                batch_size: cfg.batch_size,
                seed: derive_seed(cfg.seed, 5),
                optimizer: OptimizerKind::Adam,
            };
            let (density, _) = train_mle(&density, &phi, &mle)?;
            Estimator::Addm {
                feature_map: map,
                density,
            }
        }
        Method::Laddm | Method::LaddmNorecon => {
            Estimator::Laddm(train_laddm(train, &cfg.laddm_config())?.0)
        }
        Method::Kde => Estimator::Kde {
            train: train.clone(),
            gamma: cfg.gamma,
        },
        Method::Ae => {
            let ae = AutoencoderParams::init(d, &cfg.encoder, derive_seed(cfg.seed, 0))?;
            let ae = train_reconstruction(
                &ae,
                train,
                cfg.epochs,
                cfg.lr,
                cfg.batch_size,
                derive_seed(cfg.seed, 3),
                OptimizerKind::Adam,
            )?;
            Estimator::Autoencoder(ae)
        }
    };
    let mut model = TrainedModel {
        config: cfg.clone(),
        scaler,
        estimator,
        tau: 0.0,
    };
    model.config.outlier_rate = Some(outlier_rate);
    let scores = model.normality_scores_standardized(train)?;
    model.tau = compute_threshold(&scores, outlier_rate)?;
    Ok(model)
}

/// Metrics and scores of one train/test run, serialized as one JSON object
/// per line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub dataset: String,
    pub method: Method,
    /// `None` when the test set holds a single class.
    pub auc_roc: Option<f64>,
    pub auc_pr: Option<f64>,
    pub f1: f64,
    /// Threshold on normality scores.
    pub tau: f64,
    pub outlier_rate: f64,
    pub n_train: usize,
    pub n_test: usize,
    /// Anomaly score of every test row (negated normality score).
    pub scores: Vec<f64>,
    /// Predicted anomaly flags of every test row.
    pub predicted: Vec<bool>,
    pub config: ExperimentConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seconds: Option<f64>,
}

impl EvaluationReport {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("report fields are serializable")
    }
}

fn defined(metric: Result<f64>) -> Result<Option<f64>> {
    match metric {
        Ok(v) => Ok(Some(v)),
        Err(Error::UndefinedMetric(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Splits, trains, scores the test rows, thresholds and computes metrics.
pub fn run_experiment(ds: &LabeledDataset, cfg: &ExperimentConfig) -> Result<EvaluationReport> {
    let start = Instant::now();
    cfg.validate()?;
    let split = split_and_standardize(ds, cfg.train_frac, cfg.split_seed.unwrap_or(cfg.seed))?;
    let rate = cfg.outlier_rate.unwrap_or_else(|| ds.outlier_rate());
    let model = fit_model(&split.train, split.scaler.clone(), cfg, rate)?;
    let normality = model.normality_scores_standardized(&split.test)?;
    let tau = match cfg.threshold {
        ThresholdSource::Test => compute_threshold(&normality, rate)?,
        ThresholdSource::Train => model.tau,
    };
    let detector = DetectorModel {
        tau,
        outlier_rate: rate,
    };
    let predicted: Vec<bool> = detector
        .classify_batch(&normality)
        .into_iter()
        .map(Label::is_anomaly)
        .collect();
    let scores: Vec<f64> = normality.iter().map(|s| -s).collect();
    let mut config = cfg.clone();
    config.outlier_rate = Some(rate);
    Ok(EvaluationReport {
        dataset: ds.name.clone(),
        method: cfg.method,
        auc_roc: defined(auc_roc(&scores, &split.test_labels))?,
        auc_pr: defined(auc_pr(&scores, &split.test_labels))?,
        f1: f1_score(&predicted, &split.test_labels)?,
        tau,
        outlier_rate: rate,
        n_train: split.train.rows(),
        n_test: split.test.rows(),
        scores,
        predicted,
        config,
        seconds: Some(start.elapsed().as_secs_f64()),
    })
}

/// One report per method, all sharing the rest of `cfg`.
pub fn run_ablation(
    ds: &LabeledDataset,
    cfg: &ExperimentConfig,
    methods: &[Method],
) -> Result<Vec<EvaluationReport>> {
    methods
        .iter()
        .map(|&method| {
            run_experiment(
                ds,
                &ExperimentConfig {
                    method,
                    ..cfg.clone()
                },
            )
        })
        .collect()
}
