//! Density-matrix anomaly detection.
//!
//! Points are mapped through random or adaptively tuned Fourier features, a
//! density matrix is fitted to the training features, and new points are
//! scored by the estimated density. The latent variant learns an autoencoder
//! jointly with the density matrix.

pub mod autodiff;
pub mod autoencoder;
pub mod dataset;
pub mod density;
pub mod detector;
pub mod error;
pub mod experiment;
pub mod fourier;
pub mod grid;
pub mod kernel;
pub mod metrics;
pub mod optim;
pub mod persist;
pub mod seed;
pub mod synthetic;
pub mod tensor;

pub use autoencoder::{AffInput, AutoencoderParams, LaddmConfig, LaddmModel};
pub use dataset::{load_dataset, split_and_standardize, LabeledDataset, Scaler, Split};
pub use density::{DensityMatrixModel, MleConfig};
pub use detector::{classify, compute_threshold, DetectorModel, Label};
pub use error::{Error, Result};
pub use experiment::{
    fit_model, run_ablation, run_experiment, EvaluationReport, ExperimentConfig, Method,
    ThresholdSource, TrainedModel,
};
pub use fourier::{AffConfig, FourierFeatureMap};
pub use grid::{grid_search, GridOutcome, GridSpec};
pub use kernel::GaussianKernelParams;
pub use metrics::{auc_pr, auc_roc, f1_score};
pub use persist::{load_model, save_model};
pub use tensor::Tensor;
