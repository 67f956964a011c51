//! Budgeted lattice search over experiment settings.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::experiment::{run_experiment, EvaluationReport, ExperimentConfig};
use crate::seed::derive_seed;

/// Candidate values per field. The lattice is enumerated with `gamma`
/// varying slowest and `lr` fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub gamma: Vec<f64>,
    pub num_features: Vec<usize>,
    pub rank: Vec<usize>,
    pub alpha: Vec<f64>,
    pub encoder: Vec<Vec<usize>>,
    pub epochs: Vec<usize>,
    pub lr: Vec<f64>,
}

impl GridSpec {
    /// A one-point lattice holding the values of `base`.
    pub fn single(base: &ExperimentConfig) -> Self {
        Self {
            gamma: vec![base.gamma],
            num_features: vec![base.num_features],
            rank: vec![base.rank],
            alpha: vec![base.alpha],
            encoder: vec![base.encoder.clone()],
            epochs: vec![base.epochs],
            lr: vec![base.lr],
        }
    }

    pub fn len(&self) -> usize {
        self.gamma.len()
            * self.num_features.len()
            * self.rank.len()
            * self.alpha.len()
            * self.encoder.len()
            * self.epochs.len()
            * self.lr.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The first `limit` lattice points applied to `base`.
    pub fn configs(&self, base: &ExperimentConfig, limit: usize) -> Vec<ExperimentConfig> {
        let mut out = Vec::new();
        'outer: for &gamma in &self.gamma {
            for &num_features in &self.num_features {
                for &rank in &self.rank {
                    for &alpha in &self.alpha {
                        for encoder in &self.encoder {
                            for &epochs in &self.epochs {
                                for &lr in &self.lr {
                                    if out.len() == limit {
                                        break 'outer;
                                    }
                                    out.push(ExperimentConfig {
                                        gamma,
                                        num_features,
                                        rank,
                                        alpha,
                                        encoder: encoder.clone(),
                                        epochs,
                                        lr,
                                        ..base.clone()
                                    });
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

pub const DEFAULT_BUDGET: usize = 100;

#[derive(Debug, Clone)]
pub struct GridOutcome {
    /// Lattice index of the winner.
    pub best_index: usize,
    pub best_config: ExperimentConfig,
    pub best_report: EvaluationReport,
    /// Successful trials in lattice order.
    pub reports: Vec<(usize, EvaluationReport)>,
    /// Failed trials in lattice order.
    pub failures: Vec<(usize, String)>,
}

fn rank_key(r: &EvaluationReport) -> (f64, f64) {
    (
        r.auc_roc.unwrap_or(f64::NEG_INFINITY),
        r.auc_pr.unwrap_or(f64::NEG_INFINITY),
    )
}

/// Position of the best report: highest AUC-ROC, then highest AUC-PR, then
/// earliest. Undefined metrics rank below every defined value.
pub fn best_trial<'a>(reports: impl IntoIterator<Item = &'a EvaluationReport>) -> Option<usize> {
    let mut best: Option<(usize, (f64, f64))> = None;
    for (i, r) in reports.into_iter().enumerate() {
        let key = rank_key(r);
        if best.is_none_or(|(_, b)| key > b) {
            best = Some((i, key));
        }
    }
    best.map(|(i, _)| i)
}

/// Evaluates the first `budget` lattice points and returns the one with the
/// highest AUC-ROC, then AUC-PR, then earliest lattice position.
///
/// Every trial shares the split of `base.seed`; its training seed is derived
/// from `base.seed` and the lattice index. Trials run in parallel.
pub fn grid_search(
    ds: &LabeledDataset,
    base: &ExperimentConfig,
    grid: &GridSpec,
    budget: usize,
) -> Result<GridOutcome> {
    if grid.is_empty() {
        return Err(Error::Empty("grid"));
    }
    if budget == 0 {
        return Err(Error::invalid("grid budget must be positive"));
    }
    let split_seed = base.split_seed.unwrap_or(base.seed);
    let configs: Vec<ExperimentConfig> = grid
        .configs(base, budget)
        .into_iter()
        .enumerate()
        .map(|(i, c)| ExperimentConfig {
            seed: derive_seed(base.seed, i as u64),
            split_seed: Some(split_seed),
            ..c
        })
        .collect();
    let results: Vec<Result<EvaluationReport>> =
        configs.par_iter().map(|c| run_experiment(ds, c)).collect();

    let mut reports = Vec::new();
    let mut failures = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(rep) => reports.push((i, rep)),
            Err(e) => failures.push((i, e.to_string())),
        }
    }
    let Some(pos) = best_trial(reports.iter().map(|(_, r)| r)) else {
        return Err(Error::AllTrialsFailed {
            count: failures.len(),
            causes: failures
                .iter()
                .map(|(i, e)| format!("trial {i}: {e}"))
                .collect::<Vec<_>>()
                .join("; "),
        });
    };
    let (best_index, best_report) = reports[pos].clone();
    Ok(GridOutcome {
        best_index,
        best_config: configs[best_index].clone(),
        best_report,
        reports,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lattice_order_and_prefix() {
        let base = ExperimentConfig::default();
        let grid = GridSpec {
            gamma: vec![0.1, 1.0],
            lr: vec![1e-3, 1e-2, 1e-1],
            ..GridSpec::single(&base)
        };
        assert_eq!(grid.len(), 6);
        let all = grid.configs(&base, 100);
        assert_eq!(all.len(), 6);
        assert_eq!((all[0].gamma, all[0].lr), (0.1, 1e-3));
        assert_eq!((all[1].gamma, all[1].lr), (0.1, 1e-2));
        assert_eq!((all[3].gamma, all[3].lr), (1.0, 1e-3));
        assert_eq!(grid.configs(&base, 4).len(), 4);
    }
}
