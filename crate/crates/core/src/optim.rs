//! First-order parameter updates.

use serde::{Deserialize, Serialize};

use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    /// Plain gradient descent.
    Sgd,
    #[default]
    Adam,
}

#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    step: i32,
    moments: Vec<(Vec<f64>, Vec<f64>)>,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64) -> Self {
        Self {
            kind,
            lr,
            step: 0,
            moments: Vec::new(),
        }
    }

    /// Applies one update; `params[i]` moves against `grads[i]`.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[&Tensor]) {
        debug_assert_eq!(params.len(), grads.len());
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grads) {
                    for (x, d) in p.data_mut().iter_mut().zip(g.data()) {
                        *x -= self.lr * d;
                    }
                }
            }
            OptimizerKind::Adam => {
                if self.moments.is_empty() {
                    self.moments = params
                        .iter()
                        .map(|p| (vec![0.0; p.len()], vec![0.0; p.len()]))
                        .collect();
                }
                self.step += 1;
                let c1 = 1.0 - BETA1.powi(self.step);
                let c2 = 1.0 - BETA2.powi(self.step);
                for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.moments.iter_mut()) {
                    for (k, (x, d)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                        m[k] = BETA1 * m[k] + (1.0 - BETA1) * d;
                        v[k] = BETA2 * v[k] + (1.0 - BETA2) * d * d;
                        *x -= self.lr * (m[k] / c1) / ((v[k] / c2).sqrt() + EPS);
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_kinds_descend_a_quadratic() {
        for kind in [OptimizerKind::Sgd, OptimizerKind::Adam] {
            let mut x = Tensor::vector(vec![3.0, -2.0]);
            let mut opt = Optimizer::new(kind, 0.1);
            for _ in 0..500 {
                let g = x.map(|v| 2.0 * v);
                opt.step(&mut [&mut x], &[&g]);
            }
            assert!(x.squared_norm() < 1e-3, "{kind:?}: {x:?}");
        }
    }

    #[test]
    fn zero_rate_leaves_parameters_untouched() {
        let orig = Tensor::vector(vec![1.25, -0.5]);
        let mut x = orig.clone();
        let mut opt = Optimizer::new(OptimizerKind::Adam, 0.0);
        opt.step(&mut [&mut x], &[&Tensor::vector(vec![10.0, -3.0])]);
        assert_eq!(x, orig);
    }
}
