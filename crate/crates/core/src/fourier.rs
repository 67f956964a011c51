//! Random Fourier features for the Gaussian kernel and their adaptive
//! fine-tuning by gradient descent on sampled point pairs.

use std::f64::consts::PI;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::autodiff::Graph;
use crate::error::{Error, Result};
use crate::kernel::{gaussian_kernel, GaussianKernelParams};
use crate::tensor::{norm, Tensor};

/// Explicit feature map `phi(x)_j = sqrt(2/D) cos(w_j . x + b_j)`.
///
/// With `w_j ~ N(0, 2 gamma I)` and `b_j ~ U[0, 2 pi)`, `<phi(x), phi(y)>`
/// is an unbiased estimate of `exp(-gamma |x - y|^2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierFeatureMap {
    /// `[D, d]` frequencies, one row per feature.
    pub weights: Tensor,
    /// `D` phases.
    pub phases: Vec<f64>,
    pub gamma: f64,
}

impl FourierFeatureMap {
    pub fn from_parts(weights: Tensor, phases: Vec<f64>, gamma: f64) -> Result<Self> {
        let (features, _) = weights.expect_matrix("fourier weights")?;
        if features == 0 || phases.len() != features {
            return Err(Error::DimensionMismatch {
                expected: features,
                got: phases.len(),
            });
        }
        if gamma.is_nan() || gamma <= 0.0 {
            return Err(Error::invalid("gamma must be positive"));
        }
        Ok(Self {
            weights,
            phases,
            gamma,
        })
    }

    pub fn num_features(&self) -> usize {
        self.weights.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.weights.cols()
    }

    fn amplitude(&self) -> f64 {
        (2.0 / self.num_features() as f64).sqrt()
    }

    /// Features of a single point.
    pub fn feature_map(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        let amp = self.amplitude();
        Ok((0..self.num_features())
            .map(|j| amp * (crate::tensor::dot(self.weights.row(j), x) + self.phases[j]).cos())
            .collect())
    }

    /// Features of every row of an `[N, d]` matrix, as an `[N, D]` matrix.
    pub fn transform(&self, points: &Tensor) -> Result<Tensor> {
        let (_, d) = points.expect_matrix("feature transform")?;
        if d != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: d,
            });
        }
        let amp = self.amplitude();
        let mut out = points.matmul_transposed(&self.weights)?;
        let n_feat = self.num_features();
        for (k, v) in out.data_mut().iter_mut().enumerate() {
            *v = amp * (*v + self.phases[k % n_feat]).cos();
        }
        Ok(out)
    }

    /// Unit-normalized features of every row.
    pub fn transform_normalized(&self, points: &Tensor) -> Result<Tensor> {
        let mut phi = self.transform(points)?;
        for i in 0..phi.rows() {
            let unit = normalize_features(phi.row(i))?;
            phi.row_mut(i).copy_from_slice(&unit);
        }
        Ok(phi)
    }
}

/// Draws a random Fourier feature map for `exp(-gamma |x - y|^2)` on `R^d`.
pub fn sample_rff(
    d: usize,
    num_features: usize,
    gamma: f64,
    seed: u64,
) -> Result<FourierFeatureMap> {
    if d == 0 || num_features == 0 {
        return Err(Error::invalid(format!(
            "feature map needs d >= 1 and D >= 1, got d={d}, D={num_features}"
        )));
    }
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::invalid(format!(
            "gamma must be positive, got {gamma}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal =
        Normal::new(0.0, (2.0 * gamma).sqrt()).map_err(|e| Error::invalid(e.to_string()))?;
    let weights: Vec<f64> = (0..num_features * d)
        .map(|_| normal.sample(&mut rng))
        .collect();
    let uniform = Uniform::new(0.0, 2.0 * PI).map_err(|e| Error::invalid(e.to_string()))?;
    let phases: Vec<f64> = (0..num_features)
        .map(|_| uniform.sample(&mut rng))
        .collect();
    FourierFeatureMap::from_parts(Tensor::matrix(num_features, d, weights)?, phases, gamma)
}

pub fn feature_map(map: &FourierFeatureMap, x: &[f64]) -> Result<Vec<f64>> {
    map.feature_map(x)
}

/// Scales `phi` to unit Euclidean norm.
pub fn normalize_features(phi: &[f64]) -> Result<Vec<f64>> {
    let n = norm(phi);
    if n == 0.0 || !n.is_finite() {
        return Err(Error::invalid("cannot normalize a zero feature vector"));
    }
    Ok(phi.iter().map(|v| v / n).collect())
}

/// Mean squared error between the exact kernel and the feature inner product.
pub fn kernel_mse(
    map: &FourierFeatureMap,
    pairs: &[(Vec<f64>, Vec<f64>)],
    gamma: f64,
) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Empty("kernel_mse pairs"));
    }
    let params = GaussianKernelParams::new(gamma, map.input_dim())?;
    let mut total = 0.0;
    for (x, y) in pairs {
        let exact = gaussian_kernel(x, y, &params)?;
        let approx = crate::tensor::dot(&map.feature_map(x)?, &map.feature_map(y)?);
        total += (exact - approx).powi(2);
    }
    Ok(total / pairs.len() as f64)
}

/// Settings for adaptive fine-tuning of a feature map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffConfig {
    /// Pairs drawn per epoch.
    pub num_pairs: usize,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for AffConfig {
    fn default() -> Self {
        Self {
            num_pairs: 2000,
            epochs: 30,
            lr: 5.0,
            batch_size: 64,
            seed: 42,
        }
    }
}

/// Pairs of points drawn uniformly with replacement.
pub fn sample_pairs(
    data: &[Vec<f64>],
    count: usize,
    rng: &mut impl Rng,
) -> Vec<(Vec<f64>, Vec<f64>)> {
    (0..count)
        .map(|_| {
            let i = rng.random_range(0..data.len());
            let j = rng.random_range(0..data.len());
            (data[i].clone(), data[j].clone())
        })
        .collect()
}

/// Fine-tunes frequencies and phases so that feature inner products match
/// the exact kernel on randomly sampled pairs of `data`.
///
/// Plain minibatch gradient descent; pairs are redrawn every epoch. The
/// returned map is the one with the lowest error on a fixed validation pair
/// sample, which may be the input map itself.
pub fn train_aff(
    map: &FourierFeatureMap,
    data: &[Vec<f64>],
    gamma: f64,
    cfg: &AffConfig,
) -> Result<FourierFeatureMap> {
    if data.len() < 2 {
        return Err(Error::invalid(
            "adaptive feature training needs at least two points",
        ));
    }
    if cfg.num_pairs == 0 || cfg.batch_size == 0 {
        return Err(Error::invalid("num_pairs and batch_size must be positive"));
    }
    if cfg.epochs == 0 || cfg.lr == 0.0 {
        return Ok(map.clone());
    }
    let params = GaussianKernelParams::new(gamma, map.input_dim())?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let validation = sample_pairs(data, cfg.num_pairs.min(1000), &mut rng);

    let mut current = map.clone();
    let mut best = map.clone();
    let mut best_loss = kernel_mse(map, &validation, gamma)?;
    let mut last_finite = best_loss;
    let amp = current.amplitude();

    for epoch in 0..cfg.epochs {
        let pairs = sample_pairs(data, cfg.num_pairs, &mut rng);
        for batch in pairs.chunks(cfg.batch_size) {
            let left: Vec<Vec<f64>> = batch.iter().map(|p| p.0.clone()).collect();
            let right: Vec<Vec<f64>> = batch.iter().map(|p| p.1.clone()).collect();
            let target = batch
                .iter()
                .map(|(x, y)| gaussian_kernel(x, y, &params))
                .collect::<Result<Vec<_>>>()?;

            let mut g = Graph::new();
            let w = g.param(current.weights.clone());
            let b = g.param(Tensor::vector(current.phases.clone()));
            let xl = g.constant(Tensor::from_rows(&left)?);
            let xr = g.constant(Tensor::from_rows(&right)?);
            let t = g.constant(Tensor::vector(target));
            let wt = g.transpose(w)?;
            let feats = |g: &mut Graph, x| -> Result<_> {
                let proj = g.matmul(x, wt)?;
                let shifted = g.add_row(proj, b)?;
                let c = g.cos(shifted)?;
                g.scale(c, amp)
            };
            let fl = feats(&mut g, xl)?;
            let fr = feats(&mut g, xr)?;
            let prod = g.mul(fl, fr)?;
            let approx = g.row_sum(prod)?;
            let diff = g.sub(approx, t)?;
            let sq = g.square(diff)?;
            let loss = g.mean(sq)?;
            let loss_value = g.value(loss).item();
            if !loss_value.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    last_finite_loss: last_finite,
                });
            }
            last_finite = loss_value;
            let grads = g.backward(loss)?;
            let gw = grads.get(w).expect("trainable");
            let gb = grads.get(b).expect("trainable");
            for (p, d) in current.weights.data_mut().iter_mut().zip(gw.data()) {
                *p -= cfg.lr * d;
            }
            for (p, d) in current.phases.iter_mut().zip(gb.data()) {
                *p -= cfg.lr * d;
            }
        }
        let val = kernel_mse(&current, &validation, gamma)?;
        if !val.is_finite() {
            return Err(Error::Diverged {
                epoch,
                last_finite_loss: last_finite,
            });
        }
        if val < best_loss {
            best_loss = val;
            best = current.clone();
        }
    }
    Ok(best)
}
