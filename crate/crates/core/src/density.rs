//! Density matrices over unit-normalized Fourier features.
//!
//! The density matrix is `rho = (1/N) sum_i phi_i phi_i^T`. It is stored in
//! low-rank spectral form `rho ~= V^T diag(lambda) V` and a query's density
//! is `|diag(lambda)^{1/2} V phi|^2 / M`.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{softmax, Graph};
use crate::error::{Error, Result};
use crate::optim::{Optimizer, OptimizerKind};
use crate::tensor::{dot, norm, Tensor};

/// Eigenvalues below this are treated as exact zeros.
pub const EIGEN_FLOOR: f64 = 1e-12;

const UNIT_TOL_BUILD: f64 = 1e-8;
const UNIT_TOL_QUERY: f64 = 1e-6;
const SYMMETRY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityMatrixModel {
    /// `[r, D]`, one eigenvector per row.
    pub eigenvectors: Tensor,
    /// `r` eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    /// Natural log of the normalization constant `M`.
    pub log_normalization: f64,
}

impl DensityMatrixModel {
    pub fn new(
        eigenvectors: Tensor,
        eigenvalues: Vec<f64>,
        log_normalization: f64,
    ) -> Result<Self> {
        let (r, _) = eigenvectors.expect_matrix("density model")?;
        if r != eigenvalues.len() || r == 0 {
            return Err(Error::DimensionMismatch {
                expected: r,
                got: eigenvalues.len(),
            });
        }
        if eigenvalues.iter().any(|&l| l.is_nan() || l < 0.0) {
            return Err(Error::invalid("eigenvalues must be non-negative"));
        }
        Ok(Self {
            eigenvectors,
            eigenvalues,
            log_normalization,
        })
    }

    /// Builds the model from unit feature rows, keeping at most `rank`
    /// eigenpairs.
    ///
    /// With fewer samples than features the decomposition goes through the
    /// `N x N` Gram matrix and never forms `rho`; eigenpairs with zero
    /// eigenvalue are then dropped, since they contribute nothing to any
    /// density.
    pub fn from_features(features: &Tensor, rank: usize, log_normalization: f64) -> Result<Self> {
        let (n, d) = features.expect_matrix("density features")?;
        if n == 0 {
            return Err(Error::Empty("density features"));
        }
        if rank == 0 || rank > d {
            return Err(Error::invalid(format!(
                "rank must be in 1..={d}, got {rank}"
            )));
        }
        check_unit_rows(features, UNIT_TOL_BUILD)?;
        let (vectors, values) = if n < d {
            gram_decompose(features, rank)?
        } else {
            let rho = density_matrix_from_tensor(features)?;
            spectral_decompose(&rho, rank)?
        };
        Self::new(vectors, values, log_normalization)
    }

    pub fn rank(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.eigenvectors.cols()
    }

    pub fn normalization(&self) -> f64 {
        self.log_normalization.exp()
    }

    /// `sum_k lambda_k (v_k . phi)^2`, without the `1/M` factor.
    fn quadratic_form(&self, phi: &[f64]) -> f64 {
        self.eigenvalues
            .iter()
            .enumerate()
            .map(|(k, &l)| {
                let p = dot(self.eigenvectors.row(k), phi);
                l * p * p
            })
            .sum()
    }

    /// Density of a unit feature vector.
    pub fn estimate_density(&self, phi: &[f64]) -> Result<f64> {
        if phi.len() != self.feature_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.feature_dim(),
                got: phi.len(),
            });
        }
        let n = norm(phi);
        if (n - 1.0).abs() > UNIT_TOL_QUERY {
            return Err(Error::NotUnitNorm { index: 0, norm: n });
        }
        Ok(self.quadratic_form(phi) * (-self.log_normalization).exp())
    }

    fn batch_quadratic_forms(&self, features: &Tensor) -> Result<Vec<f64>> {
        let (_, d) = features.expect_matrix("density query")?;
        if d != self.feature_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.feature_dim(),
                got: d,
            });
        }
        check_unit_rows(features, UNIT_TOL_QUERY)?;
        let proj = features.matmul_transposed(&self.eigenvectors)?;
        Ok((0..proj.rows())
            .map(|i| {
                proj.row(i)
                    .iter()
                    .zip(&self.eigenvalues)
                    .map(|(p, l)| l * p * p)
                    .sum::<f64>()
            })
            .collect())
    }

    /// Densities of every row of a `[m, D]` matrix of unit feature vectors.
    pub fn estimate_batch(&self, features: &Tensor) -> Result<Vec<f64>> {
        let scale = (-self.log_normalization).exp();
        Ok(self
            .batch_quadratic_forms(features)?
            .into_iter()
            .map(|q| q * scale)
            .collect())
    }

    /// Natural log of [`Self::estimate_batch`], computed without forming
    /// `1/M`, so it stays finite when the density itself would underflow.
    /// A zero quadratic form maps to the log of the smallest positive normal
    /// float.
    pub fn log_density_batch(&self, features: &Tensor) -> Result<Vec<f64>> {
        Ok(self
            .batch_quadratic_forms(features)?
            .into_iter()
            .map(|q| q.max(f64::MIN_POSITIVE).ln() - self.log_normalization)
            .collect())
    }

    /// Mean of `ln f(x_i)` over the rows, with the logarithm guarded like
    /// the training loss.
    pub fn mean_log_likelihood(&self, features: &Tensor) -> Result<f64> {
        let proj = features.matmul_transposed(&self.eigenvectors)?;
        let n = proj.rows();
        let total: f64 = (0..n)
            .map(|i| {
                let q: f64 = proj
                    .row(i)
                    .iter()
                    .zip(&self.eigenvalues)
                    .map(|(p, l)| l * p * p)
                    .sum();
                q.max(crate::autodiff::LOG_GUARD).ln()
            })
            .sum();
        Ok(total / n as f64 - self.log_normalization)
    }

    /// Eigenvalue logits used as the unconstrained training parametrization.
    pub(crate) fn logits(&self) -> Vec<f64> {
        self.eigenvalues
            .iter()
            .map(|&l| l.max(EIGEN_FLOOR).ln())
            .collect()
    }

    pub(crate) fn from_logits(vectors: Tensor, logits: &[f64], log_normalization: f64) -> Self {
        Self {
            eigenvectors: vectors,
            eigenvalues: softmax(logits),
            log_normalization,
        }
    }
}

fn check_unit_rows(features: &Tensor, tol: f64) -> Result<()> {
    for i in 0..features.rows() {
        let n = norm(features.row(i));
        if (n - 1.0).abs() > tol {
            return Err(Error::NotUnitNorm { index: i, norm: n });
        }
    }
    Ok(())
}

/// `rho = (1/N) sum_i phi_i phi_i^T` over unit-norm vectors.
///
/// Uses pairwise summation, so the result depends on input order only at
/// round-off level.
pub fn build_density_matrix(features: &[Vec<f64>]) -> Result<Tensor> {
    let rows = Tensor::from_rows(features)?;
    if features.is_empty() {
        return Err(Error::Empty("density features"));
    }
    check_unit_rows(&rows, UNIT_TOL_BUILD)?;
    density_matrix_from_tensor(&rows)
}

fn density_matrix_from_tensor(rows: &Tensor) -> Result<Tensor> {
    let (n, d) = rows.expect_matrix("density matrix")?;
    let refs: Vec<&[f64]> = (0..n).map(|i| rows.row(i)).collect();
    let mut acc = pairwise_outer_sum(&refs, d);
    let inv = 1.0 / n as f64;
    acc.iter_mut().for_each(|v| *v *= inv);
    // exact symmetry regardless of summation order
    for i in 0..d {
        for j in 0..i {
            let s = 0.5 * (acc[i * d + j] + acc[j * d + i]);
            acc[i * d + j] = s;
            acc[j * d + i] = s;
        }
    }
    Tensor::matrix(d, d, acc)
}

fn pairwise_outer_sum(rows: &[&[f64]], d: usize) -> Vec<f64> {
    const LEAF: usize = 8;
    if rows.len() <= LEAF {
        let mut acc = vec![0.0; d * d];
        for r in rows {
            for i in 0..d {
                let ri = r[i];
                if ri == 0.0 {
                    continue;
                }
                let out = &mut acc[i * d..(i + 1) * d];
                for (o, &rj) in out.iter_mut().zip(r.iter()) {
                    *o += ri * rj;
                }
            }
        }
        return acc;
    }
    let mid = rows.len() / 2;
    let mut left = pairwise_outer_sum(&rows[..mid], d);
    let right = pairwise_outer_sum(&rows[mid..], d);
    left.iter_mut().zip(&right).for_each(|(l, r)| *l += r);
    left
}

/// The `rank` largest eigenpairs of a symmetric matrix.
///
/// Returns `(V, lambda)` with eigenvectors as rows of `V` and eigenvalues in
/// descending order (ties keep the solver's index order). Eigenvalues below
/// [`EIGEN_FLOOR`] are clamped to zero. Each eigenvector's sign is fixed so
/// that its largest-magnitude entry is positive.
pub fn spectral_decompose(rho: &Tensor, rank: usize) -> Result<(Tensor, Vec<f64>)> {
    let (n, m) = rho.expect_matrix("spectral_decompose")?;
    if n != m {
        return Err(Error::ShapeMismatch {
            op: "spectral_decompose",
            left: rho.shape().to_vec(),
            right: vec![n, n],
        });
    }
    if rank == 0 || rank > n {
        return Err(Error::invalid(format!(
            "rank must be in 1..={n}, got {rank}"
        )));
    }
    let mut asym: f64 = 0.0;
    for i in 0..n {
        for j in 0..i {
            asym = asym.max((rho.get(i, j) - rho.get(j, i)).abs());
        }
    }
    if asym > SYMMETRY_TOL {
        return Err(Error::NotSymmetric(asym));
    }
    let (values, vectors) = symmetric_eigen(rho)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let mut v = Vec::with_capacity(rank * n);
    let mut lambda = Vec::with_capacity(rank);
    for &k in order.iter().take(rank) {
        let l = values[k];
        lambda.push(if l < EIGEN_FLOOR { 0.0 } else { l });
        let mut col: Vec<f64> = (0..n).map(|i| vectors[(i, k)]).collect();
        fix_sign(&mut col);
        v.extend(col);
    }
    Ok((Tensor::matrix(rank, n, v)?, lambda))
}

fn symmetric_eigen(mat: &Tensor) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = mat.rows();
    let dm = DMatrix::from_row_slice(n, n, mat.data());
    let eig = SymmetricEigen::try_new(dm, 1e-15, 10_000).ok_or(Error::EigenFailure)?;
    if eig.eigenvalues.iter().any(|v| !v.is_finite()) {
        return Err(Error::EigenFailure);
    }
    Ok((eig.eigenvalues.iter().copied().collect(), eig.eigenvectors))
}

fn fix_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Leading eigenpairs of `rho = Phi^T Phi / N` from the `N x N` Gram matrix.
fn gram_decompose(features: &Tensor, rank: usize) -> Result<(Tensor, Vec<f64>)> {
    let (n, d) = (features.rows(), features.cols());
    let mut gram = features.matmul_transposed(features)?;
    let inv = 1.0 / n as f64;
    gram.data_mut().iter_mut().for_each(|v| *v *= inv);
    for i in 0..n {
        for j in 0..i {
            let s = 0.5 * (gram.get(i, j) + gram.get(j, i));
            gram.set(i, j, s);
            gram.set(j, i, s);
        }
    }
    let (values, vectors) = symmetric_eigen(&gram)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let mut v = Vec::new();
    let mut lambda = Vec::new();
    for &k in order.iter().take(rank) {
        let l = values[k];
        if l < EIGEN_FLOOR {
            break;
        }
        let scale = 1.0 / (n as f64 * l).sqrt();
        let mut row = vec![0.0; d];
        for i in 0..n {
            let u = vectors[(i, k)] * scale;
            for (r, f) in row.iter_mut().zip(features.row(i)) {
                *r += u * f;
            }
        }
        // re-normalize away round-off from the lift
        let nr = norm(&row);
        row.iter_mut().for_each(|x| *x /= nr);
        fix_sign(&mut row);
        v.extend(row);
        lambda.push(l);
    }
    if lambda.is_empty() {
        return Err(Error::invalid("density matrix has no non-zero eigenvalue"));
    }
    let r = lambda.len();
    Ok((Tensor::matrix(r, d, v)?, lambda))
}

pub fn estimate_density(model: &DensityMatrixModel, phi: &[f64]) -> Result<f64> {
    model.estimate_density(phi)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MleConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub optimizer: OptimizerKind,
}

impl Default for MleConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            lr: 1e-3,
            batch_size: 64,
            seed: 42,
            optimizer: OptimizerKind::Adam,
        }
    }
}

/// Per-step and per-epoch diagnostics from [`train_mle`].
#[derive(Debug, Clone, Default)]
pub struct MleTrace {
    /// Mean log-likelihood of the input model.
    pub initial_log_likelihood: f64,
    /// Mean log-likelihood after every epoch.
    pub epoch_log_likelihood: Vec<f64>,
    /// `sum(lambda)` after every optimizer step.
    pub lambda_sums: Vec<f64>,
    /// `min(lambda)` after every optimizer step.
    pub lambda_mins: Vec<f64>,
    /// Mean log-likelihood of the returned model.
    pub best_log_likelihood: f64,
}

/// Maximum-likelihood refinement of `(V, lambda)` on unit feature rows.
///
/// `lambda = softmax(theta)` keeps the eigenvalues on the probability
/// simplex; rows of `V` are rescaled to unit length after every step. The
/// returned model is the best epoch by mean log-likelihood, or the input
/// model when no epoch improves on it.
pub fn train_mle(
    model: &DensityMatrixModel,
    features: &Tensor,
    cfg: &MleConfig,
) -> Result<(DensityMatrixModel, MleTrace)> {
    let (n, d) = features.expect_matrix("mle features")?;
    if n == 0 {
        return Err(Error::Empty("mle features"));
    }
    if d != model.feature_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.feature_dim(),
            got: d,
        });
    }
    check_unit_rows(features, UNIT_TOL_QUERY)?;
    let initial = model.mean_log_likelihood(features)?;
    let mut trace = MleTrace {
        initial_log_likelihood: initial,
        best_log_likelihood: initial,
        ..Default::default()
    };
    if cfg.epochs == 0 || cfg.lr == 0.0 {
        return Ok((model.clone(), trace));
    }
    if cfg.batch_size == 0 {
        return Err(Error::invalid("batch_size must be positive"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut vectors = model.eigenvectors.clone();
    let mut logits = Tensor::vector(model.logits());
    let mut opt = Optimizer::new(cfg.optimizer, cfg.lr);
    let mut best = model.clone();
    let mut order: Vec<usize> = (0..n).collect();
    let mut last_finite = initial;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let rows: Vec<Vec<f64>> = batch.iter().map(|&i| features.row(i).to_vec()).collect();
            let mut g = Graph::new();
            let phi = g.constant(Tensor::from_rows(&rows)?);
            let v = g.param(vectors.clone());
            let theta = g.param(logits.clone());
            let loss = neg_log_likelihood(&mut g, phi, v, theta)?;
            let value = g.value(loss).item();
            if !value.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    last_finite_loss: last_finite,
                });
            }
            last_finite = value;
            let grads = g.backward(loss)?;
            let (gv, gt) = (
                grads.get(v).expect("trainable"),
                grads.get(theta).expect("trainable"),
            );
            opt.step(&mut [&mut vectors, &mut logits], &[gv, gt]);
            renormalize_rows(&mut vectors);
            let lambda = softmax(logits.data());
            trace.lambda_sums.push(lambda.iter().sum());
            trace
                .lambda_mins
                .push(lambda.iter().cloned().fold(f64::INFINITY, f64::min));
        }
        let candidate = DensityMatrixModel::from_logits(
            vectors.clone(),
            logits.data(),
            model.log_normalization,
        );
        let ll = candidate.mean_log_likelihood(features)?;
        if !ll.is_finite() {
            return Err(Error::Diverged {
                epoch,
                last_finite_loss: last_finite,
            });
        }
        trace.epoch_log_likelihood.push(ll);
        if ll > trace.best_log_likelihood {
            trace.best_log_likelihood = ll;
            best = candidate;
        }
    }
    Ok((best, trace))
}

/// `-mean_i ln(sum_k lambda_k (v_k . phi_i)^2)` with `lambda = softmax(theta)`.
/// The constant `ln M` is left out.
pub(crate) fn neg_log_likelihood(
    g: &mut Graph,
    phi: crate::autodiff::NodeId,
    v: crate::autodiff::NodeId,
    theta: crate::autodiff::NodeId,
) -> Result<crate::autodiff::NodeId> {
    let q = unnormalized_density(g, phi, v, theta)?;
    let logq = g.log(q)?;
    let ll = g.mean(logq)?;
    g.scale(ll, -1.0)
}

/// `[B]` vector of `sum_k lambda_k (v_k . phi_i)^2`.
pub(crate) fn unnormalized_density(
    g: &mut Graph,
    phi: crate::autodiff::NodeId,
    v: crate::autodiff::NodeId,
    theta: crate::autodiff::NodeId,
) -> Result<crate::autodiff::NodeId> {
    let vt = g.transpose(v)?;
    let proj = g.matmul(phi, vt)?;
    let sq = g.square(proj)?;
    let lambda = g.softmax(theta)?;
    g.matmul(sq, lambda)
}

pub(crate) fn renormalize_rows(t: &mut Tensor) {
    for i in 0..t.rows() {
        let row = t.row_mut(i);
        let n = norm(row);
        if n > 0.0 {
            row.iter_mut().for_each(|x| *x /= n);
        }
    }
}
