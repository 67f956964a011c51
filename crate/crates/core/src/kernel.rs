//! Gaussian kernel and exact Parzen-window density estimation.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::squared_distance;

/// Bandwidth and dimension of the Gaussian kernel `exp(-gamma * |x - y|^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianKernelParams {
    pub gamma: f64,
    pub dim: usize,
}

impl GaussianKernelParams {
    pub fn new(gamma: f64, dim: usize) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::invalid(format!(
                "gamma must be positive, got {gamma}"
            )));
        }
        if dim == 0 {
            return Err(Error::invalid("kernel dimension must be at least 1"));
        }
        Ok(Self { gamma, dim })
    }
}

pub fn gaussian_kernel(x: &[f64], y: &[f64], params: &GaussianKernelParams) -> Result<f64> {
    check_dim(x, params.dim)?;
    check_dim(y, params.dim)?;
    Ok((-params.gamma * squared_distance(x, y)).exp())
}

/// `(pi / gamma)^(d/2)`, the integral of `exp(-gamma |u|^2)` over `R^d`.
pub fn normalization_constant(params: &GaussianKernelParams) -> Result<f64> {
    Ok(log_normalization_constant(params)?.exp())
}

/// Natural log of [`normalization_constant`]; finite even where the constant
/// itself would overflow.
pub fn log_normalization_constant(params: &GaussianKernelParams) -> Result<f64> {
    if params.gamma.is_nan() || params.gamma <= 0.0 {
        return Err(Error::invalid(format!(
            "gamma must be positive, got {}",
            params.gamma
        )));
    }
    if params.dim == 0 {
        return Err(Error::invalid("kernel dimension must be at least 1"));
    }
    Ok(0.5 * params.dim as f64 * (PI / params.gamma).ln())
}

/// Parzen estimate `1/(N M) * sum_i k(x_i, x)`.
pub fn kde_estimate(train: &[Vec<f64>], x: &[f64], params: &GaussianKernelParams) -> Result<f64> {
    if train.is_empty() {
        return Err(Error::Empty("kde training set"));
    }
    check_dim(x, params.dim)?;
    let mut total = 0.0;
    for xi in train {
        total += gaussian_kernel(xi, x, params)?;
    }
    Ok(total / (train.len() as f64 * normalization_constant(params)?))
}

/// `ln` of [`kde_estimate`], accumulated with log-sum-exp so that points far
/// from every training sample keep distinct finite values.
pub fn kde_log_estimate(
    train: &[Vec<f64>],
    x: &[f64],
    params: &GaussianKernelParams,
) -> Result<f64> {
    if train.is_empty() {
        return Err(Error::Empty("kde training set"));
    }
    check_dim(x, params.dim)?;
    let mut exps = Vec::with_capacity(train.len());
    for xi in train {
        check_dim(xi, params.dim)?;
        exps.push(-params.gamma * squared_distance(xi, x));
    }
    let top = exps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = exps.iter().map(|e| (e - top).exp()).sum();
    Ok(top + sum.ln() - (train.len() as f64).ln() - log_normalization_constant(params)?)
}

fn check_dim(x: &[f64], dim: usize) -> Result<()> {
    if x.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: x.len(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn params(gamma: f64, dim: usize) -> GaussianKernelParams {
        GaussianKernelParams::new(gamma, dim).unwrap()
    }

    #[test]
    fn kernel_values() {
        assert_eq!(
            gaussian_kernel(&[1.5, -2.0], &[1.5, -2.0], &params(7.0, 2)).unwrap(),
            1.0
        );
        assert_relative_eq!(
            gaussian_kernel(&[0.0], &[1.0], &params(1.0, 1)).unwrap(),
            0.367_879_441_171_442_3,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            gaussian_kernel(&[0.0, 0.0], &[3.0, 4.0], &params(0.01, 2)).unwrap(),
            0.778_800_783_071_404_9,
            max_relative = 1e-12
        );
        assert!(gaussian_kernel(&[0.0], &[0.0, 1.0], &params(1.0, 1)).is_err());
    }

    #[test]
    fn normalization_values() {
        assert_relative_eq!(
            normalization_constant(&params(PI, 1)).unwrap(),
            1.0,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            normalization_constant(&params(PI, 2)).unwrap(),
            1.0,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            normalization_constant(&params(1.0, 2)).unwrap(),
            PI,
            max_relative = 1e-12
        );
        let bad = GaussianKernelParams { gamma: 0.0, dim: 1 };
        assert!(normalization_constant(&bad).is_err());
        assert!(GaussianKernelParams::new(-1.0, 2).is_err());
    }

    #[test]
    fn kde_point_values() {
        let p = params(1.0, 1);
        let m = normalization_constant(&p).unwrap();
        assert_relative_eq!(kde_estimate(&[vec![0.3]], &[0.3], &p).unwrap(), 1.0 / m);
        let two = [vec![-1.0], vec![1.0]];
        assert_relative_eq!(
            kde_estimate(&two, &[0.0], &p).unwrap(),
            0.367_879_441_171_442_3 / PI.sqrt(),
            max_relative = 1e-12
        );
        assert!(kde_estimate(&[], &[0.0], &p).is_err());
    }

    #[test]
    fn log_estimate_matches_and_survives_underflow() {
        let p = params(0.5, 2);
        let train = [vec![0.0, 1.0], vec![-1.0, 0.5], vec![2.0, 2.0]];
        for q in [[0.0, 0.0], [1.0, -1.0], [3.0, 0.2]] {
            let direct = kde_estimate(&train, &q, &p).unwrap().ln();
            assert_relative_eq!(
                kde_log_estimate(&train, &q, &p).unwrap(),
                direct,
                max_relative = 1e-12
            );
        }
        let far = kde_log_estimate(&train, &[100.0, 0.0], &p).unwrap();
        let farther = kde_log_estimate(&train, &[200.0, 0.0], &p).unwrap();
        assert!(far.is_finite() && farther < far);
    }

    fn trapezoid(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
        let h = (hi - lo) / (n - 1) as f64;
        (0..n)
            .map(|i| {
                let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
                w * f(lo + i as f64 * h)
            })
            .sum::<f64>()
            * h
    }

    #[test]
    fn kde_integrates_to_one_in_1d() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let train: Vec<Vec<f64>> = (0..50)
            .map(|_| vec![StandardNormal.sample(&mut rng)])
            .collect();
        let p = params(2.0, 1);
        let mass = trapezoid(|x| kde_estimate(&train, &[x], &p).unwrap(), -6.0, 6.0, 1000);
        assert!((mass - 1.0).abs() < 0.02, "mass {mass}");
    }

    #[test]
    fn kde_integrates_to_one_in_2d() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let train: Vec<Vec<f64>> = (0..30)
            .map(|_| {
                vec![
                    StandardNormal.sample(&mut rng),
                    StandardNormal.sample(&mut rng),
                ]
            })
            .collect();
        let p = params(1.0, 2);
        let n = 241;
        let mass = trapezoid(
            |x| trapezoid(|y| kde_estimate(&train, &[x, y], &p).unwrap(), -7.0, 7.0, n),
            -7.0,
            7.0,
            n,
        );
        assert!((mass - 1.0).abs() < 0.02, "mass {mass}");
    }

    proptest! {
        #[test]
        fn kernel_is_symmetric_and_bounded(
            x in prop::collection::vec(-5.0f64..5.0, 3),
            y in prop::collection::vec(-5.0f64..5.0, 3),
            gamma in 0.01f64..3.0,
        ) {
            let p = params(gamma, 3);
            let a = gaussian_kernel(&x, &y, &p).unwrap();
            let b = gaussian_kernel(&y, &x, &p).unwrap();
            prop_assert_eq!(a, b);
            prop_assert!(a > 0.0 && a <= 1.0);
        }

        #[test]
        fn kde_is_nonnegative_and_permutation_invariant(
            pts in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 2), 1..20),
            q in prop::collection::vec(-3.0f64..3.0, 2),
        ) {
            let p = params(0.7, 2);
            let a = kde_estimate(&pts, &q, &p).unwrap();
            let mut rev = pts.clone();
            rev.reverse();
            let b = kde_estimate(&rev, &q, &p).unwrap();
            prop_assert!(a >= 0.0);
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-300));
        }
    }
}
