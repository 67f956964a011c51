//! Random and adaptive Fourier features against the exact kernel.

use addm_core::fourier::{kernel_mse, sample_pairs, sample_rff, train_aff, AffConfig};
use addm_core::kernel::{gaussian_kernel, GaussianKernelParams};
use addm_core::synthetic::blob_points;
use addm_core::tensor::dot;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_pairs(rng: &mut ChaCha8Rng, n: usize) -> Vec<(Vec<f64>, Vec<f64>)> {
    (0..n)
        .map(|_| {
            let p = |rng: &mut ChaCha8Rng| {
                vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)]
            };
            (p(rng), p(rng))
        })
        .collect()
}

#[test]
fn random_features_approximate_the_kernel() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let pairs = random_pairs(&mut rng, 100);
    let params = GaussianKernelParams::new(1.0, 2).unwrap();
    for (features, seed) in [(4000, 2), (4096, 3)] {
        let map = sample_rff(2, features, 1.0, seed).unwrap();
        let err: f64 = pairs
            .iter()
            .map(|(x, y)| {
                let approx = dot(&map.feature_map(x).unwrap(), &map.feature_map(y).unwrap());
                (approx - gaussian_kernel(x, y, &params).unwrap()).abs()
            })
            .sum::<f64>()
            / pairs.len() as f64;
        assert!(err < 0.05, "D={features}: mean error {err}");
    }
}

#[test]
fn frequency_variance_matches_bandwidth() {
    let map = sample_rff(1, 10_000, 0.5, 4).unwrap();
    let w = map.weights.data();
    let mean = w.iter().sum::<f64>() / w.len() as f64;
    let var = w.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / w.len() as f64;
    assert!((var - 1.0).abs() < 0.05, "variance {var}");
    assert!(map
        .phases
        .iter()
        .all(|&b| (0.0..2.0 * std::f64::consts::PI).contains(&b)));
}

#[test]
fn more_features_give_smaller_error() {
    let mut wins = 0;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let pairs = random_pairs(&mut rng, 100);
        let small = kernel_mse(&sample_rff(2, 16, 1.0, seed).unwrap(), &pairs, 1.0).unwrap();
        let large = kernel_mse(&sample_rff(2, 4000, 1.0, seed).unwrap(), &pairs, 1.0).unwrap();
        if large < small {
            wins += 1;
        }
    }
    assert!(wins >= 19, "larger map won {wins}/20");
}

#[test]
fn adaptive_training_reduces_held_out_error() {
    let data = blob_points(400, 7);
    let held_out = blob_points(400, 8);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let pairs = sample_pairs(&held_out, 2000, &mut rng);
    let map = sample_rff(2, 64, 1.0, 3).unwrap();
    let cfg = AffConfig {
        num_pairs: 5000,
        epochs: 30,
        ..Default::default()
    };
    let trained = train_aff(&map, &data, 1.0, &cfg).unwrap();
    let before = kernel_mse(&map, &pairs, 1.0).unwrap();
    let after = kernel_mse(&trained, &pairs, 1.0).unwrap();
    assert!(after <= 0.8 * before, "{after} vs {before}");
    assert_eq!(train_aff(&map, &data, 1.0, &cfg).unwrap(), trained);
}

#[test]
fn zero_rate_and_zero_epochs_are_no_ops() {
    let data = blob_points(50, 1);
    let map = sample_rff(2, 32, 1.0, 3).unwrap();
    for cfg in [
        AffConfig {
            lr: 0.0,
            ..Default::default()
        },
        AffConfig {
            epochs: 0,
            ..Default::default()
        },
    ] {
        assert_eq!(train_aff(&map, &data, 1.0, &cfg).unwrap(), map);
    }
}
