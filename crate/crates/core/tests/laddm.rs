//! End-to-end training of the latent model.

use addm_core::autoencoder::{
    reconstruction_errors, train_laddm, AffInput, AutoencoderParams, LaddmConfig,
};
use addm_core::seed::derive_seed;
use addm_core::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn correlated(n: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let a: f64 = StandardNormal.sample(&mut rng);
            let b: f64 = StandardNormal.sample(&mut rng);
            let e: f64 = StandardNormal.sample(&mut rng);
            vec![a, b, a - b + 0.1 * e]
        })
        .collect();
    Tensor::from_rows(&rows).unwrap()
}

fn small_config() -> LaddmConfig {
    LaddmConfig {
        encoder: vec![3],
        gamma: 0.5,
        num_features: 32,
        rank: 8,
        epochs: 20,
        lr: 1e-2,
        batch_size: 32,
        aff: addm_core::AffConfig {
            num_pairs: 500,
            epochs: 5,
            ..Default::default()
        },
        ..Default::default()
    }
}

#[test]
fn reconstruction_only_training_reduces_error() {
    let data = correlated(200, 1);
    let cfg = LaddmConfig {
        alpha: 0.0,
        ..small_config()
    };
    let (model, trace) = train_laddm(&data, &cfg).unwrap();
    let final_err = reconstruction_errors(&model.autoencoder, &data)
        .unwrap()
        .iter()
        .sum::<f64>()
        / 200.0;
    assert_eq!(final_err, trace.final_reconstruction);
    assert!(
        final_err < trace.initial_reconstruction,
        "{final_err} vs {}",
        trace.initial_reconstruction
    );
}

#[test]
fn zero_epochs_returns_initialization() {
    let data = correlated(50, 2);
    let cfg = LaddmConfig {
        epochs: 0,
        encoder: vec![4, 2],
        ..small_config()
    };
    let (model, trace) = train_laddm(&data, &cfg).unwrap();
    let init = AutoencoderParams::init(3, &[4, 2], derive_seed(cfg.seed, 0)).unwrap();
    assert_eq!(model.autoencoder, init);
    assert!(trace.best_loss.is_empty());
    assert_eq!(trace.initial_reconstruction, trace.final_reconstruction);
}

#[test]
fn best_loss_is_monotone_and_run_is_deterministic() {
    let data = correlated(120, 3);
    for aff_input in [AffInput::Augmented, AffInput::Latent] {
        let cfg = LaddmConfig {
            aff_input,
            encoder: vec![4, 2],
            ..small_config()
        };
        let (a, trace) = train_laddm(&data, &cfg).unwrap();
        assert_eq!(trace.best_loss.len(), cfg.epochs);
        let mut prev = trace.initial_loss;
        for &l in &trace.best_loss {
            assert!(l <= prev);
            prev = l;
        }
        let (b, _) = train_laddm(&data, &cfg).unwrap();
        assert_eq!(a.autoencoder, b.autoencoder);
        assert_eq!(a.density.eigenvalues, b.density.eigenvalues);
        assert_eq!(a.densities(&data).unwrap(), b.densities(&data).unwrap());
        let sum: f64 = a.density.eigenvalues.iter().sum();
        assert!((sum - 1.0).abs() < 1e-8);
    }
}

#[test]
fn invalid_settings_are_rejected() {
    let data = correlated(20, 4);
    assert!(train_laddm(
        &data,
        &LaddmConfig {
            alpha: 1.5,
            ..small_config()
        }
    )
    .is_err());
    assert!(train_laddm(
        &data,
        &LaddmConfig {
            encoder: vec![],
            ..small_config()
        }
    )
    .is_err());
    assert!(train_laddm(&Tensor::zeros(&[0, 3]), &small_config()).is_err());
}
