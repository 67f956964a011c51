//! Seeded synthetic datasets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dataset::LabeledDataset;
use crate::error::Result;
use crate::tensor::Tensor;

/// Two isotropic 2-D Gaussian blobs (centers `(-2, -2)` and `(2, 2)`,
/// standard deviation 0.5) as normals, plus `round(n * anomaly_frac)`
/// points drawn uniformly from `[-6, 6]^2` as anomalies.
pub fn blobs_with_anomalies(n: usize, anomaly_frac: f64, seed: u64) -> Result<LabeledDataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_anom = (n as f64 * anomaly_frac).round() as usize;
    let n_norm = n - n_anom;
    let noise = Normal::new(0.0, 0.5).expect("valid sd");
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n_norm {
        let c = if i % 2 == 0 { -2.0 } else { 2.0 };
        rows.push(vec![c + noise.sample(&mut rng), c + noise.sample(&mut rng)]);
        labels.push(false);
    }
    for _ in 0..n_anom {
        rows.push(vec![
            rng.random_range(-6.0..6.0),
            rng.random_range(-6.0..6.0),
        ]);
        labels.push(true);
    }
    LabeledDataset::new("blobs", Tensor::from_rows(&rows)?, labels)
}

/// Normal-only blob points, as rows.
pub fn blob_points(n: usize, seed: u64) -> Vec<Vec<f64>> {
    let ds = blobs_with_anomalies(n, 0.0, seed).expect("n > 0");
    (0..ds.len()).map(|i| ds.features.row(i).to_vec()).collect()
}
