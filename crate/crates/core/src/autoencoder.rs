//! Dense autoencoder, the augmented latent vector `o = [z, euc, cos]`, and
//! joint training of autoencoder and density matrix.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::autodiff::{cosine, Graph, NodeId};
use crate::density::{renormalize_rows, unnormalized_density, DensityMatrixModel};
use crate::error::{Error, Result};
use crate::fourier::{sample_rff, train_aff, AffConfig, FourierFeatureMap};
use crate::kernel::{log_normalization_constant, GaussianKernelParams};
use crate::optim::{Optimizer, OptimizerKind};
use crate::seed::derive_seed;
use crate::tensor::{squared_distance, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Linear,
    Relu,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// `[out, in]`.
    pub weights: Tensor,
    /// `[out]`.
    pub bias: Tensor,
    pub activation: Activation,
}

impl Layer {
    pub fn new(weights: Tensor, bias: Tensor, activation: Activation) -> Result<Self> {
        let (out, _) = weights.expect_matrix("layer")?;
        if bias.shape() != [out] {
            return Err(Error::ShapeMismatch {
                op: "layer",
                left: weights.shape().to_vec(),
                right: bias.shape().to_vec(),
            });
        }
        Ok(Self {
            weights,
            bias,
            activation,
        })
    }

    fn glorot(inputs: usize, outputs: usize, activation: Activation, rng: &mut ChaCha8Rng) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit).expect("finite limit");
        let w = (0..inputs * outputs).map(|_| dist.sample(rng)).collect();
        Self {
            weights: Tensor::matrix(outputs, inputs, w).expect("sized"),
            bias: Tensor::zeros(&[outputs]),
            activation,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.rows()
    }

    fn apply(&self, x: &Tensor) -> Result<Tensor> {
        let mut out = x.matmul_transposed(&self.weights)?;
        let n = self.output_dim();
        for (k, v) in out.data_mut().iter_mut().enumerate() {
            *v += self.bias.data()[k % n];
            if self.activation == Activation::Relu {
                *v = v.max(0.0);
            }
        }
        Ok(out)
    }
}

/// Encoder `psi: R^d -> R^p` and decoder `theta: R^p -> R^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutoencoderParams {
    pub encoder: Vec<Layer>,
    pub decoder: Vec<Layer>,
}

impl AutoencoderParams {
    pub fn new(encoder: Vec<Layer>, decoder: Vec<Layer>) -> Result<Self> {
        let ae = Self { encoder, decoder };
        ae.validate()?;
        Ok(ae)
    }

    /// Glorot-initialized network. `sizes` lists the encoder output widths,
    /// ending with the latent size; the decoder mirrors them back to
    /// `input_dim`. Hidden layers use ReLU, the latent and output layers are
    /// linear.
    pub fn init(input_dim: usize, sizes: &[usize], seed: u64) -> Result<Self> {
        if input_dim == 0 || sizes.is_empty() || sizes.contains(&0) {
            return Err(Error::invalid(format!(
                "invalid autoencoder architecture {input_dim} -> {sizes:?}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut widths = vec![input_dim];
        widths.extend_from_slice(sizes);
        let n = widths.len() - 1;
        let act = |i: usize| {
            if i + 1 == n {
                Activation::Linear
            } else {
                Activation::Relu
            }
        };
        let encoder = (0..n)
            .map(|i| Layer::glorot(widths[i], widths[i + 1], act(i), &mut rng))
            .collect();
        let rev: Vec<usize> = widths.iter().rev().copied().collect();
        let decoder = (0..n)
            .map(|i| Layer::glorot(rev[i], rev[i + 1], act(i), &mut rng))
            .collect();
        Self::new(encoder, decoder)
    }

    fn validate(&self) -> Result<()> {
        if self.encoder.is_empty() || self.decoder.is_empty() {
            return Err(Error::invalid(
                "autoencoder needs at least one layer each way",
            ));
        }
        for stack in [&self.encoder, &self.decoder] {
            for pair in stack.windows(2) {
                if pair[0].output_dim() != pair[1].input_dim() {
                    return Err(Error::DimensionMismatch {
                        expected: pair[0].output_dim(),
                        got: pair[1].input_dim(),
                    });
                }
            }
        }
        if self.latent_dim() != self.decoder[0].input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.latent_dim(),
                got: self.decoder[0].input_dim(),
            });
        }
        if self.input_dim() != self.decoder.last().expect("non-empty").output_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: self.decoder.last().expect("non-empty").output_dim(),
            });
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.encoder[0].input_dim()
    }

    pub fn latent_dim(&self) -> usize {
        self.encoder.last().expect("non-empty").output_dim()
    }

    pub fn encode(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_len(x, self.input_dim())?;
        Ok(run_stack(&self.encoder, &Tensor::matrix(1, x.len(), x.to_vec())?)?.into_data())
    }

    pub fn decode(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.check_len(z, self.latent_dim())?;
        Ok(run_stack(&self.decoder, &Tensor::matrix(1, z.len(), z.to_vec())?)?.into_data())
    }

    /// Latent codes and reconstructions of every row.
    pub fn forward_batch(&self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        let (_, d) = x.expect_matrix("autoencoder input")?;
        if d != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: d,
            });
        }
        let z = run_stack(&self.encoder, x)?;
        let xh = run_stack(&self.decoder, &z)?;
        Ok((z, xh))
    }

    fn check_len(&self, v: &[f64], expected: usize) -> Result<()> {
        if v.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: v.len(),
            });
        }
        Ok(())
    }

    fn layers(&self) -> impl Iterator<Item = &Layer> {
        self.encoder.iter().chain(&self.decoder)
    }

    fn layers_mut(&mut self) -> impl Iterator<Item = &mut Layer> {
        self.encoder.iter_mut().chain(self.decoder.iter_mut())
    }
}

fn run_stack(layers: &[Layer], x: &Tensor) -> Result<Tensor> {
    let mut h = x.clone();
    for layer in layers {
        h = layer.apply(&h)?;
    }
    Ok(h)
}

pub fn encode(params: &AutoencoderParams, x: &[f64]) -> Result<Vec<f64>> {
    params.encode(x)
}

pub fn decode(params: &AutoencoderParams, z: &[f64]) -> Result<Vec<f64>> {
    params.decode(z)
}

/// `(|x - x_hat|^2, cos(x, x_hat))`; the cosine of a zero vector is 0.
pub fn reconstruction_features(x: &[f64], x_hat: &[f64]) -> Result<(f64, f64)> {
    if x.len() != x_hat.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: x_hat.len(),
        });
    }
    Ok((squared_distance(x, x_hat), cosine(x, x_hat)))
}

/// Per-sample objective `(1 - alpha) |x - x_hat|^2 - alpha ln f`.
pub fn laddm_loss(x: &[f64], x_hat: &[f64], density: f64, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let (euc, _) = reconstruction_features(x, x_hat)?;
    let log_f = density.max(crate::autodiff::LOG_GUARD).ln();
    Ok((1.0 - alpha) * euc - alpha * log_f)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid(format!(
            "alpha must lie in [0, 1], got {alpha}"
        )));
    }
    Ok(())
}

/// The vector handed to the Fourier feature map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum AffInput {
    /// Latent code `z` only.
    Latent,
    /// `o = [z, |x - x_hat|^2, cos(x, x_hat)]`.
    #[default]
    Augmented,
}

impl AffInput {
    pub fn dim(self, latent: usize) -> usize {
        match self {
            AffInput::Latent => latent,
            AffInput::Augmented => latent + 2,
        }
    }
}

impl std::str::FromStr for AffInput {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "latent" => Ok(AffInput::Latent),
            "augmented" => Ok(AffInput::Augmented),
            other => Err(Error::invalid(format!("unknown aff input '{other}'"))),
        }
    }
}

/// Rows of `z` or of `o = [z, euc, cos]` for every input row.
pub fn embed(ae: &AutoencoderParams, x: &Tensor, mode: AffInput) -> Result<Tensor> {
    let (z, xh) = ae.forward_batch(x)?;
    if mode == AffInput::Latent {
        return Ok(z);
    }
    let p = z.cols();
    let mut out = Vec::with_capacity(z.rows() * (p + 2));
    for i in 0..z.rows() {
        let (euc, cos) = reconstruction_features(x.row(i), xh.row(i))?;
        out.extend_from_slice(z.row(i));
        out.push(euc);
        out.push(cos);
    }
    Tensor::matrix(z.rows(), p + 2, out)
}

/// Squared reconstruction error of every row.
pub fn reconstruction_errors(ae: &AutoencoderParams, x: &Tensor) -> Result<Vec<f64>> {
    let (_, xh) = ae.forward_batch(x)?;
    Ok((0..x.rows())
        .map(|i| squared_distance(x.row(i), xh.row(i)))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaddmConfig {
    /// Encoder output widths, latent size last.
    pub encoder: Vec<usize>,
    pub gamma: f64,
    pub num_features: usize,
    pub rank: usize,
    pub alpha: f64,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub aff_input: AffInput,
    /// Reconstruction-only epochs before the feature map is fitted.
    pub warmup_epochs: usize,
    pub aff: AffConfig,
    pub optimizer: OptimizerKind,
}

impl Default for LaddmConfig {
    fn default() -> Self {
        Self {
            encoder: vec![8, 2],
            gamma: 1.0,
            num_features: 256,
            rank: 64,
            alpha: 0.5,
            epochs: 50,
            lr: 1e-3,
            batch_size: 64,
            seed: 42,
            aff_input: AffInput::Augmented,
            warmup_epochs: 10,
            aff: AffConfig::default(),
            optimizer: OptimizerKind::Adam,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LaddmModel {
    pub autoencoder: AutoencoderParams,
    pub feature_map: FourierFeatureMap,
    pub density: DensityMatrixModel,
    pub aff_input: AffInput,
}

impl LaddmModel {
    /// Densities `f(o_i)` of every input row.
    pub fn densities(&self, x: &Tensor) -> Result<Vec<f64>> {
        let o = embed(&self.autoencoder, x, self.aff_input)?;
        let phi = self.feature_map.transform_normalized(&o)?;
        self.density.estimate_batch(&phi)
    }
}

#[derive(Debug, Clone, Default)]
pub struct LaddmTrace {
    /// Full-data loss once the density matrix is initialized, after warm-up.
    pub initial_loss: f64,
    /// Best full-data loss seen after each epoch, non-increasing.
    pub best_loss: Vec<f64>,
    /// Mean reconstruction error of the freshly initialized network and of
    /// the returned one.
    pub initial_reconstruction: f64,
    pub final_reconstruction: f64,
}

/// Differentiable objective over one batch, with handles to every
/// trainable leaf.
pub struct LaddmGraph {
    pub graph: Graph,
    pub loss: NodeId,
    /// `(weights, bias)` per encoder layer, then per decoder layer.
    pub layer_params: Vec<(NodeId, NodeId)>,
    pub eigenvectors: NodeId,
    pub logits: NodeId,
}

impl LaddmGraph {
    pub fn encoder_params(&self, encoder_layers: usize) -> &[(NodeId, NodeId)] {
        &self.layer_params[..encoder_layers]
    }
}

fn stack_graph(
    g: &mut Graph,
    input: NodeId,
    layers: &[Layer],
    ids: &mut Vec<(NodeId, NodeId)>,
) -> Result<NodeId> {
    let mut h = input;
    for layer in layers {
        let w = g.param(layer.weights.clone());
        let b = g.param(layer.bias.clone());
        ids.push((w, b));
        let wt = g.transpose(w)?;
        let lin = g.matmul(h, wt)?;
        let pre = g.add_row(lin, b)?;
        h = match layer.activation {
            Activation::Linear => pre,
            Activation::Relu => g.relu(pre)?,
        };
    }
    Ok(h)
}

/// Builds the mean over `batch` of `(1 - alpha)|x - x_hat|^2 - alpha ln f(o)`.
///
/// The feature map is held constant; autoencoder weights, eigenvectors and
/// eigenvalue logits are trainable. The constant `alpha ln M` term is
/// included so the graph value equals the objective exactly.
#[allow(clippy::too_many_arguments)]
pub fn build_laddm_graph(
    ae: &AutoencoderParams,
    map: &FourierFeatureMap,
    eigenvectors: &Tensor,
    logits: &Tensor,
    log_normalization: f64,
    batch: &Tensor,
    alpha: f64,
    mode: AffInput,
) -> Result<LaddmGraph> {
    check_alpha(alpha)?;
    let mut g = Graph::new();
    let mut layer_params = Vec::new();
    let x = g.constant(batch.clone());
    let z = stack_graph(&mut g, x, &ae.encoder, &mut layer_params)?;
    let xh = stack_graph(&mut g, z, &ae.decoder, &mut layer_params)?;
    let diff = g.sub(x, xh)?;
    let sq = g.square(diff)?;
    let euc = g.row_sum(sq)?;
    let o = match mode {
        AffInput::Latent => z,
        AffInput::Augmented => {
            let cos = g.cosine_similarity(x, xh)?;
            g.concat(&[z, euc, cos])?
        }
    };
    let w = g.constant(map.weights.transpose()?);
    let b = g.constant(Tensor::vector(map.phases.clone()));
    let proj = g.matmul(o, w)?;
    let shifted = g.add_row(proj, b)?;
    let c = g.cos(shifted)?;
    let phi = g.scale(c, (2.0 / map.num_features() as f64).sqrt())?;
    let phi_bar = g.normalize_rows(phi)?;
    let v = g.param(eigenvectors.clone());
    let theta = g.param(logits.clone());
    let q = unnormalized_density(&mut g, phi_bar, v, theta)?;
    let logq = g.log(q)?;
    let mean_log = g.mean(logq)?;
    let mean_euc = g.mean(euc)?;
    let recon = g.scale(mean_euc, 1.0 - alpha)?;
    let nll = g.scale(mean_log, -alpha)?;
    let total = g.add(recon, nll)?;
    let loss = g.offset(total, alpha * log_normalization)?;
    Ok(LaddmGraph {
        graph: g,
        loss,
        layer_params,
        eigenvectors: v,
        logits: theta,
    })
}

/// Reconstruction-only training (`alpha = 0`) of every layer.
pub fn train_reconstruction(
    ae: &AutoencoderParams,
    data: &Tensor,
    epochs: usize,
    lr: f64,
    batch_size: usize,
    seed: u64,
    optimizer: OptimizerKind,
) -> Result<AutoencoderParams> {
    let mut ae = ae.clone();
    if epochs == 0 || lr == 0.0 {
        return Ok(ae);
    }
    let n = data.rows();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut opt = Optimizer::new(optimizer, lr);
    let mut last = f64::NAN;
    for epoch in 0..epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch_size.max(1)) {
            let batch = gather(data, chunk)?;
            let mut g = Graph::new();
            let mut ids = Vec::new();
            let x = g.constant(batch);
            let z = stack_graph(&mut g, x, &ae.encoder, &mut ids)?;
            let xh = stack_graph(&mut g, z, &ae.decoder, &mut ids)?;
            let diff = g.sub(x, xh)?;
            let sq = g.square(diff)?;
            let per = g.row_sum(sq)?;
            let loss = g.mean(per)?;
            let value = g.value(loss).item();
            if !value.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    last_finite_loss: last,
                });
            }
            last = value;
            let grads = g.backward(loss)?;
            apply_layer_step(&mut ae, &ids, &grads, &mut opt, None);
        }
    }
    Ok(ae)
}

fn apply_layer_step(
    ae: &mut AutoencoderParams,
    ids: &[(NodeId, NodeId)],
    grads: &crate::autodiff::Gradients,
    opt: &mut Optimizer,
    extra: Option<(&mut Tensor, &Tensor, &mut Tensor, &Tensor)>,
) {
    let grad_refs: Vec<&Tensor> = ids
        .iter()
        .flat_map(|(w, b)| {
            [
                grads.get(*w).expect("trainable"),
                grads.get(*b).expect("trainable"),
            ]
        })
        .collect();
    let mut params: Vec<&mut Tensor> = ae
        .layers_mut()
        .flat_map(|l| [&mut l.weights, &mut l.bias])
        .collect();
    let mut all_grads = grad_refs;
    if let Some((v, gv, t, gt)) = extra {
        params.push(v);
        params.push(t);
        all_grads.push(gv);
        all_grads.push(gt);
    }
    opt.step(&mut params, &all_grads);
}

fn gather(data: &Tensor, idx: &[usize]) -> Result<Tensor> {
    let d = data.cols();
    let mut out = Vec::with_capacity(idx.len() * d);
    for &i in idx {
        out.extend_from_slice(data.row(i));
    }
    Tensor::matrix(idx.len(), d, out)
}

/// Initializes the feature map and density matrix from the current encoder.
fn init_density_stage(
    ae: &AutoencoderParams,
    data: &Tensor,
    cfg: &LaddmConfig,
    fit_features: bool,
) -> Result<(FourierFeatureMap, DensityMatrixModel)> {
    let o = embed(ae, data, cfg.aff_input)?;
    let dim = o.cols();
    let mut map = sample_rff(dim, cfg.num_features, cfg.gamma, derive_seed(cfg.seed, 1))?;
    if fit_features {
        let rows: Vec<Vec<f64>> = (0..o.rows()).map(|i| o.row(i).to_vec()).collect();
        let aff = AffConfig {
            seed: derive_seed(cfg.seed, 2),
            ..cfg.aff
        };
        map = train_aff(&map, &rows, cfg.gamma, &aff)?;
    }
    let phi = map.transform_normalized(&o)?;
    let log_m = log_normalization_constant(&GaussianKernelParams::new(cfg.gamma, dim)?)?;
    let rank = cfg.rank.min(cfg.num_features);
    let density = DensityMatrixModel::from_features(&phi, rank, log_m)?;
    Ok((map, density))
}

fn full_loss(model: &LaddmModel, data: &Tensor, alpha: f64) -> Result<f64> {
    let errs = reconstruction_errors(&model.autoencoder, data)?;
    let dens = model.densities(data)?;
    let n = errs.len() as f64;
    let recon = errs.iter().sum::<f64>() / n;
    let log_f = dens
        .iter()
        .map(|&f| f.max(crate::autodiff::LOG_GUARD).ln())
        .sum::<f64>()
        / n;
    Ok((1.0 - alpha) * recon - alpha * log_f)
}

/// End-to-end training: reconstruction warm-up, adaptive feature fit on the
/// encoded training set, density-matrix initialization, then joint descent
/// on autoencoder weights, eigenvectors and eigenvalue logits.
///
/// Returns the parameters with the lowest full-data objective seen at an
/// epoch boundary.
pub fn train_laddm(data: &Tensor, cfg: &LaddmConfig) -> Result<(LaddmModel, LaddmTrace)> {
    let (n, d) = data.expect_matrix("laddm data")?;
    if n == 0 {
        return Err(Error::Empty("laddm training data"));
    }
    check_alpha(cfg.alpha)?;
    if cfg.batch_size == 0 {
        return Err(Error::invalid("batch_size must be positive"));
    }
    let ae = AutoencoderParams::init(d, &cfg.encoder, derive_seed(cfg.seed, 0))?;
    let initial_recon = mean(&reconstruction_errors(&ae, data)?);
    let warm = cfg.warmup_epochs.min(cfg.epochs);
    let ae = train_reconstruction(
        &ae,
        data,
        warm,
        cfg.lr,
        cfg.batch_size,
        derive_seed(cfg.seed, 3),
        cfg.optimizer,
    )?;
    let (map, density) = init_density_stage(&ae, data, cfg, cfg.epochs > 0)?;
    let mut model = LaddmModel {
        autoencoder: ae,
        feature_map: map,
        density,
        aff_input: cfg.aff_input,
    };
    let initial_loss = full_loss(&model, data, cfg.alpha)?;
    let mut trace = LaddmTrace {
        initial_loss,
        initial_reconstruction: initial_recon,
        final_reconstruction: initial_recon,
        best_loss: Vec::new(),
    };
    if cfg.epochs == 0 || cfg.lr == 0.0 {
        return Ok((model, trace));
    }

    let log_m = model.density.log_normalization;
    let mut vectors = model.density.eigenvectors.clone();
    let mut logits = Tensor::vector(model.density.logits());
    let mut ae = model.autoencoder.clone();
    let mut opt = Optimizer::new(cfg.optimizer, cfg.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 4));
    let mut order: Vec<usize> = (0..n).collect();
    let mut best_loss = initial_loss;
    let mut last = initial_loss;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch = gather(data, chunk)?;
            let lg = build_laddm_graph(
                &ae,
                &model.feature_map,
                &vectors,
                &logits,
                log_m,
                &batch,
                cfg.alpha,
                cfg.aff_input,
            )?;
            let value = lg.graph.value(lg.loss).item();
            if !value.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    last_finite_loss: last,
                });
            }
            last = value;
            let grads = lg.graph.backward(lg.loss)?;
            let gv = grads.get(lg.eigenvectors).expect("trainable").clone();
            let gt = grads.get(lg.logits).expect("trainable").clone();
            apply_layer_step(
                &mut ae,
                &lg.layer_params,
                &grads,
                &mut opt,
                Some((&mut vectors, &gv, &mut logits, &gt)),
            );
            renormalize_rows(&mut vectors);
        }
        let candidate = LaddmModel {
            autoencoder: ae.clone(),
            feature_map: model.feature_map.clone(),
            density: DensityMatrixModel::from_logits(vectors.clone(), logits.data(), log_m),
            aff_input: cfg.aff_input,
        };
        let loss = full_loss(&candidate, data, cfg.alpha).map_err(|_| Error::Diverged {
            epoch,
            last_finite_loss: last,
        })?;
        if !loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                last_finite_loss: last,
            });
        }
        if loss < best_loss {
            best_loss = loss;
            model = candidate;
        }
        trace.best_loss.push(best_loss);
    }
    trace.final_reconstruction = mean(&reconstruction_errors(&model.autoencoder, data)?);
    Ok((model, trace))
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

impl AutoencoderParams {
    /// Number of scalar parameters.
    pub fn parameter_count(&self) -> usize {
        self.layers().map(|l| l.weights.len() + l.bias.len()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_ae(d: usize) -> AutoencoderParams {
        let enc = Layer::new(Tensor::identity(d), Tensor::zeros(&[d]), Activation::Linear).unwrap();
        AutoencoderParams::new(vec![enc.clone()], vec![enc]).unwrap()
    }

    fn zero_ae(d: usize, p: usize) -> AutoencoderParams {
        let enc = Layer::new(
            Tensor::zeros(&[p, d]),
            Tensor::zeros(&[p]),
            Activation::Linear,
        )
        .unwrap();
        let dec = Layer::new(
            Tensor::zeros(&[d, p]),
            Tensor::zeros(&[d]),
            Activation::Linear,
        )
        .unwrap();
        AutoencoderParams::new(vec![enc], vec![dec]).unwrap()
    }

    #[test]
    fn identity_and_zero_networks() {
        let x = [0.5, -1.5, 2.0];
        let id = identity_ae(3);
        assert_eq!(id.encode(&x).unwrap(), x.to_vec());
        assert_eq!(id.decode(&x).unwrap(), x.to_vec());
        let zero = zero_ae(3, 2);
        assert_eq!(zero.encode(&x).unwrap(), vec![0.0, 0.0]);
        assert_eq!(zero.decode(&[1.0, 2.0]).unwrap(), vec![0.0; 3]);
        assert!(zero.encode(&[1.0]).is_err());
        assert!(zero.decode(&x).is_err());
    }

    fn layer(rows: usize, cols: usize, w: &[f64], b: &[f64], act: Activation) -> Layer {
        Layer::new(
            Tensor::matrix(rows, cols, w.to_vec()).unwrap(),
            Tensor::vector(b.to_vec()),
            act,
        )
        .unwrap()
    }

    #[test]
    fn two_layer_hand_computed_values() {
        // h = relu([1.5, -1.3]) = [1.5, 0], z = 1.5
        // g = relu([3.0, -0.5]) = [3, 0], x_hat = [3, 0, 3.25]
        let ae = AutoencoderParams::new(
            vec![
                layer(
                    2,
                    3,
                    &[1.0, -1.0, 0.0, 0.0, 2.0, 1.0],
                    &[0.5, -1.0],
                    Activation::Relu,
                ),
                layer(1, 2, &[1.0, 1.0], &[0.0], Activation::Linear),
            ],
            vec![
                layer(2, 1, &[2.0, -1.0], &[0.0, 1.0], Activation::Relu),
                layer(
                    3,
                    2,
                    &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0],
                    &[0.0, 0.0, 0.25],
                    Activation::Linear,
                ),
            ],
        )
        .unwrap();
        let z = ae.encode(&[0.3, -0.7, 1.1]).unwrap();
        assert!((z[0] - 1.5).abs() < 1e-12, "{z:?}");
        let xh = ae.decode(&z).unwrap();
        for (a, b) in xh.iter().zip([3.0, 0.0, 3.25]) {
            assert!((a - b).abs() < 1e-12, "{xh:?}");
        }
    }

    #[test]
    fn seeded_init_is_deterministic() {
        let a = AutoencoderParams::init(3, &[4, 2], 7).unwrap();
        let b = AutoencoderParams::init(3, &[4, 2], 7).unwrap();
        let c = AutoencoderParams::init(3, &[4, 2], 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.encoder[0].activation, Activation::Relu);
        assert_eq!(a.encoder[1].activation, Activation::Linear);
        assert_eq!(a.decoder[1].activation, Activation::Linear);
        assert_eq!(
            a.parameter_count(),
            (3 * 4 + 4) + (4 * 2 + 2) + (2 * 4 + 4) + (4 * 3 + 3)
        );
    }

    #[test]
    fn reconstruction_feature_values() {
        let (e, c) = reconstruction_features(&[1.0, 2.0], &[1.0, 2.0]).unwrap();
        assert_eq!(e, 0.0);
        assert!((c - 1.0).abs() < 1e-15);
        assert_eq!(
            reconstruction_features(&[1.0, 0.0], &[0.0, 1.0]).unwrap(),
            (2.0, 0.0)
        );
        let (e, c) = reconstruction_features(&[1.0, 1.0], &[2.0, 2.0]).unwrap();
        assert_eq!(e, 2.0);
        assert!((c - 1.0).abs() < 1e-15);
        assert_eq!(
            reconstruction_features(&[0.0, 0.0], &[1.0, 1.0]).unwrap().1,
            0.0
        );
        assert!(reconstruction_features(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn loss_boundaries() {
        let x = [1.0, 2.0];
        let xh = [0.0, 2.5];
        assert_eq!(laddm_loss(&x, &xh, 0.3, 0.0).unwrap(), 1.25);
        assert_eq!(laddm_loss(&x, &xh, 0.3, 1.0).unwrap(), -(0.3f64.ln()));
        for a in [0.0, 0.25, 1.0] {
            assert_eq!(laddm_loss(&x, &x, 1.0, a).unwrap(), 0.0);
        }
        assert!(laddm_loss(&x, &xh, 0.3, 1.5).is_err());
        assert!(laddm_loss(&x, &xh, 0.3, -0.1).is_err());
    }

    #[test]
    fn embed_dims() {
        let ae = AutoencoderParams::init(4, &[3, 2], 1).unwrap();
        let x = Tensor::from_rows(&[vec![1.0, 0.0, 2.0, -1.0], vec![0.5, 0.5, 0.5, 0.5]]).unwrap();
        assert_eq!(embed(&ae, &x, AffInput::Latent).unwrap().shape(), &[2, 2]);
        let o = embed(&ae, &x, AffInput::Augmented).unwrap();
        assert_eq!(o.shape(), &[2, 4]);
        for i in 0..2 {
            assert!((-1.0..=1.0).contains(&o.get(i, 3)));
            assert!(o.get(i, 2) >= 0.0);
        }
    }

    #[test]
    fn architecture_validation() {
        assert!(AutoencoderParams::init(0, &[2], 0).is_err());
        assert!(AutoencoderParams::init(3, &[], 0).is_err());
        let a = Layer::new(
            Tensor::zeros(&[2, 3]),
            Tensor::zeros(&[2]),
            Activation::Linear,
        )
        .unwrap();
        let b = Layer::new(
            Tensor::zeros(&[3, 4]),
            Tensor::zeros(&[3]),
            Activation::Linear,
        )
        .unwrap();
        assert!(AutoencoderParams::new(vec![a], vec![b]).is_err());
    }
}
