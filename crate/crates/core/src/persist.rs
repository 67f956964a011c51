//! Binary model files.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic    8 bytes  "ADDMMODL"
//! version  u32
//! sections repeated: tag (4 ASCII bytes), payload length (u64), payload
//! trailer  "CRC_" then u32 CRC-32 of every preceding byte
//! ```
//!
//! Sections appear in this order, each only when the method uses it:
//!
//! | tag    | payload |
//! |--------|---------|
//! | `METH` | method name, UTF-8 |
//! | `SCAL` | `d`, then `d` means, then `d` scales |
//! | `AFFW` | gamma, then the `[D, d]` frequency matrix |
//! | `AFFB` | the `D` phases |
//! | `DMV_` | the `[r, D]` eigenvector matrix |
//! | `DMLA` | `ln M`, then the `r` eigenvalues |
//! | `AUTO` | `aff_input` byte, encoder layer count, decoder layer count, then per layer an activation byte, weight matrix and bias vector |
//! | `KDET` | gamma, then the `[N, d]` training matrix |
//! | `TAU_` | threshold |
//! | `META` | the experiment configuration as JSON |
//!
//! A matrix is stored as rows (u64), columns (u64) and row-major values; a
//! vector as its length (u64) and values.

use std::io::Write;
use std::path::Path;

use crate::autoencoder::{Activation, AffInput, AutoencoderParams, LaddmModel, Layer};
use crate::dataset::Scaler;
use crate::density::DensityMatrixModel;
use crate::error::{Error, Result};
use crate::experiment::{Estimator, ExperimentConfig, Method, TrainedModel};
use crate::fourier::FourierFeatureMap;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"ADDMMODL";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Default)]
struct Payload(Vec<u8>);

impl Payload {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }

    fn u64(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u64).to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn vector(&mut self, v: &[f64]) {
        self.u64(v.len());
        v.iter().for_each(|&x| self.f64(x));
    }

    fn matrix(&mut self, t: &Tensor) {
        self.u64(t.rows());
        self.u64(t.cols());
        t.data().iter().for_each(|&x| self.f64(x));
    }
}

struct FileWriter(Vec<u8>);

impl FileWriter {
    fn section(&mut self, tag: &[u8; 4], payload: Payload) {
        self.0.extend_from_slice(tag);
        self.0
            .extend_from_slice(&(payload.0.len() as u64).to_le_bytes());
        self.0.extend_from_slice(&payload.0);
    }
}

fn encode_model(model: &TrainedModel) -> Vec<u8> {
    let mut w = FileWriter(Vec::new());
    w.0.extend_from_slice(MAGIC);
    w.0.extend_from_slice(&FORMAT_VERSION.to_le_bytes());

    let mut p = Payload::default();
    p.0.extend_from_slice(model.config.method.as_str().as_bytes());
    w.section(b"METH", p);

    let mut p = Payload::default();
    p.u64(model.scaler.dim());
    model.scaler.mean.iter().for_each(|&x| p.f64(x));
    model.scaler.scale.iter().for_each(|&x| p.f64(x));
    w.section(b"SCAL", p);

    let (map, density, ae) = match &model.estimator {
        Estimator::Addm {
            feature_map,
            density,
        } => (Some(feature_map), Some(density), None),
        Estimator::Laddm(m) => (
            Some(&m.feature_map),
            Some(&m.density),
            Some((&m.autoencoder, m.aff_input)),
        ),
        Estimator::Kde { .. } => (None, None, None),
        Estimator::Autoencoder(a) => (None, None, Some((a, AffInput::Latent))),
    };
    if let Some(map) = map {
        let mut p = Payload::default();
        p.f64(map.gamma);
        p.matrix(&map.weights);
        w.section(b"AFFW", p);
        let mut p = Payload::default();
        p.vector(&map.phases);
        w.section(b"AFFB", p);
    }
    if let Some(d) = density {
        let mut p = Payload::default();
        p.matrix(&d.eigenvectors);
        w.section(b"DMV_", p);
        let mut p = Payload::default();
        p.f64(d.log_normalization);
        p.vector(&d.eigenvalues);
        w.section(b"DMLA", p);
    }
    if let Some((ae, input)) = ae {
        let mut p = Payload::default();
        p.u8(match input {
            AffInput::Latent => 0,
            AffInput::Augmented => 1,
        });
        p.u64(ae.encoder.len());
        p.u64(ae.decoder.len());
        for layer in ae.encoder.iter().chain(&ae.decoder) {
            p.u8(match layer.activation {
                Activation::Linear => 0,
                Activation::Relu => 1,
            });
            p.matrix(&layer.weights);
            p.vector(layer.bias.data());
        }
        w.section(b"AUTO", p);
    }
    if let Estimator::Kde { train, gamma } = &model.estimator {
        let mut p = Payload::default();
        p.f64(*gamma);
        p.matrix(train);
        w.section(b"KDET", p);
    }
    let mut p = Payload::default();
    p.f64(model.tau);
    w.section(b"TAU_", p);
    let mut p = Payload::default();
    p.0.extend_from_slice(
        serde_json::to_string(&model.config)
            .expect("config serializes")
            .as_bytes(),
    );
    w.section(b"META", p);

    let crc = crc32fast::hash(&w.0);
    w.0.extend_from_slice(b"CRC_");
    w.0.extend_from_slice(&crc.to_le_bytes());
    w.0
}

/// Writes `model` to `path` through a temporary file in the same directory,
/// so an interrupted save never leaves a partial model behind.
pub fn save_model(path: impl AsRef<Path>, model: &TrainedModel) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_model(model);
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(&bytes)
        .map_err(|e| Error::io(tmp.path(), e))?;
    tmp.as_file()
        .sync_all()
        .map_err(|e| Error::io(tmp.path(), e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

fn format_err(msg: impl Into<String>) -> Error {
    Error::ModelFormat(msg.into())
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| format_err("truncated"))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u64(&mut self) -> Result<usize> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes"));
        usize::try_from(v).map_err(|_| format_err("length overflow"))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn floats(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(
            n.checked_mul(8)
                .ok_or_else(|| format_err("length overflow"))?,
        )?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    fn vector(&mut self) -> Result<Vec<f64>> {
        let n = self.u64()?;
        self.floats(n)
    }

    fn matrix(&mut self) -> Result<Tensor> {
        let rows = self.u64()?;
        let cols = self.u64()?;
        let n = rows
            .checked_mul(cols)
            .ok_or_else(|| format_err("length overflow"))?;
        Tensor::matrix(rows, cols, self.floats(n)?)
    }

    fn done(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(format_err("trailing bytes in section"));
        }
        Ok(())
    }
}

fn decode_model(bytes: &[u8]) -> Result<TrainedModel> {
    let min = MAGIC.len() + 4 + 8;
    if bytes.len() < min {
        return Err(format_err("truncated"));
    }
    if &bytes[..MAGIC.len()] != MAGIC {
        return Err(format_err("bad magic bytes"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(format_err(format!(
            "unsupported version {version}, expected {FORMAT_VERSION}"
        )));
    }
    let (body, trailer) = bytes.split_at(bytes.len() - 8);
    if &trailer[..4] != b"CRC_" {
        return Err(format_err("missing checksum trailer"));
    }
    let stored = u32::from_le_bytes(trailer[4..].try_into().expect("4 bytes"));
    if crc32fast::hash(body) != stored {
        return Err(format_err("checksum mismatch"));
    }

    let mut outer = Cursor { buf: body, pos: 12 };
    let mut sections: Vec<([u8; 4], &[u8])> = Vec::new();
    while outer.pos < body.len() {
        let tag: [u8; 4] = outer.take(4)?.try_into().expect("4 bytes");
        let len = outer.u64()?;
        sections.push((tag, outer.take(len)?));
    }
    let order: [&[u8; 4]; 10] = [
        b"METH", b"SCAL", b"AFFW", b"AFFB", b"DMV_", b"DMLA", b"AUTO", b"KDET", b"TAU_", b"META",
    ];
    let mut last = None;
    for (tag, _) in &sections {
        let idx = order.iter().position(|t| *t == tag).ok_or_else(|| {
            format_err(format!("unknown section {}", String::from_utf8_lossy(tag)))
        })?;
        if last.is_some_and(|l| idx <= l) {
            return Err(format_err("sections out of order"));
        }
        last = Some(idx);
    }
    let section = |tag: &[u8; 4]| {
        sections
            .iter()
            .find(|(t, _)| t == tag)
            .map(|(_, p)| Cursor { buf: p, pos: 0 })
    };
    let require = |tag: &[u8; 4]| {
        section(tag)
            .ok_or_else(|| format_err(format!("missing section {}", String::from_utf8_lossy(tag))))
    };

    let meth = require(b"METH")?;
    let method: Method = std::str::from_utf8(meth.buf)
        .map_err(|_| format_err("method tag is not UTF-8"))?
        .parse()
        .map_err(|_| format_err("unknown method tag"))?;

    let mut c = require(b"SCAL")?;
    let d = c.u64()?;
    let scaler = Scaler {
        mean: c.floats(d)?,
        scale: c.floats(d)?,
    };
    c.done()?;

    let feature_map = match section(b"AFFW") {
        Some(mut c) => {
            let gamma = c.f64()?;
            let weights = c.matrix()?;
            c.done()?;
            let mut b = require(b"AFFB")?;
            let phases = b.vector()?;
            b.done()?;
            Some(FourierFeatureMap::from_parts(weights, phases, gamma)?)
        }
        None => None,
    };
    let density = match section(b"DMV_") {
        Some(mut c) => {
            let vectors = c.matrix()?;
            c.done()?;
            let mut l = require(b"DMLA")?;
            let log_m = l.f64()?;
            let values = l.vector()?;
            l.done()?;
            Some(DensityMatrixModel::new(vectors, values, log_m)?)
        }
        None => None,
    };
    let autoencoder = match section(b"AUTO") {
        Some(mut c) => {
            let input = match c.u8()? {
                0 => AffInput::Latent,
                1 => AffInput::Augmented,
                _ => return Err(format_err("bad aff input tag")),
            };
            let n_enc = c.u64()?;
            let n_dec = c.u64()?;
            let mut layers = Vec::new();
            for _ in 0..n_enc
                .checked_add(n_dec)
                .ok_or_else(|| format_err("length overflow"))?
            {
                let act = match c.u8()? {
                    0 => Activation::Linear,
                    1 => Activation::Relu,
                    _ => return Err(format_err("bad activation tag")),
                };
                let w = c.matrix()?;
                let b = Tensor::vector(c.vector()?);
                layers.push(Layer::new(w, b, act)?);
            }
            c.done()?;
            let decoder = layers.split_off(n_enc);
            Some((AutoencoderParams::new(layers, decoder)?, input))
        }
        None => None,
    };
    let kde = match section(b"KDET") {
        Some(mut c) => {
            let gamma = c.f64()?;
            let train = c.matrix()?;
            c.done()?;
            Some((train, gamma))
        }
        None => None,
    };
    let mut c = require(b"TAU_")?;
    let tau = c.f64()?;
    c.done()?;
    let meta = require(b"META")?;
    let config: ExperimentConfig =
        serde_json::from_slice(meta.buf).map_err(|e| format_err(format!("bad metadata: {e}")))?;
    if config.method != method {
        return Err(format_err("method tag disagrees with metadata"));
    }

    let missing = || format_err(format!("sections missing for method {method}"));
    let estimator = match method {
        Method::Addm => Estimator::Addm {
            feature_map: feature_map.ok_or_else(missing)?,
            density: density.ok_or_else(missing)?,
        },
        Method::Laddm | Method::LaddmNorecon => {
            let (autoencoder, aff_input) = autoencoder.ok_or_else(missing)?;
            Estimator::Laddm(LaddmModel {
                autoencoder,
                feature_map: feature_map.ok_or_else(missing)?,
                density: density.ok_or_else(missing)?,
                aff_input,
            })
        }
        Method::Kde => {
            let (train, gamma) = kde.ok_or_else(missing)?;
            Estimator::Kde { train, gamma }
        }
        Method::Ae => Estimator::Autoencoder(autoencoder.ok_or_else(missing)?.0),
    };
    Ok(TrainedModel {
        config,
        scaler,
        estimator,
        tau,
    })
}

pub fn load_model(path: impl AsRef<Path>) -> Result<TrainedModel> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_model(&bytes)
}
