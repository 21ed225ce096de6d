//! The encoder/decoder pair: training through an AWGN channel, freezing,
//! evaluation and the binary model file.

use std::fs;
use std::hash::Hasher;
use std::path::Path;

use fnv::FnvHasher;
use serde::{Deserialize, Serialize};

use crate::channel::snr_to_noise_std;
use crate::datasets::Dataset;
use crate::error::{Error, Result};
use crate::nn::{
    argmax, sgd_step, softmax_cross_entropy, Activation, GradBundle, Network, NetworkSpec, OutputHead, SgdState,
};
use crate::rng::Rng;

pub const MODEL_MAGIC: &[u8; 8] = b"TSCMODEL";
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    pub train_snr_db: f64,
    pub seed: u64,
    /// Number of encoded feature units.
    pub m: usize,
    pub encoder_hidden: Vec<usize>,
    /// Two hidden widths give the three fully connected decoding layers.
    pub decoder_hidden: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 32,
            lr: 0.02,
            momentum: 0.9,
            train_snr_db: 10.0,
            seed: 0,
            m: 32,
            encoder_hidden: vec![64],
            decoder_hidden: vec![64, 32],
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        // epochs = 0 is accepted: `train` then returns the frozen initialization.
        if self.batch_size < 1 {
            return Err(Error::param("batch_size", "must be >= 1"));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::param("lr", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::param("momentum", "must be in [0, 1)"));
        }
        if self.m < 1 {
            return Err(Error::param("m", "must be >= 1"));
        }
        if !self.train_snr_db.is_finite() {
            return Err(Error::param("train_snr_db", "must be finite"));
        }
        if self.encoder_hidden.iter().chain(&self.decoder_hidden).any(|&w| w == 0) {
            return Err(Error::param("hidden widths", "must be >= 1"));
        }
        Ok(())
    }

    pub fn encoder_spec(&self, input_dim: usize) -> NetworkSpec {
        let mut dims = vec![input_dim];
        dims.extend(&self.encoder_hidden);
        dims.push(self.m);
        NetworkSpec::uniform(dims, Activation::Relu, OutputHead::Feature)
    }

    pub fn decoder_spec(&self, num_classes: usize) -> NetworkSpec {
        let mut dims = vec![self.m];
        dims.extend(&self.decoder_hidden);
        dims.push(num_classes);
        NetworkSpec::uniform(dims, Activation::Relu, OutputHead::LinearLogits)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMetadata {
    pub seed: u64,
    pub dataset_name: String,
    pub train_config: TrainConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TscModel {
    encoder: Network,
    decoder: Network,
    m: usize,
    train_snr_db: f64,
    signal_power: f64,
    frozen: bool,
    pub metadata: ModelMetadata,
}

/// Noise added to every encoded unit before decoding.
#[derive(Debug, Clone, PartialEq)]
pub enum UnitNoise {
    Scalar(f64),
    PerUnit(Vec<f64>),
}

impl UnitNoise {
    fn std_for(&self, k: usize) -> f64 {
        match self {
            UnitNoise::Scalar(s) => *s,
            UnitNoise::PerUnit(v) => v[k],
        }
    }
}

impl TscModel {
    /// Wraps an encoder/decoder pair; the result is unfrozen.
    pub fn from_networks(encoder: Network, decoder: Network, train_snr_db: f64, signal_power: f64, metadata: ModelMetadata) -> Result<Self> {
        if encoder.output_dim() != decoder.input_dim() {
            return Err(Error::Config(format!(
                "encoder emits {} units but decoder expects {}",
                encoder.output_dim(),
                decoder.input_dim()
            )));
        }
        if !(signal_power > 0.0) || !signal_power.is_finite() {
            return Err(Error::param("signal_power", "must be positive and finite"));
        }
        Ok(TscModel {
            m: encoder.output_dim(),
            encoder,
            decoder,
            train_snr_db,
            signal_power,
            frozen: false,
            metadata,
        })
    }

    pub fn freeze(&mut self) {
        self.encoder.freeze();
        self.decoder.freeze();
        self.frozen = true;
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.input_dim()
    }

    pub fn num_classes(&self) -> usize {
        self.decoder.output_dim()
    }

    pub fn train_snr_db(&self) -> f64 {
        self.train_snr_db
    }

    pub fn signal_power(&self) -> f64 {
        self.signal_power
    }

    pub fn encoder(&self) -> &Network {
        &self.encoder
    }

    pub fn decoder(&self) -> &Network {
        &self.decoder
    }

    /// Mutable networks; only before freezing.
    pub fn networks_mut(&mut self) -> Result<(&mut Network, &mut Network)> {
        if self.frozen {
            return Err(Error::Frozen);
        }
        Ok((&mut self.encoder, &mut self.decoder))
    }

    fn require_frozen(&self, op: &str) -> Result<()> {
        if !self.frozen {
            return Err(Error::Lifecycle(format!("{op} requires a frozen model")));
        }
        Ok(())
    }

    pub fn encode(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.require_frozen("encode")?;
        self.encoder.predict(x)
    }

    pub fn decode(&self, z_hat: &[f64]) -> Result<(Vec<f64>, usize)> {
        self.require_frozen("decode")?;
        if z_hat.len() != self.m {
            return Err(Error::Shape(format!(
                "feature block has {} units, model has {}",
                z_hat.len(),
                self.m
            )));
        }
        let logits = self.decoder.predict(z_hat)?;
        let class = argmax(&logits);
        Ok((logits, class))
    }

    /// Encodes every input of `ds`.
    pub fn encode_all(&self, ds: &Dataset) -> Result<Vec<Vec<f64>>> {
        ds.inputs.iter().map(|x| self.encode(x)).collect()
    }

    /// Fraction of samples classified correctly after adding Gaussian noise
    /// to every encoded unit.
    pub fn evaluate_accuracy(&self, ds: &Dataset, noise: &UnitNoise, rng: &mut Rng) -> Result<f64> {
        self.require_frozen("evaluate_accuracy")?;
        if let UnitNoise::PerUnit(v) = noise {
            if v.len() != self.m {
                return Err(Error::Shape(format!("{} noise stds for {} units", v.len(), self.m)));
            }
        }
        if ds.is_empty() {
            return Ok(0.0);
        }
        let mut correct = 0usize;
        for (x, &y) in ds.inputs.iter().zip(&ds.labels) {
            let mut z = self.encode(x)?;
            for (k, zk) in z.iter_mut().enumerate() {
                let s = noise.std_for(k);
                if s != 0.0 {
                    *zk += s * rng.standard_normal();
                }
            }
            if self.decode(&z)?.1 == y {
                correct += 1;
            }
        }
        Ok(correct as f64 / ds.len() as f64)
    }

    /// Mean of `z_k²` over every sample and unit.
    pub fn measure_signal_power(encoder: &Network, ds: &Dataset) -> Result<f64> {
        let mut sum = 0.0;
        let mut count = 0usize;
        for x in &ds.inputs {
            for v in encoder.predict(x)? {
                sum += v * v;
                count += 1;
            }
        }
        Ok(if count == 0 { 0.0 } else { sum / count as f64 })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.require_frozen("save")?;
        let header = ModelHeader {
            format_version: MODEL_FORMAT_VERSION,
            m: self.m,
            encoder: self.encoder.spec().clone(),
            decoder: self.decoder.spec().clone(),
            train_snr_db: self.train_snr_db,
            signal_power: self.signal_power,
            seed: self.metadata.seed,
            dataset_name: self.metadata.dataset_name.clone(),
            train_config: self.metadata.train_config.clone(),
        };
        let header_json = serde_json::to_vec(&header)?;
        let mut payload = Vec::new();
        for net in [&self.encoder, &self.decoder] {
            for v in net.flat_params() {
                payload.extend_from_slice(&v.to_le_bytes());
            }
        }
        let mut out = Vec::with_capacity(32 + header_json.len() + payload.len());
        out.extend_from_slice(MODEL_MAGIC);
        out.extend_from_slice(&MODEL_FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
        out.extend_from_slice(&header_json);
        out.extend_from_slice(&((payload.len() / 8) as u64).to_le_bytes());
        out.extend_from_slice(&payload);
        out.extend_from_slice(&checksum64(&payload).to_le_bytes());
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<TscModel> {
        let mut r = ByteReader { bytes, at: 0 };
        if r.take(8)? != MODEL_MAGIC {
            return Err(Error::Format("not a model file (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != MODEL_FORMAT_VERSION {
            return Err(Error::Version {
                found: version,
                expected: MODEL_FORMAT_VERSION,
            });
        }
        let header_len = r.u32()? as usize;
        let header: ModelHeader = serde_json::from_slice(r.take(header_len)?)
            .map_err(|e| Error::Corrupt(format!("model header: {e}")))?;
        let count = r.u64()? as usize;
        let expected = header.encoder.num_params() + header.decoder.num_params();
        if count != expected {
            return Err(Error::Corrupt(format!(
                "payload declares {count} parameters, header implies {expected}"
            )));
        }
        let payload = r.take(count.checked_mul(8).ok_or_else(|| Error::Corrupt("payload size overflow".into()))?)?;
        let stored = r.u64()?;
        if r.at != bytes.len() {
            return Err(Error::Corrupt("trailing bytes after checksum".into()));
        }
        if checksum64(payload) != stored {
            return Err(Error::Corrupt("payload checksum mismatch".into()));
        }
        let values: Vec<f64> = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let split = header.encoder.num_params();
        let encoder = Network::from_flat_params(header.encoder, &values[..split])?;
        let decoder = Network::from_flat_params(header.decoder, &values[split..])?;
        let mut model = TscModel::from_networks(
            encoder,
            decoder,
            header.train_snr_db,
            header.signal_power,
            ModelMetadata {
                seed: header.seed,
                dataset_name: header.dataset_name,
                train_config: header.train_config,
            },
        )?;
        if model.m != header.m {
            return Err(Error::Corrupt("header m disagrees with layer dims".into()));
        }
        model.freeze();
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<TscModel> {
        TscModel::from_bytes(&fs::read(path)?)
    }

    /// Checksum over the serialized model.
    pub fn fingerprint(&self) -> Result<u64> {
        Ok(checksum64(&self.to_bytes()?))
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelHeader {
    format_version: u32,
    m: usize,
    encoder: NetworkSpec,
    decoder: NetworkSpec,
    train_snr_db: f64,
    signal_power: f64,
    seed: u64,
    dataset_name: String,
    train_config: TrainConfig,
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .at
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Corrupt(format!("truncated at byte {}", self.bytes.len())))?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// 64-bit FNV-1a.
pub fn checksum64(bytes: &[u8]) -> u64 {
    let mut h = FnvHasher::default();
    h.write(bytes);
    h.finish()
}

/// Jointly trains encoder and decoder through an AWGN channel at
/// `cfg.train_snr_db`, then freezes the result.
///
/// The noise level tracks an exponential moving average of the per-batch
/// encoded power, so the SNR is held fixed while the encoder's output scale
/// drifts.
pub fn train(ds: &Dataset, cfg: &TrainConfig) -> Result<TscModel> {
    cfg.validate()?;
    if ds.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    if ds.num_classes < 2 {
        return Err(Error::Config("need at least two classes".into()));
    }
    let mut encoder = Network::init(cfg.encoder_spec(ds.dim()), &mut Rng::new(cfg.seed, 10))?;
    let mut decoder = Network::init(cfg.decoder_spec(ds.num_classes), &mut Rng::new(cfg.seed, 11))?;
    if encoder.input_dim() != ds.dim() || decoder.output_dim() != ds.num_classes {
        return Err(Error::Config("network dims do not match dataset".into()));
    }
    let mut noise_rng = Rng::new(cfg.seed, 12);
    let mut order_rng = Rng::new(cfg.seed, 13);
    let mut enc_state = SgdState::new(&encoder);
    let mut dec_state = SgdState::new(&decoder);
    let mut running_power: Option<f64> = None;
    let mut order: Vec<usize> = (0..ds.len()).collect();

    for epoch in 0..cfg.epochs {
        order_rng.shuffle(&mut order);
        for batch in order.chunks(cfg.batch_size) {
            let mut enc_grads = GradBundle::zeros_like(&encoder);
            let mut dec_grads = GradBundle::zeros_like(&decoder);
            let forwards = batch
                .iter()
                .map(|&i| encoder.forward(&ds.inputs[i]))
                .collect::<Result<Vec<_>>>()?;
            let batch_power = forwards
                .iter()
                .map(|(z, _)| z.iter().map(|v| v * v).sum::<f64>())
                .sum::<f64>()
                / (batch.len() * cfg.m) as f64;
            let power = match running_power {
                None => batch_power,
                Some(p) => 0.9 * p + 0.1 * batch_power,
            }
            .max(1e-12);
            running_power = Some(power);
            let noise_std = snr_to_noise_std(cfg.train_snr_db, power);

            for (&i, (z, enc_cache)) in batch.iter().zip(&forwards) {
                let z_hat: Vec<f64> = z.iter().map(|v| v + noise_std * noise_rng.standard_normal()).collect();
                let (logits, dec_cache) = decoder.forward(&z_hat)?;
                let (loss, dlogits) = softmax_cross_entropy(&logits, ds.labels[i])?;
                if !loss.is_finite() {
                    return Err(Error::TrainDivergence { epoch });
                }
                let dg = decoder.backward(&dec_cache, &dlogits)?;
                let eg = encoder.backward(enc_cache, &dg.input_grad)?;
                dec_grads.add_assign(&dg);
                enc_grads.add_assign(&eg);
            }
            let scale = 1.0 / batch.len() as f64;
            dec_grads.scale(scale);
            enc_grads.scale(scale);
            if !dec_grads.is_finite() || !enc_grads.is_finite() {
                return Err(Error::TrainDivergence { epoch });
            }
            sgd_step(&mut decoder, &dec_grads, cfg.lr, cfg.momentum, &mut dec_state)?;
            sgd_step(&mut encoder, &enc_grads, cfg.lr, cfg.momentum, &mut enc_state)?;
        }
    }

    let signal_power = TscModel::measure_signal_power(&encoder, ds)?;
    if !signal_power.is_finite() {
        return Err(Error::TrainDivergence { epoch: cfg.epochs });
    }
    if !(signal_power > 0.0) {
        return Err(Error::Data("encoder output is identically zero".into()));
    }
    let mut model = TscModel::from_networks(
        encoder,
        decoder,
        cfg.train_snr_db,
        signal_power,
        ModelMetadata {
            seed: cfg.seed,
            dataset_name: ds.name.clone(),
            train_config: cfg.clone(),
        },
    )?;
    model.freeze();
    Ok(model)
}
