//! Per-unit robustness scores from artificial-noise injection.
//!
//! For a frozen transceiver, each analysed sample gets its own noise vector
//! `σ` (one std per feature unit), optimised against an information
//! bottleneck bound: the expected task loss of the decoder on `z + σ·ε`
//! plus or minus `β` times the Gaussian KL term
//! `½ Σ_k [σ_k²/δ_k² + ln(δ_k²/σ_k²) − 1]`. Units that tolerate large noise
//! without hurting the task are robust. The per-sample `σ` vectors are
//! pooled into a normalised mask `r` (`Σ r_k = 1`).

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datasets::Dataset;
use crate::error::{Error, Result};
use crate::nn::{softmax_cross_entropy, softplus, softplus_grad, Network};
use crate::rng::{derive_stream, Rng};
use crate::transceiver::{checksum64, TscModel};

/// Sign of the β-weighted KL term in the optimised loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KlSign {
    /// `loss = CE − β·KL`.
    #[default]
    PaperLiteral,
    /// `loss = CE + β·KL`.
    WellPosed,
}

impl KlSign {
    fn factor(self) -> f64 {
        match self {
            KlSign::PaperLiteral => -1.0,
            KlSign::WellPosed => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaMode {
    /// One σ per analysed sample, pooled afterwards.
    #[default]
    PerSample,
    /// A single σ optimised against the mean loss of all analysed samples.
    Shared,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IbConfig {
    pub beta: f64,
    pub lr: f64,
    pub iters: usize,
    pub noise_draws: usize,
    /// Bounds on the pre-softplus parameter.
    pub sigma_pre_clamp: (f64, f64),
    pub kl_sign: KlSign,
    pub delta_floor: f64,
    pub seed: u64,
    /// Samples analysed for σ; 0 means the whole dataset.
    pub num_samples: usize,
    pub mode: SigmaMode,
}

impl Default for IbConfig {
    fn default() -> Self {
        IbConfig {
            beta: 0.3,
            lr: 0.05,
            iters: 100,
            noise_draws: 8,
            sigma_pre_clamp: (-10.0, 10.0),
            kl_sign: KlSign::PaperLiteral,
            delta_floor: 1e-6,
            seed: 0,
            num_samples: 64,
            mode: SigmaMode::PerSample,
        }
    }
}

impl IbConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return Err(Error::param("beta", "must be finite and >= 0"));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::param("lr", "must be positive"));
        }
        if self.noise_draws < 1 {
            return Err(Error::param("noise_draws", "must be >= 1"));
        }
        if !(self.delta_floor > 0.0) {
            return Err(Error::param("delta_floor", "must be positive"));
        }
        let (lo, hi) = self.sigma_pre_clamp;
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::param("sigma_pre_clamp", "need finite lo < hi"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaProfile {
    pub delta: Vec<f64>,
    /// `max_k δ_k²`
    pub r_threshold: f64,
}

impl DeltaProfile {
    pub fn new(delta: Vec<f64>) -> Result<Self> {
        if delta.is_empty() || delta.iter().any(|d| !(*d > 0.0) || !d.is_finite()) {
            return Err(Error::Domain("delta entries must be positive and finite".into()));
        }
        let r_threshold = delta.iter().map(|d| d * d).fold(0.0, f64::max);
        Ok(DeltaProfile { delta, r_threshold })
    }

    pub fn m(&self) -> usize {
        self.delta.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SigmaResult {
    pub sigma: Vec<f64>,
    pub loss_trace: Vec<f64>,
    /// `None` for a shared σ.
    pub sample_index: Option<usize>,
}

/// Settings echoed into the exported mask.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskProvenance {
    pub beta: f64,
    pub kl_sign: KlSign,
    pub seed: u64,
}

impl Default for MaskProvenance {
    fn default() -> Self {
        let d = IbConfig::default();
        MaskProvenance {
            beta: d.beta,
            kl_sign: d.kl_sign,
            seed: d.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustnessMask {
    pub r: Vec<f64>,
    pub sigma_mean_sq: Vec<f64>,
    /// `sigma_mean_sq_k > R`
    pub robust_flags: Vec<bool>,
    pub delta_profile: DeltaProfile,
    pub num_samples: usize,
    pub provenance: MaskProvenance,
}

#[derive(Debug, Serialize, Deserialize)]
struct MaskRecord {
    m: usize,
    beta: f64,
    kl_sign: KlSign,
    delta: Vec<f64>,
    #[serde(rename = "R")]
    r_threshold: f64,
    sigma_mean_sq: Vec<f64>,
    r: Vec<f64>,
    robust_flags: Vec<bool>,
    num_samples: usize,
    seed: u64,
}

/// Tolerance on `Σ r_k = 1`.
pub const MASK_SUM_TOLERANCE: f64 = 1e-9;

impl RobustnessMask {
    pub fn m(&self) -> usize {
        self.r.len()
    }

    pub fn to_json(&self) -> Result<String> {
        let rec = MaskRecord {
            m: self.m(),
            beta: self.provenance.beta,
            kl_sign: self.provenance.kl_sign,
            delta: self.delta_profile.delta.clone(),
            r_threshold: self.delta_profile.r_threshold,
            sigma_mean_sq: self.sigma_mean_sq.clone(),
            r: self.r.clone(),
            robust_flags: self.robust_flags.clone(),
            num_samples: self.num_samples,
            seed: self.provenance.seed,
        };
        Ok(serde_json::to_string_pretty(&rec)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let rec: MaskRecord = serde_json::from_str(s).map_err(|e| Error::Corrupt(format!("mask: {e}")))?;
        let m = rec.m;
        if [rec.delta.len(), rec.sigma_mean_sq.len(), rec.r.len(), rec.robust_flags.len()]
            .iter()
            .any(|&n| n != m)
        {
            return Err(Error::Corrupt(format!("mask vectors must all have length {m}")));
        }
        if rec.r.iter().any(|&v| !(v >= 0.0)) {
            return Err(Error::Corrupt("mask has a negative score".into()));
        }
        let sum: f64 = rec.r.iter().sum();
        if (sum - 1.0).abs() > MASK_SUM_TOLERANCE {
            return Err(Error::Corrupt(format!("mask scores sum to {sum}, not 1")));
        }
        let delta_profile = DeltaProfile::new(rec.delta).map_err(|e| Error::Corrupt(e.to_string()))?;
        if delta_profile.r_threshold != rec.r_threshold {
            return Err(Error::Corrupt("R disagrees with max(delta²)".into()));
        }
        Ok(RobustnessMask {
            r: rec.r,
            sigma_mean_sq: rec.sigma_mean_sq,
            robust_flags: rec.robust_flags,
            delta_profile,
            num_samples: rec.num_samples,
            provenance: MaskProvenance {
                beta: rec.beta,
                kl_sign: rec.kl_sign,
                seed: rec.seed,
            },
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        RobustnessMask::from_json(&fs::read_to_string(path)?)
    }

    pub fn fingerprint(&self) -> Result<u64> {
        Ok(checksum64(self.to_json()?.as_bytes()))
    }
}

/// Per-unit population standard deviation of the given feature vectors,
/// floored at `delta_floor`.
pub fn delta_from_features(features: &[Vec<f64>], delta_floor: f64) -> Result<DeltaProfile> {
    let Some(first) = features.first() else {
        return Err(Error::Data("cannot estimate delta from an empty set".into()));
    };
    if !(delta_floor > 0.0) {
        return Err(Error::param("delta_floor", "must be positive"));
    }
    let m = first.len();
    let n = features.len() as f64;
    let mut mean = vec![0.0; m];
    for z in features {
        if z.len() != m {
            return Err(Error::Shape("feature vectors differ in length".into()));
        }
        for (a, v) in mean.iter_mut().zip(z) {
            *a += v;
        }
    }
    mean.iter_mut().for_each(|v| *v /= n);
    let mut var = vec![0.0; m];
    for z in features {
        for ((a, v), mu) in var.iter_mut().zip(z).zip(&mean) {
            *a += (v - mu) * (v - mu);
        }
    }
    DeltaProfile::new(
        var.iter()
            .map(|v| (v / n).sqrt().max(delta_floor))
            .collect(),
    )
}

pub fn estimate_delta(model: &TscModel, ds: &Dataset, delta_floor: f64) -> Result<DeltaProfile> {
    if ds.is_empty() {
        return Err(Error::Data("cannot estimate delta from an empty dataset".into()));
    }
    delta_from_features(&model.encode_all(ds)?, delta_floor)
}

/// `½ [σ²/δ² + ln(δ²/σ²) − 1]` for one unit.
pub fn kl_summand(sigma: f64, delta: f64) -> f64 {
    0.5 * ((sigma * sigma) / (delta * delta) + 2.0 * (delta.ln() - sigma.ln()) - 1.0)
}

/// `∂/∂σ` of [`kl_summand`].
pub fn kl_summand_grad(sigma: f64, delta: f64) -> f64 {
    sigma / (delta * delta) - 1.0 / sigma
}

#[derive(Debug, Clone, PartialEq)]
pub struct IbLoss {
    pub loss: f64,
    /// Mean cross-entropy over the noise draws.
    pub ce: f64,
    /// Unsigned, un-weighted KL term.
    pub kl: f64,
    pub grad: Vec<f64>,
}

/// Loss and σ-gradient with explicit noise draws `eps` (one vector per draw).
pub fn ib_loss_with_noise(
    decoder: &Network,
    z: &[f64],
    label: usize,
    sigma: &[f64],
    delta: &DeltaProfile,
    beta: f64,
    kl_sign: KlSign,
    eps: &[Vec<f64>],
) -> Result<IbLoss> {
    let m = z.len();
    if sigma.len() != m || delta.m() != m || decoder.input_dim() != m {
        return Err(Error::Shape(format!(
            "z has {m} units; sigma {}, delta {}, decoder input {}",
            sigma.len(),
            delta.m(),
            decoder.input_dim()
        )));
    }
    if sigma.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::Domain("sigma must be strictly positive".into()));
    }
    if delta.delta.iter().any(|d| !(*d > 0.0)) {
        return Err(Error::Domain("delta must be strictly positive".into()));
    }
    if eps.is_empty() {
        return Err(Error::param("noise_draws", "need at least one draw"));
    }

    let mut ce = 0.0;
    let mut grad = vec![0.0; m];
    let mut z_tilde = vec![0.0; m];
    for e in eps {
        for k in 0..m {
            z_tilde[k] = z[k] + sigma[k] * e[k];
        }
        let (logits, cache) = decoder.forward(&z_tilde)?;
        let (loss, dlogits) = softmax_cross_entropy(&logits, label)?;
        let g = decoder.input_grad(&cache, &dlogits)?;
        ce += loss;
        for k in 0..m {
            grad[k] += g[k] * e[k];
        }
    }
    let draws = eps.len() as f64;
    ce /= draws;
    grad.iter_mut().for_each(|g| *g /= draws);

    let sign = kl_sign.factor() * beta;
    let mut kl = 0.0;
    for k in 0..m {
        kl += kl_summand(sigma[k], delta.delta[k]);
        grad[k] += sign * kl_summand_grad(sigma[k], delta.delta[k]);
    }
    Ok(IbLoss {
        loss: ce + sign * kl,
        ce,
        kl,
        grad,
    })
}

/// Draws `noise_draws` fresh ε vectors from `rng` and evaluates the loss.
#[allow(clippy::too_many_arguments)]
pub fn ib_loss_and_grad(
    model: &TscModel,
    z: &[f64],
    label: usize,
    sigma: &[f64],
    delta: &DeltaProfile,
    beta: f64,
    kl_sign: KlSign,
    noise_draws: usize,
    rng: &mut Rng,
) -> Result<IbLoss> {
    let eps = draw_noise(rng, noise_draws, z.len());
    ib_loss_with_noise(model.decoder(), z, label, sigma, delta, beta, kl_sign, &eps)
}

fn draw_noise(rng: &mut Rng, draws: usize, m: usize) -> Vec<Vec<f64>> {
    (0..draws)
        .map(|_| {
            let mut e = vec![0.0; m];
            rng.fill_standard_normal(&mut e);
            e
        })
        .collect()
}

/// The noise stream used for sample `index` under `seed`.
pub fn sample_stream(seed: u64, index: usize) -> Rng {
    Rng::new(seed, derive_stream(0x1B, index as u64))
}

/// Softplus-parameterised gradient descent on σ for one sample. `ρ` starts
/// at 0 (σ = ln 2) and stays inside `cfg.sigma_pre_clamp`.
pub fn optimize_sigma_for_sample(
    model: &TscModel,
    x: &[f64],
    label: usize,
    sample_index: usize,
    delta: &DeltaProfile,
    cfg: &IbConfig,
) -> Result<SigmaResult> {
    cfg.validate()?;
    let z = model.encode(x)?;
    let mut rng = sample_stream(cfg.seed, sample_index);
    optimize_sigma(model.decoder(), &[(z, label)], delta, cfg, &mut rng, Some(sample_index))
}

/// One σ for all `samples` (feature vector, label), minimising their mean loss.
pub fn optimize_sigma_shared(
    model: &TscModel,
    samples: &[(Vec<f64>, usize)],
    delta: &DeltaProfile,
    cfg: &IbConfig,
) -> Result<SigmaResult> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::Data("no samples for shared sigma".into()));
    }
    let encoded = samples
        .iter()
        .map(|(x, y)| Ok((model.encode(x)?, *y)))
        .collect::<Result<Vec<_>>>()?;
    let mut rng = sample_stream(cfg.seed, usize::MAX);
    optimize_sigma(model.decoder(), &encoded, delta, cfg, &mut rng, None)
}

fn optimize_sigma(
    decoder: &Network,
    encoded: &[(Vec<f64>, usize)],
    delta: &DeltaProfile,
    cfg: &IbConfig,
    rng: &mut Rng,
    sample_index: Option<usize>,
) -> Result<SigmaResult> {
    let m = delta.m();
    let (lo, hi) = cfg.sigma_pre_clamp;
    let mut rho = vec![0.0f64.clamp(lo, hi); m];
    let mut loss_trace = Vec::with_capacity(cfg.iters);
    let n = encoded.len() as f64;
    for iteration in 0..cfg.iters {
        let sigma: Vec<f64> = rho.iter().map(|&p| softplus(p)).collect();
        let mut loss = 0.0;
        let mut grad = vec![0.0; m];
        for (z, y) in encoded {
            let eps = draw_noise(rng, cfg.noise_draws, m);
            let l = ib_loss_with_noise(decoder, z, *y, &sigma, delta, cfg.beta, cfg.kl_sign, &eps)?;
            loss += l.loss / n;
            for (g, lg) in grad.iter_mut().zip(&l.grad) {
                *g += lg / n;
            }
        }
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::SigmaDivergence { iteration });
        }
        loss_trace.push(loss);
        for (p, g) in rho.iter_mut().zip(&grad) {
            *p = (*p - cfg.lr * g * softplus_grad(*p)).clamp(lo, hi);
        }
    }
    Ok(SigmaResult {
        sigma: rho.iter().map(|&p| softplus(p)).collect(),
        loss_trace,
        sample_index,
    })
}

/// Pools per-sample σ vectors: `r_k = Σ_i σ_k^i / Σ_i Σ_l σ_l^i`.
pub fn compute_mask(results: &[SigmaResult], delta: &DeltaProfile) -> Result<RobustnessMask> {
    let Some(first) = results.first() else {
        return Err(Error::Data("no sigma results to pool".into()));
    };
    let m = first.sigma.len();
    if m != delta.m() || results.iter().any(|r| r.sigma.len() != m) {
        return Err(Error::Shape("sigma results and delta disagree on m".into()));
    }
    if results.iter().flat_map(|r| &r.sigma).any(|s| !(*s > 0.0) || !s.is_finite()) {
        return Err(Error::Domain("sigma must be positive and finite".into()));
    }
    let mut per_unit = vec![0.0; m];
    let mut per_unit_sq = vec![0.0; m];
    for res in results {
        for k in 0..m {
            per_unit[k] += res.sigma[k];
            per_unit_sq[k] += res.sigma[k] * res.sigma[k];
        }
    }
    let total: f64 = per_unit.iter().sum();
    let n = results.len() as f64;
    let r: Vec<f64> = per_unit.iter().map(|s| s / total).collect();
    let sigma_mean_sq: Vec<f64> = per_unit_sq.iter().map(|s| s / n).collect();
    let robust_flags = sigma_mean_sq.iter().map(|&s| s > delta.r_threshold).collect();
    Ok(RobustnessMask {
        r,
        sigma_mean_sq,
        robust_flags,
        delta_profile: delta.clone(),
        num_samples: results.len(),
        provenance: MaskProvenance::default(),
    })
}

/// Unit indices by descending score, ties to the lower index.
pub fn rank_units(mask: &RobustnessMask) -> Vec<usize> {
    rank_scores(&mask.r)
}

pub fn rank_scores(r: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..r.len()).collect();
    idx.sort_by(|&a, &b| r[b].total_cmp(&r[a]).then(a.cmp(&b)));
    idx
}

/// Full mask pipeline: δ over `ds`, σ for the first `cfg.num_samples`
/// samples (in parallel, one noise stream per sample), then pooling.
pub fn generate_mask(model: &TscModel, ds: &Dataset, cfg: &IbConfig) -> Result<RobustnessMask> {
    cfg.validate()?;
    let delta = estimate_delta(model, ds, cfg.delta_floor)?;
    let n = if cfg.num_samples == 0 {
        ds.len()
    } else {
        cfg.num_samples.min(ds.len())
    };
    let results: Vec<SigmaResult> = match cfg.mode {
        SigmaMode::PerSample => (0..n)
            .into_par_iter()
            .map(|i| optimize_sigma_for_sample(model, &ds.inputs[i], ds.labels[i], i, &delta, cfg))
            .collect::<Result<Vec<_>>>()?,
        SigmaMode::Shared => {
            let samples: Vec<(Vec<f64>, usize)> = (0..n).map(|i| (ds.inputs[i].clone(), ds.labels[i])).collect();
            vec![optimize_sigma_shared(model, &samples, &delta, cfg)?]
        }
    };
    let mut mask = compute_mask(&results, &delta)?;
    mask.num_samples = n;
    mask.provenance = MaskProvenance {
        beta: cfg.beta,
        kl_sign: cfg.kl_sign,
        seed: cfg.seed,
    };
    Ok(mask)
}
