//! Experiment harness: accuracy-vs-SNR sweeps over allocation strategies and
//! the robust/non-robust half-split analysis.

mod pca;
mod silhouette;

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use pca::{pca_2d, Pca2d, NEAR_DEGENERATE_RATIO};
pub use silhouette::{silhouette, Silhouette};

use crate::allocation::{greedy_allocate, random_allocate, worst_case_allocate, AllocationPlan, Strategy};
use crate::channel::{realize, sample_subchannels_with, snr_to_noise_std, Dispersion};
use crate::datasets::Dataset;
use crate::error::{Error, Result};
use crate::ib_mask::{rank_units, RobustnessMask};
use crate::rng::{derive_stream, Rng};
use crate::transceiver::TscModel;

/// Subchannel layout used when sampling CSI.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelGeometry {
    pub subchannels: usize,
    pub capacity: usize,
    pub dispersion: Dispersion,
}

impl ChannelGeometry {
    pub fn check(&self, m: usize) -> Result<()> {
        if self.subchannels == 0 || self.capacity == 0 {
            return Err(Error::Config("geometry needs >= 1 subchannel and capacity >= 1".into()));
        }
        if self.subchannels * self.capacity < m {
            return Err(Error::Config(format!(
                "{} subchannels x capacity {} cannot carry {m} units",
                self.subchannels, self.capacity
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub snr_points_db: Vec<f64>,
    pub variance_list_db: Vec<f64>,
    pub strategies: Vec<Strategy>,
    pub realizations_per_point: usize,
    /// Test samples decoded per realization; 0 means the whole test set.
    pub samples_per_realization: usize,
    pub seed: u64,
    /// SNR of the noisy condition in the half-split analysis.
    pub half_split_snr_db: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            snr_points_db: vec![-5.0, 0.0, 5.0, 10.0, 15.0, 20.0],
            variance_list_db: vec![15.0, 2.0],
            strategies: vec![Strategy::Proposed, Strategy::Random, Strategy::WorstCase],
            realizations_per_point: 20,
            samples_per_realization: 0,
            seed: 0,
            half_split_snr_db: 0.0,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.snr_points_db.is_empty() {
            return Err(Error::param("snr_points_db", "must not be empty"));
        }
        if self.variance_list_db.is_empty() {
            return Err(Error::param("variance_list_db", "must not be empty"));
        }
        if self.variance_list_db.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::param("variance_list_db", "variances must be >= 0"));
        }
        if self.realizations_per_point < 1 {
            return Err(Error::param("realizations_per_point", "must be >= 1"));
        }
        if self.strategies.is_empty() || self.strategies.contains(&Strategy::BruteForce) {
            return Err(Error::param(
                "strategies",
                "choose from proposed, random, worst_case",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub snr_db: f64,
    pub variance_db: f64,
    pub strategy: Strategy,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub n: usize,
    /// Per-realization accuracies, in realization order.
    #[serde(skip)]
    pub accuracies: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub model_checksum: u64,
    pub mask_checksum: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub metadata: ReportMetadata,
}

impl SweepReport {
    pub fn row(&self, snr_db: f64, variance_db: f64, strategy: Strategy) -> Option<&SweepRow> {
        self.rows
            .iter()
            .find(|r| r.snr_db == snr_db && r.variance_db == variance_db && r.strategy == strategy)
    }

    /// CSV with header `snr_db,variance_db,strategy,mean_accuracy,std_accuracy,n`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("snr_db,variance_db,strategy,mean_accuracy,std_accuracy,n\n");
        for r in &self.rows {
            writeln!(
                out,
                "{:?},{:?},{},{:?},{:?},{}",
                r.snr_db, r.variance_db, r.strategy, r.mean_accuracy, r.std_accuracy, r.n
            )
            .unwrap();
        }
        out
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, std)
}

fn plan_for(strategy: Strategy, mask: &RobustnessMask, subs: &crate::channel::SubchannelSet, rng: &mut Rng) -> Result<AllocationPlan> {
    match strategy {
        Strategy::Proposed => greedy_allocate(mask, subs),
        Strategy::Random => random_allocate(mask.m(), subs, rng),
        Strategy::WorstCase => worst_case_allocate(mask, subs),
        Strategy::BruteForce => Err(Error::Config("brute force is not a sweep strategy".into())),
    }
}

fn accuracy_on(
    model: &TscModel,
    encoded: &[Vec<f64>],
    labels: &[usize],
    noise_std: &[f64],
    rng: &mut Rng,
) -> Result<f64> {
    let mut correct = 0usize;
    let mut z_hat = vec![0.0; noise_std.len()];
    for (z, &y) in encoded.iter().zip(labels) {
        for k in 0..z.len() {
            z_hat[k] = z[k] + noise_std[k] * rng.standard_normal();
        }
        if model.decode(&z_hat)?.1 == y {
            correct += 1;
        }
    }
    Ok(correct as f64 / encoded.len() as f64)
}

/// For every (variance, SNR, realization): samples CSI, allocates with each
/// strategy and measures test accuracy. Strategies share the channel noise
/// stream of a realization, so their accuracies are paired.
pub fn run_snr_sweep(
    model: &TscModel,
    mask: &RobustnessMask,
    geometry: ChannelGeometry,
    test: &Dataset,
    cfg: &SweepConfig,
) -> Result<SweepReport> {
    cfg.validate()?;
    if mask.m() != model.m() {
        return Err(Error::Config(format!(
            "mask has {} units, model has {}",
            mask.m(),
            model.m()
        )));
    }
    geometry.check(model.m())?;
    if test.is_empty() {
        return Err(Error::Data("empty test set".into()));
    }
    let n = if cfg.samples_per_realization == 0 {
        test.len()
    } else {
        cfg.samples_per_realization.min(test.len())
    };
    let subset = test.take(n);
    let encoded = model.encode_all(&subset)?;
    let power = model.signal_power();

    let mut rows = Vec::new();
    for (vi, &variance) in cfg.variance_list_db.iter().enumerate() {
        for (si, &snr) in cfg.snr_points_db.iter().enumerate() {
            let point = derive_stream(vi as u64, si as u64);
            let per_realization: Vec<Vec<f64>> = (0..cfg.realizations_per_point)
                .into_par_iter()
                .map(|ri| {
                    let key = derive_stream(point, ri as u64);
                    let subs = sample_subchannels_with(
                        geometry.subchannels,
                        geometry.capacity,
                        snr,
                        variance,
                        geometry.dispersion,
                        derive_stream(cfg.seed, key),
                    )?;
                    let mut alloc_rng = Rng::new(cfg.seed, derive_stream(key, 1));
                    cfg.strategies
                        .iter()
                        .map(|&s| {
                            let plan = plan_for(s, mask, &subs, &mut alloc_rng)?;
                            let real = realize(&plan, &subs, power)?;
                            let mut noise_rng = Rng::new(cfg.seed, derive_stream(key, 2));
                            accuracy_on(model, &encoded, &subset.labels, &real.per_unit_noise_std, &mut noise_rng)
                        })
                        .collect::<Result<Vec<f64>>>()
                })
                .collect::<Result<Vec<_>>>()?;
            for (k, &strategy) in cfg.strategies.iter().enumerate() {
                let accs: Vec<f64> = per_realization.iter().map(|r| r[k]).collect();
                let (mean, std) = mean_std(&accs);
                rows.push(SweepRow {
                    snr_db: snr,
                    variance_db: variance,
                    strategy,
                    mean_accuracy: mean,
                    std_accuracy: std,
                    n: accs.len(),
                    accuracies: accs,
                });
            }
        }
    }
    Ok(SweepReport {
        rows,
        metadata: ReportMetadata {
            model_checksum: model.fingerprint()?,
            mask_checksum: mask.fingerprint()?,
            seed: cfg.seed,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Half {
    First,
    Second,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelCondition {
    Ideal,
    Noisy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalfCondition {
    pub half: Half,
    pub channel: ChannelCondition,
    pub accuracy: f64,
    pub silhouette: f64,
    pub pca_rank_deficient: bool,
    pub pca_near_degenerate: bool,
    #[serde(skip)]
    pub coords: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalfSplitReport {
    pub first_half_units: Vec<usize>,
    pub second_half_units: Vec<usize>,
    pub noisy_snr_db: f64,
    pub conditions: Vec<HalfCondition>,
    #[serde(skip)]
    pub labels: Vec<usize>,
    pub metadata: ReportMetadata,
}

impl HalfSplitReport {
    pub fn get(&self, half: Half, channel: ChannelCondition) -> &HalfCondition {
        self.conditions
            .iter()
            .find(|c| c.half == half && c.channel == channel)
            .expect("all four conditions are present")
    }

    /// Ideal accuracy minus noisy accuracy for one half.
    pub fn degradation(&self, half: Half) -> f64 {
        self.get(half, ChannelCondition::Ideal).accuracy - self.get(half, ChannelCondition::Noisy).accuracy
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// CSV with header `half,channel,class,pc1,pc2`.
    pub fn coords_csv(&self) -> String {
        let mut out = String::from("half,channel,class,pc1,pc2\n");
        for c in &self.conditions {
            let half = match c.half {
                Half::First => "first",
                Half::Second => "second",
            };
            let channel = match c.channel {
                ChannelCondition::Ideal => "ideal",
                ChannelCondition::Noisy => "noisy",
            };
            for (p, y) in c.coords.iter().zip(&self.labels) {
                writeln!(out, "{half},{channel},{y},{:?},{:?}", p[0], p[1]).unwrap();
            }
        }
        out
    }
}

/// Per-unit mean of the encoded training set.
pub fn unit_means(model: &TscModel, train: &Dataset) -> Result<Vec<f64>> {
    if train.is_empty() {
        return Err(Error::Data("empty training set".into()));
    }
    let mut mean = vec![0.0; model.m()];
    for x in &train.inputs {
        for (m, v) in mean.iter_mut().zip(model.encode(x)?) {
            *m += v;
        }
    }
    let n = train.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    Ok(mean)
}

/// Decodes from one half of the ranked units at a time, filling the other
/// half with its training-set means, under an ideal and a noisy channel.
pub fn half_split_analysis(
    model: &TscModel,
    mask: &RobustnessMask,
    train: &Dataset,
    test: &Dataset,
    noisy_snr_db: f64,
    seed: u64,
) -> Result<HalfSplitReport> {
    let m = model.m();
    if mask.m() != m {
        return Err(Error::Shape(format!("mask has {} units, model has {m}", mask.m())));
    }
    if m < 2 {
        return Err(Error::Shape("need at least two units to split".into()));
    }
    let order = rank_units(mask);
    let cut = m.div_ceil(2);
    let halves = [
        (Half::First, order[..cut].to_vec()),
        (Half::Second, order[cut..].to_vec()),
    ];
    let means = unit_means(model, train)?;
    let encoded = model.encode_all(test)?;
    let noise_std = snr_to_noise_std(noisy_snr_db, model.signal_power());

    let mut conditions = Vec::new();
    for (half, units) in &halves {
        for channel in [ChannelCondition::Ideal, ChannelCondition::Noisy] {
            let std = match channel {
                ChannelCondition::Ideal => 0.0,
                ChannelCondition::Noisy => noise_std,
            };
            let mut rng = Rng::new(seed, derive_stream(0x4A1F, channel as u64));
            let mut correct = 0usize;
            let mut retained = Vec::with_capacity(encoded.len());
            for (z, &y) in encoded.iter().zip(&test.labels) {
                let mut z_hat = means.clone();
                let mut kept = Vec::with_capacity(units.len());
                for &k in units {
                    let v = z[k] + std * rng.standard_normal();
                    z_hat[k] = v;
                    kept.push(v);
                }
                if model.decode(&z_hat)?.1 == y {
                    correct += 1;
                }
                retained.push(kept);
            }
            let (sil, coords, rank_deficient, near_degenerate) = if units.len() >= 2 && retained.len() >= 3 {
                let p = pca_2d(&retained)?;
                let s = silhouette(&p.coords, &test.labels)?;
                (s.score, p.coords, p.rank_deficient, p.near_degenerate)
            } else {
                // a single retained unit: project onto it directly
                let coords: Vec<[f64; 2]> = retained.iter().map(|v| [v.first().copied().unwrap_or(0.0), 0.0]).collect();
                let s = silhouette(&coords, &test.labels)?;
                (s.score, coords, true, false)
            };
            conditions.push(HalfCondition {
                half: *half,
                channel,
                accuracy: correct as f64 / test.len() as f64,
                silhouette: sil,
                pca_rank_deficient: rank_deficient,
                pca_near_degenerate: near_degenerate,
                coords,
            });
        }
    }
    Ok(HalfSplitReport {
        first_half_units: halves[0].1.clone(),
        second_half_units: halves[1].1.clone(),
        noisy_snr_db,
        conditions,
        labels: test.labels.clone(),
        metadata: ReportMetadata {
            model_checksum: model.fingerprint()?,
            mask_checksum: mask.fingerprint()?,
            seed,
        },
    })
}
