//! Parallel AWGN subchannels with per-subchannel SNR (unit gain, perfect CSI).

use std::fmt::Write as _;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::allocation::AllocationPlan;
use crate::error::{Error, Result};
use crate::rng::Rng;

/// How the dispersion parameter of [`sample_subchannels_with`] is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dispersion {
    /// Variance of the SNR in dB².
    #[default]
    Variance,
    /// Standard deviation of the SNR in dB.
    StdDev,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubchannelSet {
    pub snr_db: Vec<f64>,
    /// Feature units each subchannel can carry.
    pub capacity: usize,
    pub mean_snr_db: f64,
    pub variance_db: f64,
    pub seed: u64,
}

impl SubchannelSet {
    pub fn len(&self) -> usize {
        self.snr_db.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snr_db.is_empty()
    }

    pub fn total_capacity(&self) -> usize {
        self.snr_db.len() * self.capacity
    }

    /// Wraps an externally measured CSI vector.
    pub fn from_csi(snr_db: Vec<f64>, capacity: usize) -> Result<Self> {
        if snr_db.is_empty() {
            return Err(Error::param("snr_db", "need at least one subchannel"));
        }
        if capacity < 1 {
            return Err(Error::param("capacity", "must be >= 1"));
        }
        if snr_db.iter().any(|v| v.is_nan()) {
            return Err(Error::param("snr_db", "NaN SNR"));
        }
        let n = snr_db.len() as f64;
        let mean = snr_db.iter().sum::<f64>() / n;
        let variance = snr_db.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Ok(SubchannelSet {
            snr_db,
            capacity,
            mean_snr_db: mean,
            variance_db: variance,
            seed: 0,
        })
    }

    /// CSV with header `subchannel_index,snr_db`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("subchannel_index,snr_db\n");
        for (j, s) in self.snr_db.iter().enumerate() {
            writeln!(out, "{j},{s:?}").unwrap();
        }
        out
    }

    /// Reads a CSI CSV. Rows may appear in any order but indices must cover
    /// `0..s` exactly once.
    pub fn from_csv<R: BufRead>(r: R, capacity: usize) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Format("empty CSI file".into()))??;
        if header.trim() != "subchannel_index,snr_db" {
            return Err(Error::Format(format!(
                "CSI header must be `subchannel_index,snr_db`, got `{}`",
                header.trim()
            )));
        }
        let mut rows = Vec::new();
        for (n, line) in lines.enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (idx, snr) = line
                .split_once(',')
                .ok_or_else(|| Error::Format(format!("CSI row {}: expected two fields", n + 1)))?;
            let idx: usize = idx
                .trim()
                .parse()
                .map_err(|_| Error::Format(format!("CSI row {}: bad index", n + 1)))?;
            let snr: f64 = snr
                .trim()
                .parse()
                .map_err(|_| Error::Format(format!("CSI row {}: bad snr", n + 1)))?;
            rows.push((idx, snr));
        }
        rows.sort_by_key(|r| r.0);
        if rows.iter().enumerate().any(|(i, r)| r.0 != i) {
            return Err(Error::Format("CSI indices must be 0..s without gaps or repeats".into()));
        }
        SubchannelSet::from_csi(rows.into_iter().map(|r| r.1).collect(), capacity)
    }
}

/// Per-unit noise after mapping units to subchannels. Gain is 1 for every unit.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub per_unit_noise_std: Vec<f64>,
}

impl ChannelRealization {
    /// Every unit sees the same SNR.
    pub fn uniform(m: usize, snr_db: f64, signal_power: f64) -> Self {
        ChannelRealization {
            per_unit_noise_std: vec![snr_to_noise_std(snr_db, signal_power); m],
        }
    }
}

/// SNRs drawn from `N(mean, variance)` in dB and clamped to `mean ± 3σ`.
pub fn sample_subchannels(s: usize, capacity: usize, mean_snr_db: f64, variance_db: f64, seed: u64) -> Result<SubchannelSet> {
    sample_subchannels_with(s, capacity, mean_snr_db, variance_db, Dispersion::Variance, seed)
}

pub fn sample_subchannels_with(
    s: usize,
    capacity: usize,
    mean_snr_db: f64,
    dispersion: f64,
    kind: Dispersion,
    seed: u64,
) -> Result<SubchannelSet> {
    if s < 1 {
        return Err(Error::param("s", "need at least one subchannel"));
    }
    if capacity < 1 {
        return Err(Error::param("capacity", "must be >= 1"));
    }
    if !(dispersion >= 0.0) || !dispersion.is_finite() {
        return Err(Error::param("variance_db", "must be finite and >= 0"));
    }
    let std = match kind {
        Dispersion::Variance => dispersion.sqrt(),
        Dispersion::StdDev => dispersion,
    };
    let mut rng = Rng::new(seed, 0x5C);
    let (lo, hi) = (mean_snr_db - 3.0 * std, mean_snr_db + 3.0 * std);
    let snr_db = (0..s)
        .map(|_| {
            let g = rng.standard_normal();
            if std == 0.0 {
                mean_snr_db
            } else {
                (mean_snr_db + std * g).clamp(lo, hi)
            }
        })
        .collect();
    Ok(SubchannelSet {
        snr_db,
        capacity,
        mean_snr_db,
        variance_db: std * std,
        seed,
    })
}

/// `sqrt(P · 10^(−snr/10))`
pub fn snr_to_noise_std(snr_db: f64, signal_power: f64) -> f64 {
    (signal_power * 10f64.powf(-snr_db / 10.0)).sqrt()
}

pub fn realize(plan: &AllocationPlan, subs: &SubchannelSet, signal_power: f64) -> Result<ChannelRealization> {
    if !(signal_power > 0.0) {
        return Err(Error::param("signal_power", "must be positive"));
    }
    plan.check_feasible(subs)?;
    Ok(ChannelRealization {
        per_unit_noise_std: plan
            .assign
            .iter()
            .map(|&j| snr_to_noise_std(subs.snr_db[j], signal_power))
            .collect(),
    })
}

/// `ẑ_k = z_k + std_k · ε_k`
pub fn transmit(z: &[f64], realization: &ChannelRealization, rng: &mut Rng) -> Result<Vec<f64>> {
    let stds = &realization.per_unit_noise_std;
    if z.len() != stds.len() {
        return Err(Error::Shape(format!(
            "feature block has {} units, channel realization has {}",
            z.len(),
            stds.len()
        )));
    }
    Ok(z
        .iter()
        .zip(stds)
        .map(|(v, s)| v + s * rng.standard_normal())
        .collect())
}
