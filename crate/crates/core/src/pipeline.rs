//! Declarative run configuration and the staged workflow behind the
//! command-line tool.
//!
//! Every stage reads its upstream artifacts from the run directory, checks
//! them against the checksums recorded in their sidecars, and writes its own
//! artifact plus a `<stage>.meta.json` sidecar. All outputs are byte-for-byte
//! functions of (config, seed, upstream artifacts).

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};

use crate::allocation::{
    brute_force_allocate, greedy_allocate, random_allocate, separable_utility, worst_case_allocate, AllocationPlan,
    Strategy,
};
use crate::channel::{sample_subchannels_with, Dispersion, SubchannelSet};
use crate::datasets::{gen_gaussian_mixture, load_idx, split, Dataset, SplitSpec};
use crate::error::{Error, Result};
use crate::eval::{half_split_analysis, run_snr_sweep, ChannelGeometry, SweepConfig};
use crate::ib_mask::{generate_mask, IbConfig, RobustnessMask};
use crate::rng::{derive_stream, Rng};
use crate::transceiver::{checksum64, train, TrainConfig, TscModel};

pub const SEED_ENV: &str = "SEMCOM_SEED";

pub const TRAIN_CSV: &str = "train.csv";
pub const TEST_CSV: &str = "test.csv";
pub const MODEL_FILE: &str = "model.tscm";
pub const MASK_FILE: &str = "mask.json";
pub const PLAN_FILE: &str = "plan.csv";
pub const CSI_FILE: &str = "csi.csv";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const HALFSPLIT_FILE: &str = "halfsplit.json";
pub const HALFSPLIT_COORDS_FILE: &str = "halfsplit_coords.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    #[default]
    GaussianMixture,
    Idx,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub source: DataSource,
    pub num_classes: usize,
    pub dim: usize,
    pub per_class: usize,
    pub spread: f64,
    pub idx_images: Option<PathBuf>,
    pub idx_labels: Option<PathBuf>,
    /// IDX samples kept (leading records); 0 keeps all.
    pub max_samples: usize,
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            source: DataSource::GaussianMixture,
            num_classes: 4,
            dim: 16,
            per_class: 250,
            spread: 1.5,
            idx_images: None,
            idx_labels: None,
            max_samples: 0,
            train_fraction: 0.7,
            seed: 0,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        match self.source {
            DataSource::GaussianMixture => {
                if self.num_classes < 2 {
                    return Err(config_err("dataset.num_classes", "must be >= 2"));
                }
                if self.dim < 2 {
                    return Err(config_err("dataset.dim", "must be >= 2"));
                }
                if self.per_class < 1 {
                    return Err(config_err("dataset.per_class", "must be >= 1"));
                }
                if !(self.spread > 0.0) || !self.spread.is_finite() {
                    return Err(config_err("dataset.spread", "must be positive"));
                }
            }
            DataSource::Idx => {
                if self.idx_images.is_none() || self.idx_labels.is_none() {
                    return Err(config_err("dataset.idx_images", "idx source needs idx_images and idx_labels"));
                }
            }
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(config_err("dataset.train_fraction", "must be in (0, 1)"));
        }
        Ok(())
    }

    /// Builds the full dataset and splits it into (train, test).
    pub fn build(&self) -> Result<(Dataset, Dataset)> {
        self.validate()?;
        let ds = match self.source {
            DataSource::GaussianMixture => {
                gen_gaussian_mixture(self.num_classes, self.dim, self.per_class, self.spread, self.seed)?
            }
            DataSource::Idx => {
                let images = self.idx_images.as_deref().expect("validated");
                let labels = self.idx_labels.as_deref().expect("validated");
                let ds = load_idx(images, labels).map_err(|e| upstream(images, e))?;
                if self.max_samples > 0 && self.max_samples < ds.len() {
                    ds.take(self.max_samples)
                } else {
                    ds
                }
            }
        };
        split(
            &ds,
            SplitSpec {
                train_fraction: self.train_fraction,
                seed: self.seed,
            },
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelConfig {
    /// Data subchannels available to feature units.
    pub subchannels: usize,
    /// Units carried per subchannel.
    pub capacity: usize,
    /// Pilot subcarriers; recorded, not simulated.
    pub pilots: usize,
    pub dispersion: Dispersion,
    /// CSI sampling for `allocate` when no CSI file is given.
    pub mean_snr_db: f64,
    pub variance_db: f64,
    pub seed: u64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig {
            subchannels: 16,
            capacity: 2,
            pilots: 16,
            dispersion: Dispersion::Variance,
            mean_snr_db: 0.0,
            variance_db: 15.0,
            seed: 0,
        }
    }
}

impl ChannelConfig {
    pub fn total_subcarriers(&self) -> usize {
        self.subchannels + self.pilots
    }

    pub fn geometry(&self) -> ChannelGeometry {
        ChannelGeometry {
            subchannels: self.subchannels,
            capacity: self.capacity,
            dispersion: self.dispersion,
        }
    }

    pub fn sample(&self) -> Result<SubchannelSet> {
        sample_subchannels_with(
            self.subchannels,
            self.capacity,
            self.mean_snr_db,
            self.variance_db,
            self.dispersion,
            self.seed,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Copied into every section by [`RunConfig::with_seed`].
    pub seed: u64,
    /// Run directory. Not echoed into sidecars, so runs in different
    /// directories stay byte-identical.
    #[serde(skip_serializing)]
    pub out_dir: PathBuf,
    pub dataset: DatasetConfig,
    pub transceiver: TrainConfig,
    pub ib: IbConfig,
    pub channel: ChannelConfig,
    pub sweep: SweepConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            out_dir: PathBuf::from("semcom-run"),
            dataset: DatasetConfig::default(),
            transceiver: TrainConfig::default(),
            ib: IbConfig::default(),
            channel: ChannelConfig::default(),
            sweep: SweepConfig::default(),
        }
        .with_seed(0)
    }
}

impl RunConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(s).map_err(|e| Error::Config(format!("config: {e}")))?;
        let seed = cfg.seed;
        Ok(cfg.with_seed(seed))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("config {}: {e}", path.display())))?;
        RunConfig::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.dataset.seed = seed;
        self.transceiver.seed = seed;
        self.ib.seed = seed;
        self.channel.seed = seed;
        self.sweep.seed = seed;
        self
    }

    pub fn with_out_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.out_dir = dir.into();
        self
    }

    /// 512 feature units on 256 data subchannels of capacity 2, β = 0.3.
    pub fn paper_scale(mut self) -> Self {
        self.transceiver.m = 512;
        self.channel.subchannels = 256;
        self.channel.capacity = 2;
        self.channel.pilots = 16;
        self.ib.beta = 0.3;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.dataset.validate()?;
        self.transceiver.validate().map_err(|e| in_section("transceiver", e))?;
        self.ib.validate().map_err(|e| in_section("ib", e))?;
        self.sweep.validate().map_err(|e| in_section("sweep", e))?;
        if self.channel.subchannels < 1 {
            return Err(config_err("channel.subchannels", "must be >= 1"));
        }
        if self.channel.capacity < 1 {
            return Err(config_err("channel.capacity", "must be >= 1"));
        }
        if !(self.channel.variance_db >= 0.0) {
            return Err(config_err("channel.variance_db", "must be >= 0"));
        }
        self.channel
            .geometry()
            .check(self.transceiver.m)
            .map_err(|e| in_section("channel", e))?;
        Ok(())
    }
}

/// Command-line flag, then `SEMCOM_SEED`, then the config file.
pub fn resolve_seed(cli: Option<u64>, env: Option<&str>, file: u64) -> Result<u64> {
    if let Some(s) = cli {
        return Ok(s);
    }
    match env {
        Some(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        None => Ok(file),
    }
}

fn config_err(field: &str, reason: &str) -> Error {
    Error::Config(format!("{field}: {reason}"))
}

fn in_section(section: &str, e: Error) -> Error {
    match e {
        Error::Param { field, reason } => Error::Config(format!("{section}.{field}: {reason}")),
        Error::Config(msg) => Error::Config(format!("{section}: {msg}")),
        other => other,
    }
}

fn upstream(path: &Path, e: Error) -> Error {
    match e {
        e @ Error::Upstream { .. } => e,
        e => Error::Upstream {
            path: path.display().to_string(),
            source: Box::new(e),
        },
    }
}

fn hex(c: u64) -> String {
    format!("{c:016x}")
}

/// Metadata written next to every stage artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub stage: String,
    pub seed: u64,
    /// File name to checksum, for each file this stage wrote.
    pub artifacts: BTreeMap<String, String>,
    /// File name to checksum, for each upstream file this stage read.
    pub inputs: BTreeMap<String, String>,
    pub model_checksum: Option<String>,
    pub mask_checksum: Option<String>,
    pub num_classes: Option<usize>,
    pub config: RunConfig,
}

impl Sidecar {
    pub fn file_name(stage: &str) -> String {
        format!("{stage}.meta.json")
    }

    pub fn load(dir: &Path, stage: &str) -> Result<Sidecar> {
        let path = dir.join(Sidecar::file_name(stage));
        let text = fs::read_to_string(&path).map_err(|e| upstream(&path, e.into()))?;
        serde_json::from_str(&text).map_err(|e| upstream(&path, Error::Corrupt(e.to_string())))
    }
}

/// What a stage wrote.
#[derive(Debug, Clone)]
pub struct StageOutput {
    pub stage: &'static str,
    pub files: Vec<PathBuf>,
    pub sidecar: PathBuf,
}

struct StageWriter<'a> {
    cfg: &'a RunConfig,
    stage: &'static str,
    files: Vec<PathBuf>,
    sidecar: Sidecar,
}

impl<'a> StageWriter<'a> {
    fn new(cfg: &'a RunConfig, stage: &'static str) -> Result<Self> {
        fs::create_dir_all(&cfg.out_dir)?;
        Ok(StageWriter {
            cfg,
            stage,
            files: Vec::new(),
            sidecar: Sidecar {
                stage: stage.to_string(),
                seed: cfg.seed,
                artifacts: BTreeMap::new(),
                inputs: BTreeMap::new(),
                model_checksum: None,
                mask_checksum: None,
                num_classes: None,
                config: cfg.clone(),
            },
        })
    }

    fn input(&mut self, input: &Verified) {
        self.sidecar.inputs.insert(input.name.clone(), hex(input.checksum));
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.cfg.out_dir.join(name);
        fs::write(&path, bytes)?;
        self.sidecar.artifacts.insert(name.to_string(), hex(checksum64(bytes)));
        self.files.push(path);
        Ok(())
    }

    fn finish(self) -> Result<StageOutput> {
        let path = self.cfg.out_dir.join(Sidecar::file_name(self.stage));
        let mut text = serde_json::to_string_pretty(&self.sidecar)?;
        text.push('\n');
        fs::write(&path, text)?;
        info!("{}: wrote {} file(s) to {}", self.stage, self.files.len(), self.cfg.out_dir.display());
        Ok(StageOutput {
            stage: self.stage,
            files: self.files,
            sidecar: path,
        })
    }
}

/// An upstream file whose bytes matched its producer's sidecar.
struct Verified {
    name: String,
    bytes: Vec<u8>,
    checksum: u64,
    sidecar: Sidecar,
}

fn verified(dir: &Path, producer: &str, name: &str) -> Result<Verified> {
    let sidecar = Sidecar::load(dir, producer)?;
    let path = dir.join(name);
    let bytes = fs::read(&path).map_err(|e| upstream(&path, e.into()))?;
    let checksum = checksum64(&bytes);
    match sidecar.artifacts.get(name) {
        Some(expected) if *expected == hex(checksum) => Ok(Verified {
            name: name.to_string(),
            bytes,
            checksum,
            sidecar,
        }),
        Some(expected) => Err(upstream(
            &path,
            Error::Corrupt(format!("checksum {} does not match recorded {expected}", hex(checksum))),
        )),
        None => Err(upstream(
            &path,
            Error::Corrupt(format!("not listed in {}", Sidecar::file_name(producer))),
        )),
    }
}

fn read_dataset(dir: &Path, name: &str) -> Result<(Verified, Dataset)> {
    let v = verified(dir, "dataset", name)?;
    let classes = v
        .sidecar
        .num_classes
        .ok_or_else(|| upstream(&dir.join(name), Error::Corrupt("sidecar lacks num_classes".into())))?;
    let stem = name.trim_end_matches(".csv");
    let ds = Dataset::read_csv(v.bytes.as_slice(), classes, stem).map_err(|e| upstream(&dir.join(name), e))?;
    Ok((v, ds))
}

fn read_model(dir: &Path) -> Result<(Verified, TscModel)> {
    let v = verified(dir, "model", MODEL_FILE)?;
    let model = TscModel::from_bytes(&v.bytes).map_err(|e| upstream(&dir.join(MODEL_FILE), e))?;
    Ok((v, model))
}

/// Reads the mask and checks it was built from the model at hand.
fn read_mask(dir: &Path, model: &Verified) -> Result<(Verified, RobustnessMask)> {
    let path = dir.join(MASK_FILE);
    let v = verified(dir, "mask", MASK_FILE)?;
    let text = std::str::from_utf8(&v.bytes).map_err(|e| upstream(&path, Error::Corrupt(e.to_string())))?;
    let mask = RobustnessMask::from_json(text).map_err(|e| upstream(&path, e))?;
    if v.sidecar.inputs.get(MODEL_FILE) != Some(&hex(model.checksum)) {
        return Err(upstream(&path, Error::Corrupt("mask was built from a different model".into())));
    }
    Ok((v, mask))
}

pub fn gen_data(cfg: &RunConfig) -> Result<StageOutput> {
    cfg.validate()?;
    let (train_ds, test_ds) = cfg.dataset.build()?;
    let mut w = StageWriter::new(cfg, "dataset")?;
    for (name, ds) in [(TRAIN_CSV, &train_ds), (TEST_CSV, &test_ds)] {
        let mut bytes = Vec::new();
        ds.write_csv(&mut bytes)?;
        w.write(name, &bytes)?;
    }
    w.sidecar.num_classes = Some(train_ds.num_classes);
    w.finish()
}

pub fn train_stage(cfg: &RunConfig) -> Result<StageOutput> {
    cfg.validate()?;
    let (input, train_ds) = read_dataset(&cfg.out_dir, TRAIN_CSV)?;
    let model = train(&train_ds, &cfg.transceiver)?;
    let bytes = model.to_bytes()?;
    let mut w = StageWriter::new(cfg, "model")?;
    w.input(&input);
    w.write(MODEL_FILE, &bytes)?;
    w.sidecar.model_checksum = Some(hex(checksum64(&bytes)));
    w.finish()
}

pub fn mask_stage(cfg: &RunConfig) -> Result<StageOutput> {
    cfg.validate()?;
    let (model_in, model) = read_model(&cfg.out_dir)?;
    let (data_in, train_ds) = read_dataset(&cfg.out_dir, TRAIN_CSV)?;
    let mask = generate_mask(&model, &train_ds, &cfg.ib)?;
    let mut text = mask.to_json()?;
    text.push('\n');
    let mut w = StageWriter::new(cfg, "mask")?;
    w.input(&model_in);
    w.input(&data_in);
    w.write(MASK_FILE, text.as_bytes())?;
    w.sidecar.model_checksum = Some(hex(model_in.checksum));
    w.sidecar.mask_checksum = Some(hex(checksum64(text.as_bytes())));
    w.finish()
}

/// Allocates the mask's units onto CSI read from `csi` (CSV with header
/// `subchannel_index,snr_db`) or, without a file, sampled from the channel
/// section. Writes the plan and the CSI it used.
pub fn allocate_stage(cfg: &RunConfig, csi: Option<&Path>, strategy: Strategy) -> Result<StageOutput> {
    cfg.validate()?;
    let dir = &cfg.out_dir;
    let mask_in = verified(dir, "mask", MASK_FILE)?;
    let mask_path = dir.join(MASK_FILE);
    let text = std::str::from_utf8(&mask_in.bytes).map_err(|e| upstream(&mask_path, Error::Corrupt(e.to_string())))?;
    let mask = RobustnessMask::from_json(text).map_err(|e| upstream(&mask_path, e))?;

    let subs = match csi {
        Some(path) => {
            let bytes = fs::read(path).map_err(|e| upstream(path, e.into()))?;
            SubchannelSet::from_csv(bytes.as_slice(), cfg.channel.capacity).map_err(|e| upstream(path, e))?
        }
        None => cfg.channel.sample()?,
    };
    let plan = plan_for(strategy, &mask, &subs, cfg.seed)?;

    let mut w = StageWriter::new(cfg, "plan")?;
    w.input(&mask_in);
    w.write(CSI_FILE, subs.to_csv().as_bytes())?;
    w.write(PLAN_FILE, plan.to_csv(&mask.r, &subs).as_bytes())?;
    w.sidecar.model_checksum = mask_in.sidecar.model_checksum.clone();
    w.sidecar.mask_checksum = Some(hex(mask_in.checksum));
    w.finish()
}

pub fn plan_for(strategy: Strategy, mask: &RobustnessMask, subs: &SubchannelSet, seed: u64) -> Result<AllocationPlan> {
    match strategy {
        Strategy::Proposed => greedy_allocate(mask, subs),
        Strategy::WorstCase => worst_case_allocate(mask, subs),
        Strategy::Random => random_allocate(mask.m(), subs, &mut Rng::new(seed, derive_stream(0xA110C, 0))),
        Strategy::BruteForce => brute_force_allocate(&separable_utility(&mask.r, subs), subs),
    }
}

pub fn sweep_stage(cfg: &RunConfig) -> Result<StageOutput> {
    cfg.validate()?;
    let (model_in, model) = read_model(&cfg.out_dir)?;
    let (mask_in, mask) = read_mask(&cfg.out_dir, &model_in)?;
    let (test_in, test_ds) = read_dataset(&cfg.out_dir, TEST_CSV)?;
    let report = run_snr_sweep(&model, &mask, cfg.channel.geometry(), &test_ds, &cfg.sweep)?;
    let mut w = StageWriter::new(cfg, "sweep")?;
    w.input(&model_in);
    w.input(&mask_in);
    w.input(&test_in);
    w.write(SWEEP_FILE, report.to_csv().as_bytes())?;
    w.sidecar.model_checksum = Some(hex(model_in.checksum));
    w.sidecar.mask_checksum = Some(hex(mask_in.checksum));
    w.finish()
}

pub fn halfsplit_stage(cfg: &RunConfig) -> Result<StageOutput> {
    cfg.validate()?;
    let (model_in, model) = read_model(&cfg.out_dir)?;
    let (mask_in, mask) = read_mask(&cfg.out_dir, &model_in)?;
    let (train_in, train_ds) = read_dataset(&cfg.out_dir, TRAIN_CSV)?;
    let (test_in, test_ds) = read_dataset(&cfg.out_dir, TEST_CSV)?;
    let report = half_split_analysis(&model, &mask, &train_ds, &test_ds, cfg.sweep.half_split_snr_db, cfg.seed)?;
    let mut json = report.to_json()?;
    json.push('\n');
    let mut w = StageWriter::new(cfg, "halfsplit")?;
    for input in [&model_in, &mask_in, &train_in, &test_in] {
        w.input(input);
    }
    w.write(HALFSPLIT_FILE, json.as_bytes())?;
    w.write(HALFSPLIT_COORDS_FILE, report.coords_csv().as_bytes())?;
    w.sidecar.model_checksum = Some(hex(model_in.checksum));
    w.sidecar.mask_checksum = Some(hex(mask_in.checksum));
    w.finish()
}

/// Every stage in order, with sampled CSI and the proposed allocation.
pub fn run_all(cfg: &RunConfig) -> Result<Vec<StageOutput>> {
    Ok(vec![
        gen_data(cfg)?,
        train_stage(cfg)?,
        mask_stage(cfg)?,
        allocate_stage(cfg, None, Strategy::Proposed)?,
        sweep_stage(cfg)?,
        halfsplit_stage(cfg)?,
    ])
}
