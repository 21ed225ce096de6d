//! Labeled datasets: a synthetic Gaussian mixture and IDX image files.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Distance of every class mean from the origin.
pub const CLASS_SEPARATION: f64 = 3.0;

const IDX_IMAGES_MAGIC: [u8; 4] = [0, 0, 8, 3];
const IDX_LABELS_MAGIC: [u8; 4] = [0, 0, 8, 1];

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub name: String,
}

impl Dataset {
    pub fn new(inputs: Vec<Vec<f64>>, labels: Vec<usize>, num_classes: usize, name: impl Into<String>) -> Result<Self> {
        if inputs.len() != labels.len() {
            return Err(Error::Data(format!(
                "{} inputs but {} labels",
                inputs.len(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::Label {
                label: bad,
                classes: num_classes,
            });
        }
        if let Some(first) = inputs.first() {
            let d = first.len();
            if inputs.iter().any(|x| x.len() != d) {
                return Err(Error::Data("inputs have differing dimensions".into()));
            }
        }
        if inputs.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite input entry".into()));
        }
        Ok(Dataset {
            inputs,
            labels,
            num_classes,
            name: name.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs.first().map_or(0, Vec::len)
    }

    pub fn subset(&self, indices: &[usize], name: impl Into<String>) -> Dataset {
        Dataset {
            inputs: indices.iter().map(|&i| self.inputs[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
            name: name.into(),
        }
    }

    /// First `n` samples (or all, if fewer).
    pub fn take(&self, n: usize) -> Dataset {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.subset(&idx, self.name.clone())
    }

    /// CSV with header `label,x0,x1,…`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let header: Vec<String> = std::iter::once("label".to_string())
            .chain((0..self.dim()).map(|i| format!("x{i}")))
            .collect();
        writeln!(w, "{}", header.join(","))?;
        for (x, y) in self.inputs.iter().zip(&self.labels) {
            write!(w, "{y}")?;
            for v in x {
                write!(w, ",{v:?}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        fs::write(path, buf)?;
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R, num_classes: usize, name: &str) -> Result<Dataset> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Format("empty dataset CSV".into()))??;
        let cols: Vec<&str> = header.trim().split(',').collect();
        if cols.first() != Some(&"label") {
            return Err(Error::Format("dataset CSV header must start with `label`".into()));
        }
        let dim = cols.len() - 1;
        let mut inputs = Vec::new();
        let mut labels = Vec::new();
        for (n, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.trim().split(',');
            let label = fields
                .next()
                .and_then(|s| s.parse::<usize>().ok())
                .ok_or_else(|| Error::Format(format!("row {}: bad label", n + 1)))?;
            let x: Vec<f64> = fields
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Format(format!("row {}: {e}", n + 1)))?;
            if x.len() != dim {
                return Err(Error::Format(format!(
                    "row {}: expected {dim} features, got {}",
                    n + 1,
                    x.len()
                )));
            }
            inputs.push(x);
            labels.push(label);
        }
        Dataset::new(inputs, labels, num_classes, name)
    }

    pub fn load_csv(path: &Path, num_classes: usize, name: &str) -> Result<Dataset> {
        let f = fs::File::open(path)?;
        Dataset::read_csv(BufReader::new(f), num_classes, name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

/// Class `c` is drawn from `N(μ_c, spread²·I)` where the means are seeded
/// points on the sphere of radius [`CLASS_SEPARATION`].
pub fn gen_gaussian_mixture(num_classes: usize, dim: usize, per_class: usize, spread: f64, seed: u64) -> Result<Dataset> {
    if num_classes < 2 {
        return Err(Error::param("num_classes", "must be >= 2"));
    }
    if dim < 2 {
        return Err(Error::param("dim", "must be >= 2"));
    }
    if per_class < 1 {
        return Err(Error::param("per_class", "must be >= 1"));
    }
    if !(spread > 0.0) || !spread.is_finite() {
        return Err(Error::param("spread", "must be positive and finite"));
    }
    let means = class_means(num_classes, dim, seed);
    let mut rng = Rng::new(seed, 1);
    let mut inputs = Vec::with_capacity(num_classes * per_class);
    let mut labels = Vec::with_capacity(num_classes * per_class);
    for _ in 0..per_class {
        for (c, mu) in means.iter().enumerate() {
            inputs.push(mu.iter().map(|m| m + spread * rng.standard_normal()).collect());
            labels.push(c);
        }
    }
    Dataset::new(
        inputs,
        labels,
        num_classes,
        format!("gmm-c{num_classes}-d{dim}-n{per_class}-s{spread}-seed{seed}"),
    )
}

/// The class means used by [`gen_gaussian_mixture`] for a given seed.
pub fn class_means(num_classes: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = Rng::new(seed, 0);
    (0..num_classes)
        .map(|_| loop {
            let v: Vec<f64> = (0..dim).map(|_| rng.standard_normal()).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-9 {
                break v.iter().map(|x| CLASS_SEPARATION * x / norm).collect();
            }
        })
        .collect()
}

fn read_be_u32(bytes: &[u8], at: usize, what: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Length(format!("{what}: header ends at byte {}", bytes.len())))
}

/// Parses an IDX image file (`00 00 08 03`) into flattened `[0,1]` vectors.
pub fn parse_idx_images(bytes: &[u8]) -> Result<(Vec<Vec<f64>>, usize)> {
    if bytes.len() < 4 {
        return Err(Error::Length("images: missing magic".into()));
    }
    if bytes[..4] != IDX_IMAGES_MAGIC {
        return Err(Error::Format(format!("images: bad magic {:02x?}", &bytes[..4])));
    }
    let count = read_be_u32(bytes, 4, "images")? as usize;
    let rows = read_be_u32(bytes, 8, "images")? as usize;
    let cols = read_be_u32(bytes, 12, "images")? as usize;
    let pixels = rows * cols;
    let payload = &bytes[16..];
    let need = count * pixels;
    if payload.len() < need {
        return Err(Error::Length(format!(
            "images: header declares {count} items of {pixels} bytes, payload has {} bytes",
            payload.len()
        )));
    }
    let images = payload[..need]
        .chunks(pixels.max(1))
        .take(count)
        .map(|c| c.iter().map(|&p| f64::from(p) / 255.0).collect())
        .collect();
    Ok((images, pixels))
}

/// Parses an IDX label file (`00 00 08 01`).
pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    if bytes.len() < 4 {
        return Err(Error::Length("labels: missing magic".into()));
    }
    if bytes[..4] != IDX_LABELS_MAGIC {
        return Err(Error::Format(format!("labels: bad magic {:02x?}", &bytes[..4])));
    }
    let count = read_be_u32(bytes, 4, "labels")? as usize;
    let payload = &bytes[8..];
    if payload.len() < count {
        return Err(Error::Length(format!(
            "labels: header declares {count} items, payload has {}",
            payload.len()
        )));
    }
    Ok(payload[..count].iter().map(|&b| usize::from(b)).collect())
}

pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let (inputs, _) = parse_idx_images(&fs::read(images_path)?)?;
    let labels = parse_idx_labels(&fs::read(labels_path)?)?;
    if inputs.len() != labels.len() {
        return Err(Error::Pairing {
            images: inputs.len(),
            labels: labels.len(),
        });
    }
    let num_classes = labels.iter().max().map_or(1, |&m| m + 1).max(2);
    let name = images_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "idx".into());
    Dataset::new(inputs, labels, num_classes, name)
}

/// Seeded permutation split into (train, test).
pub fn split(ds: &Dataset, spec: SplitSpec) -> Result<(Dataset, Dataset)> {
    if ds.is_empty() {
        return Err(Error::Data("cannot split an empty dataset".into()));
    }
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(Error::param("train_fraction", "must be in (0, 1)"));
    }
    let mut order: Vec<usize> = (0..ds.len()).collect();
    Rng::new(spec.seed, 0x5911).shuffle(&mut order);
    let n_train = (ds.len() as f64 * spec.train_fraction).round() as usize;
    let (train_idx, test_idx) = order.split_at(n_train);
    Ok((
        ds.subset(train_idx, format!("{}-train", ds.name)),
        ds.subset(test_idx, format!("{}-test", ds.name)),
    ))
}
