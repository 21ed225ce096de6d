//! Read an IDX image/label pair (the MNIST container format) and train on it.
//! Without arguments a small synthetic pair is written to a temporary
//! directory first.
//!
//! ```bash
//! cargo run --release --example idx_dataset -- [images.idx labels.idx]
//! ```

use std::fs;
use std::path::PathBuf;

use semcom::datasets::{load_idx, split, SplitSpec};
use semcom::rng::Rng;
use semcom::transceiver::{train, TrainConfig, UnitNoise};

/// 8x8 images: class c lights up column pair c on a noisy background.
fn write_demo(dir: &std::path::Path) -> std::io::Result<(PathBuf, PathBuf)> {
    let (n, side) = (400u32, 8u32);
    let mut rng = Rng::new(5, 0);
    let mut images = vec![0, 0, 0x08, 3];
    let mut labels = vec![0, 0, 0x08, 1];
    for b in [n, side, side] {
        images.extend(b.to_be_bytes());
    }
    labels.extend(n.to_be_bytes());
    for i in 0..n {
        let c = i % 4;
        labels.push(c as u8);
        for _r in 0..side {
            for col in 0..side {
                let base = if col / 2 == c { 200.0 } else { 30.0 };
                images.push((base + 25.0 * rng.standard_normal()).clamp(0.0, 255.0) as u8);
            }
        }
    }
    let ip = dir.join("demo-images.idx3-ubyte");
    let lp = dir.join("demo-labels.idx1-ubyte");
    fs::write(&ip, images)?;
    fs::write(&lp, labels)?;
    Ok((ip, lp))
}

fn main() -> semcom::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let tmp = std::env::temp_dir().join("semcom-idx-demo");
    let (images, labels) = if args.len() == 2 {
        (PathBuf::from(&args[0]), PathBuf::from(&args[1]))
    } else {
        fs::create_dir_all(&tmp)?;
        write_demo(&tmp)?
    };
    let ds = load_idx(&images, &labels)?;
    println!("{}: {} images of dim {}, {} classes", ds.name, ds.len(), ds.dim(), ds.num_classes);
    let (train_set, test_set) = split(&ds, SplitSpec { train_fraction: 0.8, seed: 0 })?;
    let cfg = TrainConfig {
        m: 16,
        epochs: 10,
        ..TrainConfig::default()
    };
    let model = train(&train_set, &cfg)?;
    let acc = model.evaluate_accuracy(&test_set, &UnitNoise::Scalar(0.0), &mut Rng::new(0, 1))?;
    println!("clean test accuracy {acc:.3}");
    Ok(())
}
