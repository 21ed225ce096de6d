//! Train the transceiver on the default synthetic task and report clean and
//! noisy test accuracy.
//!
//! ```bash
//! cargo run --release --example train_transceiver -- [seed]
//! ```

use semcom::pipeline::RunConfig;
use semcom::rng::Rng;
use semcom::transceiver::{train, UnitNoise};

fn main() -> semcom::Result<()> {
    let seed = std::env::args().nth(1).map_or(0, |s| s.parse().expect("seed must be an integer"));
    let cfg = RunConfig::default().with_seed(seed);
    let (train_set, test_set) = cfg.dataset.build()?;
    println!(
        "{} train / {} test samples, {} classes, dim {}",
        train_set.len(),
        test_set.len(),
        train_set.num_classes,
        train_set.dim()
    );

    let model = train(&train_set, &cfg.transceiver)?;
    println!(
        "m = {}, trained at {} dB, signal power {:.4}",
        model.m(),
        model.train_snr_db(),
        model.signal_power()
    );

    let mut rng = Rng::new(seed, 99);
    let clean = model.evaluate_accuracy(&test_set, &UnitNoise::Scalar(0.0), &mut rng)?;
    println!("clean accuracy  {clean:.3}");
    for snr in [-5.0, 0.0, 5.0, 10.0, 20.0] {
        let std = semcom::channel::snr_to_noise_std(snr, model.signal_power());
        let acc = model.evaluate_accuracy(&test_set, &UnitNoise::Scalar(std), &mut rng)?;
        println!("{snr:>5} dB AWGN  {acc:.3}");
    }
    Ok(())
}
