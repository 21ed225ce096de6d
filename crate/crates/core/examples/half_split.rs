//! Decode from the more robust and the less robust half of the feature units
//! under an ideal and a noisy channel.
//!
//! ```bash
//! cargo run --release --example half_split -- [seed]
//! ```

use semcom::eval::{half_split_analysis, ChannelCondition, Half};
use semcom::ib_mask::generate_mask;
use semcom::pipeline::RunConfig;
use semcom::transceiver::train;

fn main() -> semcom::Result<()> {
    let seed = std::env::args().nth(1).map_or(0, |s| s.parse().expect("seed must be an integer"));
    let cfg = RunConfig::default().with_seed(seed);
    let (train_set, test_set) = cfg.dataset.build()?;
    let model = train(&train_set, &cfg.transceiver)?;
    let mask = generate_mask(&model, &train_set, &cfg.ib)?;
    let report = half_split_analysis(&model, &mask, &train_set, &test_set, cfg.sweep.half_split_snr_db, seed)?;

    println!("first half  (higher r): {:?}", report.first_half_units);
    println!("second half (lower r):  {:?}", report.second_half_units);
    println!("{:>7} {:>6} {:>9} {:>11}", "half", "chan", "accuracy", "silhouette");
    for c in &report.conditions {
        println!(
            "{:>7} {:>6} {:>9.3} {:>11.3}",
            format!("{:?}", c.half).to_lowercase(),
            format!("{:?}", c.channel).to_lowercase(),
            c.accuracy,
            c.silhouette
        );
    }
    println!(
        "degradation at {} dB: first {:.3}, second {:.3}",
        report.noisy_snr_db,
        report.degradation(Half::First),
        report.degradation(Half::Second)
    );
    let noisy = |h| report.get(h, ChannelCondition::Noisy).silhouette;
    println!("noisy silhouette: first {:.3}, second {:.3}", noisy(Half::First), noisy(Half::Second));
    Ok(())
}
