//! Score every encoded feature unit for channel robustness and list them
//! from most to least robust.
//!
//! ```bash
//! cargo run --release --example robustness_mask -- [seed]
//! ```

use semcom::ib_mask::{generate_mask, rank_units};
use semcom::pipeline::RunConfig;
use semcom::transceiver::train;

fn main() -> semcom::Result<()> {
    let seed = std::env::args().nth(1).map_or(0, |s| s.parse().expect("seed must be an integer"));
    let cfg = RunConfig::default().with_seed(seed);
    let (train_set, _) = cfg.dataset.build()?;
    let model = train(&train_set, &cfg.transceiver)?;
    let mask = generate_mask(&model, &train_set, &cfg.ib)?;

    println!(
        "beta {}  kl_sign {:?}  samples {}  R = {:.4}",
        cfg.ib.beta, cfg.ib.kl_sign, mask.num_samples, mask.delta_profile.r_threshold
    );
    println!("{:>4} {:>9} {:>8} {:>10}  robust", "unit", "r", "delta", "mean s^2");
    for k in rank_units(&mask) {
        println!(
            "{k:>4} {:>9.5} {:>8.4} {:>10.4}  {}",
            mask.r[k],
            mask.delta_profile.delta[k],
            mask.sigma_mean_sq[k],
            if mask.robust_flags[k] { "yes" } else { "" }
        );
    }
    let robust = mask.robust_flags.iter().filter(|&&f| f).count();
    println!("{robust} of {} units exceed R", mask.m());
    Ok(())
}
