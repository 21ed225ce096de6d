//! Accuracy against mean subchannel SNR for the proposed, random and
//! worst-case allocations, under high and low SNR variance.
//!
//! ```bash
//! cargo run --release --example snr_sweep -- [seed]
//! ```

use semcom::eval::run_snr_sweep;
use semcom::ib_mask::generate_mask;
use semcom::pipeline::RunConfig;
use semcom::transceiver::train;

fn main() -> semcom::Result<()> {
    let seed = std::env::args().nth(1).map_or(0, |s| s.parse().expect("seed must be an integer"));
    let cfg = RunConfig::default().with_seed(seed);
    let (train_set, test_set) = cfg.dataset.build()?;
    let model = train(&train_set, &cfg.transceiver)?;
    let mask = generate_mask(&model, &train_set, &cfg.ib)?;
    let report = run_snr_sweep(&model, &mask, cfg.channel.geometry(), &test_set, &cfg.sweep)?;

    for &var in &cfg.sweep.variance_list_db {
        println!("variance {var} dB^2");
        print!("{:>8}", "snr");
        for s in &cfg.sweep.strategies {
            print!("{:>12}", s.as_str());
        }
        println!();
        for &snr in &cfg.sweep.snr_points_db {
            print!("{snr:>8}");
            for &s in &cfg.sweep.strategies {
                let row = report.row(snr, var, s).expect("every point is swept");
                print!("{:>12.3}", row.mean_accuracy);
            }
            println!();
        }
    }
    Ok(())
}
