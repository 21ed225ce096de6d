//! A toy transceiver where only unit 0 carries the label: the mask should
//! give that unit the smallest score.
//!
//! ```bash
//! cargo run --release --example planted_probe -- [m] [runs]
//! ```

use semcom::ib_mask::{generate_mask, IbConfig};
use semcom::planted::{planted_task, LABEL_UNIT};

fn main() -> semcom::Result<()> {
    let mut args = std::env::args().skip(1);
    let m: usize = args.next().map_or(8, |s| s.parse().expect("m must be an integer"));
    let runs: u64 = args.next().map_or(20, |s| s.parse().expect("runs must be an integer"));
    let mut hits = 0;
    for seed in 0..runs {
        let task = planted_task(m, 64, seed);
        let cfg = IbConfig {
            seed,
            ..IbConfig::default()
        };
        let mask = generate_mask(&task.model, &task.dataset, &cfg)?;
        let smallest = (0..m)
            .min_by(|&a, &b| mask.r[a].total_cmp(&mask.r[b]))
            .expect("m >= 2");
        if smallest == LABEL_UNIT {
            hits += 1;
        }
        if seed < 3 {
            println!("seed {seed}: r = {:?}", mask.r.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>());
        }
    }
    println!("label unit ranked least robust in {hits} of {runs} runs");
    Ok(())
}
