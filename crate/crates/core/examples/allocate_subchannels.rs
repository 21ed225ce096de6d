//! Allocate a mask onto sampled CSI with each strategy and compare against
//! the exhaustive optimum on a small instance.
//!
//! ```bash
//! cargo run --release --example allocate_subchannels
//! ```

use semcom::allocation::{
    brute_force_allocate, greedy_allocate, random_allocate, separable_utility, worst_case_allocate, AllocationPlan,
};
use semcom::channel::{sample_subchannels, SubchannelSet};
use semcom::ib_mask::compute_mask;
use semcom::ib_mask::{DeltaProfile, SigmaResult};
use semcom::rng::Rng;

fn utility(plan: &AllocationPlan, r: &[f64], subs: &SubchannelSet) -> f64 {
    let score = separable_utility(r, subs);
    plan.assign.iter().enumerate().map(|(k, &j)| score[k][j]).sum()
}

fn main() -> semcom::Result<()> {
    // A mask from hand-picked noise levels: units 0 and 3 tolerate little noise.
    let sigma = vec![0.1, 0.9, 0.6, 0.2, 1.4, 0.5];
    let results = vec![SigmaResult {
        sigma,
        loss_trace: vec![],
        sample_index: Some(0),
    }];
    let mask = compute_mask(&results, &DeltaProfile::new(vec![1.0; 6])?)?;
    let subs = sample_subchannels(3, 2, 5.0, 15.0, 7)?;
    println!("r   = {:?}", mask.r.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>());
    println!("snr = {:?}", subs.snr_db.iter().map(|v| format!("{v:.2}")).collect::<Vec<_>>());

    let plans = [
        ("proposed", greedy_allocate(&mask, &subs)?),
        ("random", random_allocate(mask.m(), &subs, &mut Rng::new(1, 0))?),
        ("worst_case", worst_case_allocate(&mask, &subs)?),
        ("brute_force", brute_force_allocate(&separable_utility(&mask.r, &subs), &subs)?),
    ];
    for (name, plan) in &plans {
        println!("{name:>12}: {:?}  utility {:.4}", plan.assign, utility(plan, &mask.r, &subs));
    }
    println!("\n{}", plans[0].1.to_csv(&mask.r, &subs));
    Ok(())
}
