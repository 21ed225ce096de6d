//! Feature-unit to subchannel assignment.
//!
//! The proposed allocator walks units from least to most robust and hands
//! each one the best subchannel that still has room. Sorting costs
//! `O(m log m + s log s)`; the pairing itself is `m` constant-time steps.

use std::cmp::Ordering;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::channel::SubchannelSet;
use crate::error::{Error, Result};
use crate::ib_mask::RobustnessMask;
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Proposed,
    Random,
    WorstCase,
    BruteForce,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Proposed => "proposed",
            Strategy::Random => "random",
            Strategy::WorstCase => "worst_case",
            Strategy::BruteForce => "brute_force",
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AllocationPlan {
    /// `assign[k]` is the subchannel carrying unit `k`.
    pub assign: Vec<usize>,
    pub strategy: Strategy,
}

impl AllocationPlan {
    pub fn m(&self) -> usize {
        self.assign.len()
    }

    pub fn check_feasible(&self, subs: &SubchannelSet) -> Result<()> {
        let mut load = vec![0usize; subs.len()];
        for (k, &j) in self.assign.iter().enumerate() {
            if j >= subs.len() {
                return Err(Error::Allocation(format!(
                    "unit {k} assigned to subchannel {j}, only {} exist",
                    subs.len()
                )));
            }
            load[j] += 1;
            if load[j] > subs.capacity {
                return Err(Error::Allocation(format!(
                    "subchannel {j} over capacity {}",
                    subs.capacity
                )));
            }
        }
        Ok(())
    }

    /// Units carried by each subchannel.
    pub fn loads(&self, s: usize) -> Vec<usize> {
        let mut load = vec![0; s];
        for &j in &self.assign {
            load[j] += 1;
        }
        load
    }

    /// CSV with header `unit_index,subchannel_index,r,snr_db`.
    pub fn to_csv(&self, r: &[f64], subs: &SubchannelSet) -> String {
        let mut out = String::from("unit_index,subchannel_index,r,snr_db\n");
        for (k, &j) in self.assign.iter().enumerate() {
            writeln!(out, "{k},{j},{:?},{:?}", r[k], subs.snr_db[j]).unwrap();
        }
        out
    }
}

fn check_capacity(m: usize, subs: &SubchannelSet) -> Result<()> {
    if subs.is_empty() || subs.capacity == 0 || subs.total_capacity() < m {
        return Err(Error::Capacity {
            units: m,
            slots: subs.total_capacity(),
        });
    }
    Ok(())
}

fn ascending(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    // stable: equal values keep index order
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    idx
}

fn descending(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| match values[b].total_cmp(&values[a]) {
        Ordering::Equal => a.cmp(&b),
        o => o,
    });
    idx
}

/// Fills subchannels in `sub_order`, `capacity` units each, with units taken
/// in `unit_order`. Returns the assignment and the number of steps taken.
fn pair_in_order(unit_order: &[usize], sub_order: &[usize], capacity: usize) -> (Vec<usize>, usize) {
    let mut assign = vec![usize::MAX; unit_order.len()];
    let mut slot = 0;
    let mut used = 0;
    let mut steps = 0;
    for &k in unit_order {
        assign[k] = sub_order[slot];
        steps += 1;
        used += 1;
        if used == capacity {
            slot += 1;
            used = 0;
        }
    }
    (assign, steps)
}

/// Greedy pairing on raw scores: smallest `r` first, best SNR first.
pub fn greedy_pairing(r: &[f64], subs: &SubchannelSet) -> Result<AllocationPlan> {
    greedy_pairing_counted(r, subs).map(|(p, _)| p)
}

/// [`greedy_pairing`] plus the number of unit-assignment steps performed.
pub fn greedy_pairing_counted(r: &[f64], subs: &SubchannelSet) -> Result<(AllocationPlan, usize)> {
    check_capacity(r.len(), subs)?;
    let (assign, steps) = pair_in_order(&ascending(r), &descending(&subs.snr_db), subs.capacity);
    let plan = AllocationPlan {
        assign,
        strategy: Strategy::Proposed,
    };
    plan.check_feasible(subs)?;
    Ok((plan, steps))
}

pub fn greedy_allocate(mask: &RobustnessMask, subs: &SubchannelSet) -> Result<AllocationPlan> {
    greedy_pairing(&mask.r, subs)
}

/// Least robust units on the worst subchannels.
pub fn worst_case_pairing(r: &[f64], subs: &SubchannelSet) -> Result<AllocationPlan> {
    check_capacity(r.len(), subs)?;
    let (assign, _) = pair_in_order(&ascending(r), &ascending(&subs.snr_db), subs.capacity);
    let plan = AllocationPlan {
        assign,
        strategy: Strategy::WorstCase,
    };
    plan.check_feasible(subs)?;
    Ok(plan)
}

pub fn worst_case_allocate(mask: &RobustnessMask, subs: &SubchannelSet) -> Result<AllocationPlan> {
    worst_case_pairing(&mask.r, subs)
}

/// Shuffles the `s × capacity` slots and gives unit `k` the `k`-th slot.
pub fn random_allocate(m: usize, subs: &SubchannelSet, rng: &mut Rng) -> Result<AllocationPlan> {
    check_capacity(m, subs)?;
    let mut slots: Vec<usize> = (0..subs.len())
        .flat_map(|j| std::iter::repeat(j).take(subs.capacity))
        .collect();
    rng.shuffle(&mut slots);
    slots.truncate(m);
    let plan = AllocationPlan {
        assign: slots,
        strategy: Strategy::Random,
    };
    plan.check_feasible(subs)?;
    Ok(plan)
}

pub const BRUTE_FORCE_MAX_UNITS: usize = 10;
pub const BRUTE_FORCE_MAX_SUBCHANNELS: usize = 5;

/// Exhaustive search for the feasible plan maximizing
/// `Σ_k score[k][assign[k]]`. Ties go to the lexicographically smallest plan.
pub fn brute_force_allocate(score: &[Vec<f64>], subs: &SubchannelSet) -> Result<AllocationPlan> {
    let m = score.len();
    let s = subs.len();
    if m > BRUTE_FORCE_MAX_UNITS || s > BRUTE_FORCE_MAX_SUBCHANNELS {
        return Err(Error::Size(format!(
            "m = {m}, s = {s} (limits {BRUTE_FORCE_MAX_UNITS}, {BRUTE_FORCE_MAX_SUBCHANNELS})"
        )));
    }
    if score.iter().any(|row| row.len() != s) {
        return Err(Error::Shape(format!("score rows must have {s} entries")));
    }
    check_capacity(m, subs)?;

    struct Search<'a> {
        score: &'a [Vec<f64>],
        capacity: usize,
        load: Vec<usize>,
        current: Vec<usize>,
        best: Option<(f64, Vec<usize>)>,
    }

    impl Search<'_> {
        fn go(&mut self, k: usize, acc: f64) {
            if k == self.score.len() {
                // lexicographic enumeration: only a strictly better total replaces
                if self.best.as_ref().is_none_or(|(b, _)| acc > *b) {
                    self.best = Some((acc, self.current.clone()));
                }
                return;
            }
            for j in 0..self.load.len() {
                if self.load[j] == self.capacity {
                    continue;
                }
                self.load[j] += 1;
                self.current.push(j);
                self.go(k + 1, acc + self.score[k][j]);
                self.current.pop();
                self.load[j] -= 1;
            }
        }
    }

    let mut search = Search {
        score,
        capacity: subs.capacity,
        load: vec![0; s],
        current: Vec::with_capacity(m),
        best: None,
    };
    search.go(0, 0.0);
    let (_, assign) = search.best.expect("capacity check guarantees a feasible plan");
    Ok(AllocationPlan {
        assign,
        strategy: Strategy::BruteForce,
    })
}

/// `score[k][j] = (1 − r_k) · 10^(snr_j / 10)`, the separable utility the
/// greedy pairing maximizes.
pub fn separable_utility(r: &[f64], subs: &SubchannelSet) -> Vec<Vec<f64>> {
    r.iter()
        .map(|rk| {
            subs.snr_db
                .iter()
                .map(|s| (1.0 - rk) * 10f64.powf(s / 10.0))
                .collect()
        })
        .collect()
}
