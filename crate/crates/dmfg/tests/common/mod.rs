//! Brute-force oracles shared by the integration suites. These stay
//! independent of the implementation paths they cross-check: transport by
//! permutation matching, the ergodic constant by enumerating atomic
//! holonomic measures, holonomic inputs by explicit cycle construction.

// Each test crate compiles this module and uses its own subset.
#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::Rng;

use dmfg::{EffectiveLagrangian, GridMeasure, PhaseMeasure, TorusGrid, VelocityWindow};

/// Minimum-cost matching between two measures given as integer quanta
/// counts (equal totals), by exhaustive permutation of the target quanta.
/// Exact for measures whose weights are multiples of `1/K`; feasible for
/// `K <= 8`.
pub fn brute_force_d1(grid: &TorusGrid, counts_a: &[u32], counts_b: &[u32]) -> f64 {
    let expand = |counts: &[u32]| -> Vec<usize> {
        let mut out = Vec::new();
        for (i, &c) in counts.iter().enumerate() {
            for _ in 0..c {
                out.push(i);
            }
        }
        out
    };
    let sources = expand(counts_a);
    let mut targets = expand(counts_b);
    assert_eq!(sources.len(), targets.len(), "quanta totals must match");
    let k = sources.len();
    assert!(k <= 8, "permutation brute force capped at 8 quanta");
    let total: u32 = counts_a.iter().sum();

    let mut best = f64::INFINITY;
    permute(&mut targets, 0, &mut |perm| {
        let cost: f64 = sources
            .iter()
            .zip(perm)
            .map(|(&s, &t)| grid.geodesic_distance(s, t))
            .sum();
        if cost < best {
            best = cost;
        }
    });
    best / total as f64
}

fn permute(items: &mut Vec<usize>, start: usize, visit: &mut impl FnMut(&[usize])) {
    if start == items.len() {
        visit(items);
        return;
    }
    for i in start..items.len() {
        items.swap(start, i);
        permute(items, start + 1, visit);
        items.swap(start, i);
    }
}

/// Integer-quanta grid measure `counts / sum(counts)`.
pub fn measure_from_counts(grid: TorusGrid, counts: &[u32]) -> GridMeasure {
    let total: u32 = counts.iter().sum();
    let weights: Vec<f64> = counts.iter().map(|&c| c as f64 / total as f64).collect();
    GridMeasure::new(grid, weights).expect("counts define a probability measure")
}

/// Exhaustive minimization of `int L_m dmu` over all single-atom rest
/// measures and all two-atom swap cycles within the window. For the
/// built-in models these exhaust the candidate minimizers of the ergodic
/// constant.
pub fn exhaustive_lbar(
    effective: &EffectiveLagrangian,
    window: &VelocityWindow,
) -> f64 {
    let grid = *effective.grid();
    let mut best = f64::INFINITY;
    for x in 0..grid.len() {
        let zero = vec![0.0; grid.dim()];
        best = best.min(effective.eval_at(x, &zero));
    }
    for x in 0..grid.len() {
        for offsets in window.offsets(&grid) {
            if offsets.iter().all(|&k| k == 0) {
                continue;
            }
            let v = window.velocity_of(&grid, &offsets);
            let neg_v: Vec<f64> = v.iter().map(|c| -c).collect();
            let y = grid.shift(x, &offsets);
            let value = 0.5 * (effective.eval_at(x, &v) + effective.eval_at(y, &neg_v));
            best = best.min(value);
        }
    }
    best
}

/// Random exactly-holonomic measure: one to three closed cycles built from
/// offset/negated-offset pairs (each cycle returns to its start by
/// construction), mixed with random positive integer weights.
pub fn random_cycle_measure<R: Rng>(
    rng: &mut R,
    grid: TorusGrid,
    window: VelocityWindow,
) -> PhaseMeasure {
    let w = window.radius_steps as i64;
    let mut counts: BTreeMap<(usize, Vec<i64>), u64> = BTreeMap::new();
    let n_cycles = rng.gen_range(1..=3);
    for _ in 0..n_cycles {
        let weight = rng.gen_range(1..=5u64);
        let pairs = rng.gen_range(1..=3);
        let mut steps: Vec<Vec<i64>> = Vec::new();
        for _ in 0..pairs {
            let offsets: Vec<i64> = (0..grid.dim())
                .map(|_| rng.gen_range(-w..=w))
                .collect();
            let negated: Vec<i64> = offsets.iter().map(|k| -k).collect();
            steps.push(offsets);
            steps.push(negated);
        }
        // Shuffling the steps keeps the total displacement zero, so the
        // cycle still closes.
        for i in (1..steps.len()).rev() {
            let j = rng.gen_range(0..=i);
            steps.swap(i, j);
        }
        let mut x = rng.gen_range(0..grid.len());
        for offsets in steps {
            *counts.entry((x, offsets.clone())).or_insert(0) += weight;
            x = grid.shift(x, &offsets);
        }
    }
    PhaseMeasure::from_counts(grid, window, &counts).expect("cycle atoms fit the window")
}
