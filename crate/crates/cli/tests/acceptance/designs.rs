use std::time::{Duration, Instant};

use classmix_core::design::{build_design, initialize_design, optimize_design_traced, DesignPoint, DesignSpec};
use classmix_core::rng::seeded_rng;
use classmix_core::SamplerKind;
use rand::Rng;

use crate::{within, Check};

fn random_spec<R: Rng>(rng: &mut R, seed: u64) -> DesignSpec {
    let k = rng.random_range(1..=50);
    let cap_scale = rng.random_range(1..=10_000u64);
    let class_caps: Vec<u64> = (0..k).map(|_| rng.random_range(1..=cap_scale)).collect();
    let capacity: u64 = class_caps.iter().sum();
    let subset_size = rng.random_range(1..=capacity.min(100_000));
    DesignSpec {
        n_classes: k,
        subset_size,
        class_caps,
        n_rows: rng.random_range(2..=8),
        n_opt: rng.random_range(0..=50),
        candidate_batch: rng.random_range(1..=16),
        rng_seed: seed,
        sampler: SamplerKind::Auto,
    }
}

pub fn feasibility_fuzz() -> Check {
    let start = Instant::now();
    let mut rng = seeded_rng(2024);
    let mut points = 0;
    for i in 0..1000 {
        let spec = random_spec(&mut rng, i);
        let design = build_design(&spec).map_err(|e| format!("spec {i} ({spec:?}): {e}"))?;
        if design.points.len() != spec.n_rows {
            return Err(format!("spec {i}: {} rows, expected {}", design.points.len(), spec.n_rows));
        }
        for p in &design.points {
            if p.total() != spec.subset_size {
                return Err(format!("spec {i}: row sums to {}, expected {}", p.total(), spec.subset_size));
            }
            if let Some((c, (n, cap))) = p.counts.iter().zip(&spec.class_caps).enumerate().find(|(_, (n, cap))| n > cap)
            {
                return Err(format!("spec {i}: class {c} has {n} > cap {cap}"));
            }
        }
        points += design.points.len();
    }
    within(start.elapsed(), Duration::from_secs(60)).map(|t| format!("1000 specs, {points} points feasible in {t}"))
}

pub fn maximin_monotonicity() -> Check {
    let mut held = 0;
    let mut worst = f64::INFINITY;
    for seed in 0..100 {
        let spec = DesignSpec::uniform(10, 5000, 5000, 30).with_opt_iters(2000).with_seed(seed);
        let mut rng = seeded_rng(seed);
        let initial = initialize_design(&spec, &mut rng).map_err(|e| e.to_string())?;
        let (optimized, trace) = optimize_design_traced(&initial, &mut rng).map_err(|e| e.to_string())?;
        if trace.initial != initial.maximin {
            return Err(format!("seed {seed}: trace starts at {} not {}", trace.initial, initial.maximin));
        }
        worst = worst.min(optimized.maximin - initial.maximin);
        if optimized.maximin >= initial.maximin {
            held += 1;
        }
    }
    let detail = format!("{held}/100 runs non-decreasing, smallest gain {worst:.3}");
    if held == 100 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// Best achievable maximin over every 3-row subset of the 11 feasible points.
fn exhaustive_maximin() -> (f64, usize) {
    let grid: Vec<DesignPoint> = (0..=10u64).map(|a| DesignPoint::new(vec![a, 10 - a])).collect();
    let mut best = 0.0f64;
    let mut subsets = 0;
    for i in 0..grid.len() {
        for j in (i + 1)..grid.len() {
            for k in (j + 1)..grid.len() {
                subsets += 1;
                let m = grid[i].distance(&grid[j]).min(grid[i].distance(&grid[k])).min(grid[j].distance(&grid[k]));
                best = best.max(m);
            }
        }
    }
    (best, subsets)
}

pub fn small_instance_optimality() -> Check {
    let (optimum, subsets) = exhaustive_maximin();
    if subsets != 165 {
        return Err(format!("enumerated {subsets} subsets"));
    }
    let mut hits = 0;
    for seed in 0..100 {
        let spec = DesignSpec::uniform(2, 10, 10, 3).with_opt_iters(2000).with_seed(seed);
        let d = build_design(&spec).map_err(|e| e.to_string())?;
        if d.maximin > optimum + 1e-12 {
            return Err(format!("seed {seed}: maximin {} beats the exhaustive optimum {optimum}", d.maximin));
        }
        if d.maximin >= 0.95 * optimum {
            hits += 1;
        }
    }
    let detail = format!("{hits}/100 seeds within 95% of the exhaustive maximin {optimum:.4}, need 95");
    if hits >= 95 {
        Ok(detail)
    } else {
        Err(detail)
    }
}
