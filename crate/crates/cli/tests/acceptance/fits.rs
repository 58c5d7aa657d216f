use std::time::{Duration, Instant};

use classmix_core::design::{generate_design_suite, DesignSpec};
use classmix_core::fitting::{fit, fit_and_score, FitConfig, Observation};
use classmix_core::models::{reference_model, Family, FittedModel, Inner, ModelSpec, ParamVector};
use classmix_core::pipeline::preprocess_with_scaling;
use classmix_core::rng::seeded_rng;
use classmix_core::selection::{forward_select, CandidateSet};
use classmix_core::simulator::{every, run_experiments, OracleSpec};
use classmix_core::FeatureVector;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::{within, Check};

const E_MAX: u32 = 100;

fn classes(k: usize) -> Vec<String> {
    (0..k).map(|c| format!("c{c}")).collect()
}

struct Setup {
    cap: u64,
    sizes: Vec<u64>,
    rows: usize,
}

/// Simulated logs for `truth`, scaled the way the ground truth sees them.
fn simulate(setup: &Setup, truth: &FittedModel, sigma: f64, seed: u64) -> Result<Vec<Observation>, String> {
    let k = truth.spec.n_classes();
    let template = DesignSpec::uniform(k, setup.sizes[0], setup.cap, setup.rows).with_opt_iters(100).with_seed(seed);
    let designs = generate_design_suite(&setup.sizes, &template).map_err(|e| e.to_string())?;
    let oracle = OracleSpec {
        ground_truth: truth.clone(),
        noise_sigma: sigma,
        epoch_schedule: every(10, 10, E_MAX),
        e_max: E_MAX,
        rng_seed: seed,
    };
    let records = run_experiments(&designs, &oracle).map_err(|e| e.to_string())?;
    let scaling = oracle.scaling(&vec![setup.cap; k]);
    let dataset =
        preprocess_with_scaling(&records, truth.spec.class_names(), 10, scaling).map_err(|e| e.to_string())?;
    Ok(dataset.observations())
}

fn model(family: Family, inner: Inner, k: usize, params: Vec<f64>) -> FittedModel {
    let spec = ModelSpec::new(family, inner, classes(k)).unwrap();
    FittedModel::new(spec, ParamVector(params)).unwrap()
}

pub fn closed_loop_recovery() -> Check {
    let start = Instant::now();
    let setup = Setup { cap: 50, sizes: vec![30, 60, 90, 120], rows: 10 };
    let truths = [
        model(Family::Powerlaw, Inner::PerClassLinear, 3, vec![0.5, 0.4, 0.2, 0.3, 0.2, 0.25, 0.3]),
        model(Family::ArctanScaling, Inner::PerClassLinear, 3, vec![0.005, 0.0, 0.2, 0.3, 0.2, 0.25, 0.3]),
        model(Family::Logarithmic, Inner::PerClassLinear, 3, vec![0.25, 0.3, 0.55, 0.3, 0.2, 0.25, 0.3]),
        model(Family::AlgebraicRoot, Inner::PerClassLinear, 3, vec![50.0, 1.0, 0.1, 0.005, 0.004, 0.005, 0.004]),
        model(Family::ArctanRegression, Inner::PerClassLinear, 3, vec![0.4, -1.0, 0.25, 0.8, 0.5, 0.6, 1.5]),
    ];
    // arctan_scaling only fits [0, 1] accuracies in its near-linear regime,
    // where the valley is long and flat.
    let config = FitConfig { max_iterations: 10_000, ..FitConfig::default() };
    let mut worst_sse = 0.0f64;
    let mut worst_r2 = 1.0f64;
    for (i, truth) in truths.iter().enumerate() {
        let family = truth.spec.family();
        let obs = simulate(&setup, truth, 0.0, 10 + i as u64)?;
        let f = fit(&truth.spec, &obs, &config).map_err(|e| format!("{family:?}: {e}"))?;
        if f.sse >= 1e-8 {
            return Err(format!("{family:?}: noiseless sse {:e}", f.sse));
        }
        worst_sse = worst_sse.max(f.sse);

        let train = simulate(&setup, truth, 0.01, 20 + i as u64)?;
        let test = simulate(&setup, truth, 0.01, 30 + i as u64)?;
        let r = fit_and_score(&truth.spec, &train, &test, &config).map_err(|e| format!("{family:?}: {e}"))?;
        if r.test_r2 < 0.95 {
            return Err(format!("{family:?}: noisy test r2 {:.4}", r.test_r2));
        }
        worst_r2 = worst_r2.min(r.test_r2);
    }
    let t = within(start.elapsed(), Duration::from_secs(300))?;
    Ok(format!("5 families, worst noiseless sse {worst_sse:.1e}, worst noisy test r2 {worst_r2:.4}, {t}"))
}

pub fn model_richness_ordering() -> Check {
    let k = 10;
    // Five strong classes that saturate at different rates and five that
    // barely help, plus an epoch term.
    let mut params = vec![0.4, 0.7, 0.1];
    for c in 0..k {
        if c % 2 == 0 {
            params.extend([0.12 + 0.03 * c as f64, 2.0 + c as f64]);
        } else {
            params.extend([0.01, 1.0]);
        }
    }
    params.extend([0.3, 4.0]);
    let truth = model(Family::Powerlaw, Inner::PerClassArctan2, k, params);
    let setup = Setup { cap: 500, sizes: vec![500, 1000, 2000, 3000], rows: 10 };
    let (_, full) = reference_model(1, classes(k)).unwrap();
    let (_, total) = reference_model(2, classes(k)).unwrap();
    let config = FitConfig::default();
    let mut wins = 0;
    let mut margins = Vec::new();
    for seed in 0..20 {
        let train = simulate(&setup, &truth, 0.01, 100 + seed)?;
        let test = simulate(&setup, &truth, 0.01, 200 + seed)?;
        let r1 = fit_and_score(&full, &train, &test, &config).map_err(|e| format!("seed {seed}, model 1: {e}"))?;
        let r2 = fit_and_score(&total, &train, &test, &config).map_err(|e| format!("seed {seed}, model 2: {e}"))?;
        if r1.test_r2 > r2.test_r2 {
            wins += 1;
        }
        margins.push(r1.test_r2 - r2.test_r2);
    }
    let smallest = margins.iter().copied().fold(f64::INFINITY, f64::min);
    let detail =
        format!("full arctan beats total_n linear in {wins}/20 seeds, need 18 (smallest margin {smallest:.4})");
    if wins >= 18 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

const CANDIDATES: [&str; 8] = ["c0", "c1", "c2", "total_n", "epoch", "c0:c1", "c0:c2", "c1:c2"];
const TRUE_FEATURES: [&str; 2] = ["c1", "c0:c2"];

fn selection_data(seed: u64) -> Result<Vec<Observation>, String> {
    let spec = ModelSpec::custom(Family::ArctanRegression, classes(3), &TRUE_FEATURES).map_err(|e| e.to_string())?;
    let params = ParamVector(vec![0.2, -0.5, 0.3, 2.0, 1.5]);
    let noise = Normal::new(0.0, 0.005).unwrap();
    let mut rng = seeded_rng(seed);
    (0..300)
        .map(|_| {
            let x = FeatureVector::new(
                (0..3).map(|_| rng.random_range(0.0..1.0)).collect(),
                rng.random_range(0.0..1.0),
                rng.random_range(0.0..1.0),
            );
            let y = spec.evaluate(&params, &x).map_err(|e| e.to_string())? + noise.sample(&mut rng);
            Ok(Observation::new(x, y))
        })
        .collect()
}

pub fn forward_selection_recovery() -> Check {
    let candidates = CandidateSet::from_names(&classes(3), &CANDIDATES).map_err(|e| e.to_string())?;
    let config = FitConfig::default();
    let mut recovered = 0;
    for seed in 0..20 {
        let obs = selection_data(seed)?;
        let path = forward_select(&obs, &candidates, 1e-3, &config).map_err(|e| format!("seed {seed}: {e}"))?;
        let mut previous = path.base_rss;
        for (i, step) in path.steps.iter().enumerate() {
            if step.rss > previous {
                return Err(format!("seed {seed}: rss rises at step {i} ({previous} -> {})", step.rss));
            }
            previous = step.rss;
        }
        let names = path.feature_names();
        let first_two: Vec<&str> = names.iter().take(2).map(String::as_str).collect();
        if first_two.len() == 2 && TRUE_FEATURES.iter().all(|f| first_two.contains(f)) {
            recovered += 1;
        }
    }
    let detail = format!("true pair selected first in {recovered}/20 seeds, need 18; rss non-increasing in all");
    if recovered >= 18 {
        Ok(detail)
    } else {
        Err(detail)
    }
}
