//! Shared fixtures for the benchmarks.

use classmix_core::design::DesignSpec;
use classmix_core::fitting::Observation;
use classmix_core::models::{Family, FittedModel, Inner, ModelSpec, ParamVector};
use classmix_core::rng::seeded_rng;
use classmix_core::FeatureVector;
use rand::Rng;

pub fn class_names(k: usize) -> Vec<String> {
    (0..k).map(|c| format!("c{c}")).collect()
}

/// Ten balanced classes, 5000 images per subset, 30 rows.
pub fn cifar_like_design(n_opt: usize) -> DesignSpec {
    DesignSpec::uniform(10, 5000, 5000, 30).with_opt_iters(n_opt).with_seed(1)
}

/// 47 classes capped at 2400, where simplex rejection is hopeless.
pub fn emnist_like_design(n_opt: usize) -> DesignSpec {
    DesignSpec::uniform(47, 50_000, 2400, 30).with_opt_iters(n_opt).with_seed(1)
}

/// Powerlaw over per-class arctan terms with uneven class weights.
pub fn arctan_truth(k: usize) -> FittedModel {
    let spec = ModelSpec::new(Family::Powerlaw, Inner::PerClassArctan2, class_names(k)).unwrap();
    let mut params = vec![0.4, 0.7, 0.1];
    for c in 0..k {
        params.extend([0.05 + 0.02 * c as f64, 2.0 + c as f64]);
    }
    params.extend([0.3, 4.0]);
    FittedModel::new(spec, ParamVector(params)).unwrap()
}

/// Noisy observations of `truth` at uniform random scaled inputs.
pub fn observations(truth: &FittedModel, n: usize, seed: u64) -> Vec<Observation> {
    let mut rng = seeded_rng(seed);
    let k = truth.spec.n_classes();
    (0..n)
        .map(|_| {
            let counts: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..1.0)).collect();
            let total = counts.iter().sum::<f64>() / k as f64;
            let x = FeatureVector::new(counts, total, rng.random_range(0.1..1.0));
            let y = truth.predict(&x).unwrap() + rng.random_range(-0.01..0.01);
            Observation::new(x, y)
        })
        .collect()
}
