//! Forward stepwise feature selection for `y = a + c·atan(Σ θ_j x_j + b)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{validate_class_names, Feature, MainFeature};
use crate::fitting::{fit_with_start, Fit, FitConfig, Observation};
use crate::models::{Family, FittedModel, ModelSpec, ParamVector, N_OUTER};

/// Upper bound on accepted features.
pub const MAX_FEATURES: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    class_names: Vec<String>,
    features: Vec<Feature>,
}

/// Every class count, total_n and epoch, then all pairwise products of
/// those in index order.
pub fn build_candidates(class_names: &[String]) -> Result<CandidateSet> {
    validate_class_names(class_names)?;
    let mains: Vec<MainFeature> =
        (0..class_names.len()).map(MainFeature::Class).chain([MainFeature::TotalN, MainFeature::Epoch]).collect();
    let mut features: Vec<Feature> = mains.iter().map(|&m| Feature::Main(m)).collect();
    for (i, &a) in mains.iter().enumerate() {
        for &b in &mains[i + 1..] {
            features.push(Feature::Interaction(a, b));
        }
    }
    Ok(CandidateSet { class_names: class_names.to_vec(), features })
}

impl CandidateSet {
    /// Candidates given by name, e.g. `["c0", "c0:c1", "total_n"]`.
    pub fn from_names<S: AsRef<str>>(class_names: &[String], names: &[S]) -> Result<Self> {
        validate_class_names(class_names)?;
        let features = names.iter().map(|n| Feature::parse(n.as_ref(), class_names)).collect::<Result<Vec<_>>>()?;
        let mut seen = std::collections::HashSet::new();
        if let Some(f) = features.iter().find(|f| !seen.insert(**f)) {
            return Err(Error::config(format!("duplicate candidate {}", f.name(class_names))));
        }
        Ok(CandidateSet { class_names: class_names.to_vec(), features })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn features(&self) -> &[Feature] {
        &self.features
    }

    pub fn names(&self) -> Vec<String> {
        self.features.iter().map(|f| f.name(&self.class_names)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathStep {
    pub feature: String,
    /// RSS of the refit after adding this feature.
    pub rss: f64,
    /// All parameters after this step: a, b, c, then θ per accepted feature.
    pub params: ParamVector,
    pub iterations_used: usize,
    pub converged: bool,
}

/// One row of the parameter table: outer parameters carry no RSS.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRow {
    pub parameter: String,
    pub value: f64,
    pub rss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturePath {
    pub class_names: Vec<String>,
    pub stop_threshold: f64,
    /// RSS of the intercept-only fit (a, b, c).
    pub base_rss: f64,
    pub base_params: ParamVector,
    pub steps: Vec<PathStep>,
    pub diagnostics: Vec<String>,
}

impl FeaturePath {
    pub fn feature_names(&self) -> Vec<String> {
        self.steps.iter().map(|s| s.feature.clone()).collect()
    }

    pub fn final_params(&self) -> &ParamVector {
        self.steps.last().map_or(&self.base_params, |s| &s.params)
    }

    pub fn final_rss(&self) -> f64 {
        self.steps.last().map_or(self.base_rss, |s| s.rss)
    }

    pub fn final_model(&self) -> Result<FittedModel> {
        let spec = ModelSpec::custom(Family::ArctanRegression, self.class_names.clone(), &self.feature_names())?;
        FittedModel::new(spec, self.final_params().clone())
    }

    /// a, b, c and each feature's final coefficient, with the RSS recorded
    /// when the feature entered.
    pub fn table(&self) -> Vec<PathRow> {
        let p = self.final_params();
        let mut rows: Vec<PathRow> = ["a", "b", "c"]
            .iter()
            .enumerate()
            .map(|(i, name)| PathRow { parameter: name.to_string(), value: p.0[i], rss: None })
            .collect();
        rows.extend(self.steps.iter().enumerate().map(|(j, s)| PathRow {
            parameter: s.feature.clone(),
            value: p.0[N_OUTER + j],
            rss: Some(s.rss),
        }));
        rows
    }
}

pub fn forward_select(
    obs: &[Observation],
    candidates: &CandidateSet,
    stop_threshold: f64,
    config: &FitConfig,
) -> Result<FeaturePath> {
    forward_select_limited(obs, candidates, stop_threshold, config, MAX_FEATURES)
}

/// Greedy forward selection. Each step refits the model once per remaining
/// candidate, warm-started from the incumbent with the new coefficient at 0,
/// and admits the best candidate if it lowers the RSS by at least
/// `stop_threshold`.
pub fn forward_select_limited(
    obs: &[Observation],
    candidates: &CandidateSet,
    stop_threshold: f64,
    config: &FitConfig,
    max_features: usize,
) -> Result<FeaturePath> {
    if !(stop_threshold > 0.0) {
        return Err(Error::config(format!("stop threshold {stop_threshold} must be positive")));
    }
    let class_names = candidates.class_names().to_vec();
    if let Some(o) = obs.iter().find(|o| o.x.n_classes() != class_names.len()) {
        return Err(Error::contract(format!(
            "candidates cover {} classes, observation has {}",
            class_names.len(),
            o.x.n_classes()
        )));
    }
    let spec_for =
        |features: Vec<Feature>| ModelSpec::with_features(Family::ArctanRegression, class_names.clone(), features);

    let base = fit_with_start(&spec_for(Vec::new()), obs, config, None)?;
    let mut path = FeaturePath {
        class_names: class_names.clone(),
        stop_threshold,
        base_rss: base.sse,
        base_params: base.params,
        steps: Vec::new(),
        diagnostics: Vec::new(),
    };
    let mut chosen: Vec<Feature> = Vec::new();
    let mut remaining: Vec<usize> = (0..candidates.len()).collect();

    while chosen.len() < max_features && !remaining.is_empty() {
        let incumbent = path.final_params().clone();
        let rss = path.final_rss();
        let trials: Vec<(usize, Result<Fit>)> = remaining
            .par_iter()
            .map(|&c| {
                let mut features = chosen.clone();
                features.push(candidates.features[c]);
                let mut start = incumbent.0.clone();
                start.push(0.0);
                let fit = fit_with_start(&spec_for(features), obs, config, Some(&start));
                (c, fit)
            })
            .collect();

        let mut best: Option<(usize, Fit)> = None;
        for (c, trial) in trials {
            match trial {
                Ok(fit) => {
                    if best.as_ref().is_none_or(|b| fit.sse < b.1.sse) {
                        best = Some((c, fit));
                    }
                }
                Err(e) => {
                    let msg = format!(
                        "step {}: candidate {} excluded: {e}",
                        chosen.len() + 1,
                        candidates.features[c].name(&class_names)
                    );
                    log::warn!("{msg}");
                    path.diagnostics.push(msg);
                }
            }
        }
        let Some((c, fit)) = best else { break };
        let reduction = rss - fit.sse;
        if !(reduction >= stop_threshold) {
            log::info!("stopping: best reduction {reduction:.6} below {stop_threshold}");
            break;
        }
        let feature = candidates.features[c];
        log::info!("step {}: {} rss {:.6}", chosen.len() + 1, feature.name(&class_names), fit.sse);
        chosen.push(feature);
        remaining.retain(|&r| r != c);
        path.steps.push(PathStep {
            feature: feature.name(&class_names),
            rss: fit.sse,
            params: fit.params,
            iterations_used: fit.iterations_used,
            converged: fit.converged,
        });
    }
    Ok(path)
}
