//! Nonlinear least squares for the model zoo.
//!
//! Damped Gauss-Newton (Levenberg-Marquardt) on the models' analytic
//! gradients, run from several starting points. A trial step that leaves a
//! model's domain counts as infinite loss and is rejected like any other bad
//! step.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::models::{ModelSpec, ParamVector, N_OUTER};
use crate::rng::derived_rng;

const MAX_DAMPING: f64 = 1e16;
const MIN_DAMPING: f64 = 1e-15;

/// A scaled input with its measured accuracy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub x: FeatureVector,
    pub y: f64,
}

impl Observation {
    pub fn new(x: FeatureVector, y: f64) -> Self {
        Observation { x, y }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub max_iterations: usize,
    /// Relative SSE improvement below which an accepted step ends the run.
    pub tolerance: f64,
    pub damping_init: f64,
    pub n_restarts: usize,
    pub rng_seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig { max_iterations: 500, tolerance: 1e-10, damping_init: 1e-3, n_restarts: 4, rng_seed: 0 }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::config("max_iterations must be at least 1"));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::config("tolerance must be positive"));
        }
        if !(self.damping_init > 0.0) {
            return Err(Error::config("damping_init must be positive"));
        }
        Ok(())
    }
}

/// Mean squared error and coefficient of determination.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub mse: f64,
    pub r2: f64,
    /// The response had zero variance; `r2` is reported as 0.
    pub degenerate: bool,
}

/// One Levenberg-Marquardt run.
#[derive(Debug, Clone, PartialEq)]
pub struct LmRun {
    pub params: Vec<f64>,
    pub sse: f64,
    pub iterations: usize,
    pub converged: bool,
    /// SSE at the start and after every accepted step.
    pub sse_history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartSummary {
    pub restart: usize,
    /// `None` when the starting point was outside the model's domain.
    pub sse: Option<f64>,
    pub iterations: usize,
}

/// Best of all restarts on one training set.
#[derive(Debug, Clone, PartialEq)]
pub struct Fit {
    pub params: ParamVector,
    pub sse: f64,
    pub score: Score,
    pub iterations_used: usize,
    pub converged: bool,
    pub best_restart: usize,
    pub restarts: Vec<RestartSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: ParamVector,
    pub train_loss: f64,
    pub test_loss: f64,
    pub train_r2: f64,
    pub test_r2: f64,
    pub iterations_used: usize,
    pub converged: bool,
}

pub fn score(spec: &ModelSpec, params: &ParamVector, obs: &[Observation]) -> Result<Score> {
    if obs.is_empty() {
        return Err(Error::InsufficientRecords { needed: 1, got: 0 });
    }
    let predictions = obs.iter().map(|o| spec.evaluate(params, &o.x)).collect::<Result<Vec<_>>>()?;
    let ys: Vec<f64> = obs.iter().map(|o| o.y).collect();
    Ok(score_predictions(&ys, &predictions))
}

pub fn score_predictions(ys: &[f64], predictions: &[f64]) -> Score {
    let n = ys.len() as f64;
    let mean = ys.iter().sum::<f64>() / n;
    let sse: f64 = ys.iter().zip(predictions).map(|(y, p)| (y - p).powi(2)).sum();
    let sst: f64 = ys.iter().map(|y| (y - mean).powi(2)).sum();
    let degenerate = sst == 0.0;
    Score { mse: sse / n, r2: if degenerate { 0.0 } else { 1.0 - sse / sst }, degenerate }
}

/// Sum of squared residuals, or `None` if any observation is out of domain.
pub(crate) fn sse(spec: &ModelSpec, params: &[f64], obs: &[Observation]) -> Option<f64> {
    let mut total = 0.0;
    for o in obs {
        let v = spec.value_unchecked(params, &o.x).ok()?;
        total += (o.y - v).powi(2);
    }
    total.is_finite().then_some(total)
}

/// Levenberg-Marquardt from `init`.
pub fn levenberg_marquardt(spec: &ModelSpec, obs: &[Observation], init: &[f64], config: &FitConfig) -> Result<LmRun> {
    let n = spec.n_params();
    if init.len() != n {
        return Err(Error::contract(format!("expected {n} initial parameters, got {}", init.len())));
    }
    if let Some(o) = obs.iter().find(|o| o.x.n_classes() != spec.n_classes()) {
        return Err(Error::contract(format!(
            "model expects {} classes, observation has {}",
            spec.n_classes(),
            o.x.n_classes()
        )));
    }
    let mut params = init.to_vec();
    let mut current = sse(spec, &params, obs)
        .ok_or(Error::Domain { what: "initial parameters are outside the model domain", value: f64::NAN })?;
    let mut history = vec![current];
    let mut damping = config.damping_init;
    let mut iterations = 0;
    let mut converged = false;
    let mut grad = vec![0.0; n];

    'outer: while iterations < config.max_iterations {
        if current == 0.0 {
            converged = true;
            break;
        }
        // Normal equations accumulated row by row: A = J'J, g = J'r.
        let mut jtj = DMatrix::<f64>::zeros(n, n);
        let mut jtr = DVector::<f64>::zeros(n);
        for o in obs {
            let v = match spec.value_and_gradient(&params, &o.x, &mut grad) {
                Ok(v) => v,
                // The accepted point sits on a domain edge where the
                // gradient is undefined; nothing further can be done.
                Err(_) => break 'outer,
            };
            let r = o.y - v;
            for i in 0..n {
                if grad[i] == 0.0 {
                    continue;
                }
                jtr[i] += grad[i] * r;
                for j in i..n {
                    jtj[(i, j)] += grad[i] * grad[j];
                }
            }
        }
        for i in 0..n {
            for j in 0..i {
                jtj[(i, j)] = jtj[(j, i)];
            }
        }
        if jtr.amax() <= f64::EPSILON * current.sqrt() {
            converged = true;
            break;
        }
        let max_diag = (0..n).map(|i| jtj[(i, i)]).fold(0.0, f64::max);
        let floor = (max_diag * 1e-12).max(f64::MIN_POSITIVE);

        loop {
            if iterations >= config.max_iterations {
                break 'outer;
            }
            iterations += 1;
            let mut system = jtj.clone();
            for i in 0..n {
                system[(i, i)] += damping * jtj[(i, i)].max(floor);
            }
            let step = match system.cholesky() {
                Some(ch) => ch.solve(&jtr),
                None => {
                    damping *= 10.0;
                    if damping > MAX_DAMPING {
                        converged = true;
                        break 'outer;
                    }
                    continue;
                }
            };
            let trial: Vec<f64> = params.iter().zip(step.iter()).map(|(p, d)| p + d).collect();
            match sse(spec, &trial, obs) {
                Some(s) if s < current => {
                    let improvement = (current - s) / current;
                    params = trial;
                    current = s;
                    history.push(s);
                    damping = (damping / 10.0).max(MIN_DAMPING);
                    if improvement < config.tolerance {
                        converged = true;
                        break 'outer;
                    }
                    break;
                }
                _ => {
                    damping *= 10.0;
                    if damping > MAX_DAMPING {
                        // No descent direction left at any damping.
                        converged = true;
                        break 'outer;
                    }
                }
            }
        }
    }
    Ok(LmRun { params, sse: current, iterations, converged, sse_history: history })
}

/// Starting point for restart `index`: restart 0 uses all 0.5, later ones
/// draw the outer parameters from [0, 1] and inner weights from [0, 2].
pub fn initial_params(spec: &ModelSpec, config: &FitConfig, index: usize) -> Vec<f64> {
    let n = spec.n_params();
    if index == 0 {
        return vec![0.5; n];
    }
    let mut rng = derived_rng(config.rng_seed, &format!("restart-{index}"));
    (0..n).map(|i| if i < N_OUTER { rng.random_range(0.0..1.0) } else { rng.random_range(0.0..2.0) }).collect()
}

pub fn fit(spec: &ModelSpec, train: &[Observation], config: &FitConfig) -> Result<Fit> {
    fit_with_start(spec, train, config, None)
}

/// Like [`fit`], but restart 0 starts from `start` when given.
pub fn fit_with_start(
    spec: &ModelSpec,
    train: &[Observation],
    config: &FitConfig,
    start: Option<&[f64]>,
) -> Result<Fit> {
    config.validate()?;
    let needed = spec.n_params() + 1;
    if train.len() < needed {
        return Err(Error::InsufficientRecords { needed, got: train.len() });
    }
    let runs: Vec<(usize, Result<LmRun>)> = (0..=config.n_restarts)
        .into_par_iter()
        .map(|i| {
            let init = match (i, start) {
                (0, Some(s)) => s.to_vec(),
                _ => initial_params(spec, config, i),
            };
            (i, levenberg_marquardt(spec, train, &init, config))
        })
        .collect();

    let restarts: Vec<RestartSummary> = runs
        .iter()
        .map(|(i, r)| match r {
            Ok(run) => RestartSummary { restart: *i, sse: Some(run.sse), iterations: run.iterations },
            Err(_) => RestartSummary { restart: *i, sse: None, iterations: 0 },
        })
        .collect();
    let best = runs
        .into_iter()
        .filter_map(|(i, r)| r.ok().map(|run| (i, run)))
        .min_by(|a, b| a.1.sse.total_cmp(&b.1.sse).then(a.0.cmp(&b.0)));
    let Some((best_restart, run)) = best else {
        let errors: Vec<String> = (0..=config.n_restarts).map(|i| format!("restart {i}: out of domain")).collect();
        return Err(Error::FitFailure(format!(
            "all {} restarts diverged ({})",
            config.n_restarts + 1,
            errors.join("; ")
        )));
    };
    let params = ParamVector(run.params);
    let score = score(spec, &params, train)?;
    Ok(Fit {
        params,
        sse: run.sse,
        score,
        iterations_used: run.iterations,
        converged: run.converged,
        best_restart,
        restarts,
    })
}

/// Fit on `train` and report losses and r² on both sets.
pub fn fit_and_score(
    spec: &ModelSpec,
    train: &[Observation],
    test: &[Observation],
    config: &FitConfig,
) -> Result<FitResult> {
    let fit = fit(spec, train, config)?;
    result_from(spec, fit, test)
}

fn result_from(spec: &ModelSpec, fit: Fit, eval: &[Observation]) -> Result<FitResult> {
    let eval_score = score(spec, &fit.params, eval)?;
    Ok(FitResult {
        train_loss: fit.score.mse,
        train_r2: fit.score.r2,
        test_loss: eval_score.mse,
        test_r2: eval_score.r2,
        iterations_used: fit.iterations_used,
        converged: fit.converged,
        params: fit.params,
    })
}

/// Which training records a forward test fits on, by scaled total size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule", content = "value")]
pub enum SplitRule {
    /// Fit on totals strictly below this quantile of the training totals.
    TotalNQuantile(f64),
    /// Fit on totals at or below this scaled value.
    TotalNAtMost(f64),
}

impl Default for SplitRule {
    fn default() -> Self {
        SplitRule::TotalNQuantile(0.7)
    }
}

impl SplitRule {
    /// Partition into (fit set, extrapolation set).
    pub fn partition<'a>(&self, obs: &'a [Observation]) -> Result<(Vec<&'a Observation>, Vec<&'a Observation>)> {
        let inside: Box<dyn Fn(f64) -> bool> = match *self {
            SplitRule::TotalNQuantile(q) => {
                if !(0.0..=1.0).contains(&q) {
                    return Err(Error::config(format!("quantile {q} outside [0, 1]")));
                }
                let mut totals: Vec<f64> = obs.iter().map(|o| o.x.total_n).collect();
                if totals.is_empty() {
                    return Err(Error::config("forward test on an empty record set"));
                }
                totals.sort_by(f64::total_cmp);
                let cut = quantile(&totals, q);
                Box::new(move |t| t < cut)
            }
            SplitRule::TotalNAtMost(t) => Box::new(move |x| x <= t),
        };
        Ok(obs.iter().partition(|o| inside(o.x.total_n)))
    }
}

// Linear interpolation between order statistics of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Fit on the small-size part of `train` and score the extrapolation.
///
/// With a non-empty `test`, the whole test set is scored (forward testing on
/// held-out runs); otherwise the training records beyond the split are.
pub fn forward_test(
    spec: &ModelSpec,
    train: &[Observation],
    test: &[Observation],
    rule: SplitRule,
    config: &FitConfig,
) -> Result<FitResult> {
    let (fit_set, beyond) = rule.partition(train)?;
    if fit_set.is_empty() {
        return Err(Error::config("forward-test split leaves no records to fit"));
    }
    let fit_set: Vec<Observation> = fit_set.into_iter().cloned().collect();
    let eval: Vec<Observation> = if test.is_empty() { beyond.into_iter().cloned().collect() } else { test.to_vec() };
    if eval.is_empty() {
        return Err(Error::config("forward-test split leaves no records to score"));
    }
    let fit = fit(spec, &fit_set, config)?;
    result_from(spec, fit, &eval)
}
