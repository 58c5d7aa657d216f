//! Synthetic training runs.
//!
//! Each design row is "trained" by evaluating a ground-truth model at the
//! row's counts for every checkpoint epoch, adding Gaussian noise and
//! clamping to [0, 1]. The ground truth sees counts/cap, total/sum(caps) and
//! epoch/e_max.

use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::Design;
use crate::error::{Error, Result};
use crate::models::FittedModel;
use crate::pipeline::{Scaling, TrainingRecord};
use crate::rng::derived_rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSpec {
    pub ground_truth: FittedModel,
    pub noise_sigma: f64,
    pub epoch_schedule: Vec<u32>,
    pub e_max: u32,
    pub rng_seed: u64,
}

impl OracleSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::config(format!("noise sigma {} must be finite and non-negative", self.noise_sigma)));
        }
        if self.e_max == 0 {
            return Err(Error::config("e_max must be positive"));
        }
        if self.epoch_schedule.is_empty() {
            return Err(Error::config("epoch schedule is empty"));
        }
        if let Some(&e) = self.epoch_schedule.iter().find(|&&e| e == 0 || e > self.e_max) {
            return Err(Error::config(format!("schedule epoch {e} outside 1..={}", self.e_max)));
        }
        Ok(())
    }

    /// Scaling under which the ground truth is expressed.
    pub fn scaling(&self, caps: &[u64]) -> Scaling {
        Scaling::from_caps(caps, self.e_max)
    }
}

/// Every `step` epochs from `first` up to `last`.
pub fn every(step: u32, first: u32, last: u32) -> Vec<u32> {
    (first..=last).step_by(step.max(1) as usize).collect()
}

/// One design row to simulate.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRow {
    pub tag: String,
    pub counts: Vec<u64>,
    pub caps: Vec<u64>,
}

pub fn row_tag(subset_size: u64, row: usize) -> String {
    format!("s{subset_size}-r{row}")
}

pub fn experiment_rows(designs: &[Design]) -> Vec<ExperimentRow> {
    designs
        .iter()
        .flat_map(|d| {
            d.points.iter().enumerate().map(|(i, p)| ExperimentRow {
                tag: row_tag(d.subset_size(), i),
                counts: p.counts.clone(),
                caps: d.spec.class_caps.clone(),
            })
        })
        .collect()
}

/// One record per (design row, schedule epoch), in design, row, epoch order.
pub fn run_experiments(designs: &[Design], oracle: &OracleSpec) -> Result<Vec<TrainingRecord>> {
    simulate_rows(&experiment_rows(designs), oracle)
}

pub fn simulate_rows(rows: &[ExperimentRow], oracle: &OracleSpec) -> Result<Vec<TrainingRecord>> {
    oracle.validate()?;
    let k = oracle.ground_truth.spec.n_classes();
    if let Some(r) = rows.iter().find(|r| r.counts.len() != k || r.caps.len() != k) {
        return Err(Error::contract(format!("row {} has {} classes, ground truth has {k}", r.tag, r.counts.len())));
    }
    let noise = Normal::new(0.0, oracle.noise_sigma).map_err(|e| Error::config(e.to_string()))?;
    let per_row: Vec<Result<Vec<TrainingRecord>>> = rows
        .par_iter()
        .map(|row| {
            // Stream keyed by the tag, so results don't depend on scheduling.
            let mut rng = derived_rng(oracle.rng_seed, &row.tag);
            let scaling = oracle.scaling(&row.caps);
            oracle
                .epoch_schedule
                .iter()
                .map(|&epoch| {
                    let record = TrainingRecord::new(row.counts.clone(), epoch, 0.0, Some(row.tag.clone()));
                    let truth = oracle.ground_truth.predict(&scaling.apply(&record.raw_features()))?;
                    let eps = if oracle.noise_sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                    Ok(TrainingRecord { accuracy: (truth + eps).clamp(0.0, 1.0), ..record })
                })
                .collect()
        })
        .collect();
    let mut records = Vec::with_capacity(rows.len() * oracle.epoch_schedule.len());
    for r in per_row {
        records.extend(r?);
    }
    Ok(records)
}
