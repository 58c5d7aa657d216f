//! Files shared between subcommands.

use std::fs::{self, File};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use classmix_core::pipeline::{ingest, preprocess, Dataset};
use classmix_core::{FitConfig, FitResult, FittedModel, ModelSpec, ModelTemplate, Observation, RecordTable, Scaling};
use serde::{Deserialize, Serialize};

/// What `fit` and `select` write: enough to predict and to report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResultFile {
    pub name: String,
    pub model: FittedModel,
    pub scaling: Scaling,
    pub min_epoch: u32,
    pub train: PathBuf,
    pub test: PathBuf,
    pub result: FitResult,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forward: Option<FitResult>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ModelInput {
    Spec(ModelSpec),
    Template(ModelTemplate),
}

/// Model name and spec bound to `class_names`.
pub fn load_model(path: &Path, class_names: &[String]) -> anyhow::Result<(String, ModelSpec)> {
    let input: ModelInput = read_json(path)?;
    let stem = file_stem(path);
    match input {
        ModelInput::Spec(spec) => {
            if spec.class_names() != class_names {
                bail!(
                    "{} names classes {:?} but the training log has {:?}",
                    path.display(),
                    spec.class_names(),
                    class_names
                );
            }
            Ok((stem, spec))
        }
        ModelInput::Template(t) => {
            let spec = t.bind(class_names)?;
            Ok((t.name.unwrap_or(stem), spec))
        }
    }
}

pub fn load_config(path: Option<&Path>) -> anyhow::Result<FitConfig> {
    let config: FitConfig = match path {
        Some(p) => read_json(p)?,
        None => FitConfig::default(),
    };
    config.validate()?;
    Ok(config)
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    serde_json::from_reader(file).with_context(|| format!("parsing {}", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn read_log(path: &Path) -> anyhow::Result<RecordTable> {
    let table = ingest(path).with_context(|| format!("reading {}", path.display()))?;
    for d in &table.diagnostics {
        log::warn!("{}: {d}", path.display());
    }
    Ok(table)
}

/// Training log preprocessed on its own; test log filtered and scaled
/// with the training scaling.
pub fn train_test(train: &Path, test: &Path, min_epoch: u32) -> anyhow::Result<(Dataset, Vec<Observation>)> {
    let train_table = read_log(train)?;
    let test_table = read_log(test)?;
    if train_table.class_names != test_table.class_names {
        bail!("train and test logs have different class columns");
    }
    let dataset = preprocess(&train_table.records, &train_table.class_names, min_epoch)
        .with_context(|| format!("preprocessing {}", train.display()))?;
    let test_obs = dataset.scale(&test_table.records)?;
    if test_obs.is_empty() {
        bail!("{} has no records at epoch {min_epoch} or later", test.display());
    }
    Ok((dataset, test_obs))
}

pub fn file_stem(path: &Path) -> String {
    path.file_stem().map_or_else(|| "model".into(), |s| s.to_string_lossy().into_owned())
}

/// `<dir>/<stem>_residuals.csv` next to a result JSON.
pub fn residuals_path(result_path: &Path) -> PathBuf {
    result_path.with_file_name(format!("{}_residuals.csv", file_stem(result_path)))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResidualRow {
    pub split: String,
    pub measured: f64,
    pub predicted: f64,
    pub residual: f64,
}

pub fn residual_rows(model: &FittedModel, obs: &[Observation], split: &str) -> anyhow::Result<Vec<ResidualRow>> {
    obs.iter()
        .map(|o| {
            let predicted = model.predict(&o.x)?;
            Ok(ResidualRow { split: split.to_string(), measured: o.y, predicted, residual: o.y - predicted })
        })
        .collect()
}

pub fn write_residuals(path: &Path, rows: &[ResidualRow]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
