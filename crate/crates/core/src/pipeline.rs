//! Training-run logs: ingestion, epoch filtering, min-max scaling and
//! fit/validation splits.
//!
//! The log format is a CSV with header `accs, <class names...>, epochs,
//! total_n`, optionally preceded by a `row` column and followed by a `tag`
//! column naming the run the record came from.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{validate_class_names, FeatureVector};
use crate::fitting::Observation;
use crate::rng::seeded_rng;

pub const DEFAULT_MIN_EPOCH: u32 = 10;

const ROW: &str = "row";
const ACCS: &str = "accs";
const EPOCHS: &str = "epochs";
const TOTAL_N: &str = "total_n";
const TAG: &str = "tag";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRecord {
    pub class_counts: Vec<u64>,
    pub epoch: u32,
    pub total_n: u64,
    pub accuracy: f64,
    pub source_tag: String,
}

impl TrainingRecord {
    /// Builds a record with `total_n` computed from the counts and the
    /// default tag when `source_tag` is `None`.
    pub fn new(class_counts: Vec<u64>, epoch: u32, accuracy: f64, source_tag: Option<String>) -> Self {
        let total_n = class_counts.iter().sum();
        let source_tag = source_tag.unwrap_or_else(|| default_tag(&class_counts));
        TrainingRecord { class_counts, epoch, total_n, accuracy, source_tag }
    }

    /// Unscaled features: raw counts, total and epoch.
    pub fn raw_features(&self) -> FeatureVector {
        FeatureVector::new(
            self.class_counts.iter().map(|&c| c as f64).collect(),
            self.total_n as f64,
            self.epoch as f64,
        )
    }
}

/// Tag used for logs without a `tag` column: the counts joined by '-'.
pub fn default_tag(counts: &[u64]) -> String {
    counts.iter().map(u64::to_string).collect::<Vec<_>>().join("-")
}

/// Parsed log with its class names (header order) and any warnings.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordTable {
    pub class_names: Vec<String>,
    pub records: Vec<TrainingRecord>,
    pub diagnostics: Vec<String>,
}

struct Layout {
    accs: usize,
    classes: std::ops::Range<usize>,
    epochs: usize,
    total_n: usize,
    tag: Option<usize>,
    width: usize,
}

fn layout(header: &csv::StringRecord) -> Result<(Layout, Vec<String>)> {
    let cols: Vec<&str> = header.iter().collect();
    let parse_err = |message: String| Error::Parse { line: 1, message };
    let mut i = 0;
    if cols.first() == Some(&ROW) {
        i = 1;
    }
    if cols.get(i) != Some(&ACCS) {
        return Err(parse_err(format!("expected column {ACCS:?} at position {i}")));
    }
    let accs = i;
    let epochs =
        cols.iter().position(|&c| c == EPOCHS).ok_or_else(|| parse_err(format!("missing column {EPOCHS:?}")))?;
    if cols.get(epochs + 1) != Some(&TOTAL_N) {
        return Err(parse_err(format!("expected {TOTAL_N:?} right after {EPOCHS:?}")));
    }
    let total_n = epochs + 1;
    let tag = match &cols[total_n + 1..] {
        [] => None,
        [t] if *t == TAG => Some(total_n + 1),
        extra => return Err(parse_err(format!("unexpected trailing columns {extra:?}"))),
    };
    let class_names: Vec<String> = cols[accs + 1..epochs].iter().map(|s| s.to_string()).collect();
    validate_class_names(&class_names).map_err(|e| parse_err(e.to_string()))?;
    Ok((Layout { accs, classes: accs + 1..epochs, epochs, total_n, tag, width: cols.len() }, class_names))
}

pub fn ingest(path: impl AsRef<Path>) -> Result<RecordTable> {
    read_records(File::open(path)?)
}

pub fn read_records<R: Read>(input: R) -> Result<RecordTable> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(true).from_reader(input);
    let (layout, class_names) = layout(reader.headers()?)?;
    let mut records = Vec::new();
    let mut diagnostics = Vec::new();
    for row in reader.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let err = |message: String| Error::Parse { line, message };
        if row.len() != layout.width {
            return Err(err(format!("expected {} fields, found {}", layout.width, row.len())));
        }
        let field = |i: usize| &row[i];
        let accuracy: f64 =
            field(layout.accs).parse().map_err(|_| err(format!("invalid accuracy {:?}", field(layout.accs))))?;
        if !(0.0..=1.0).contains(&accuracy) {
            return Err(err(format!("accuracy {accuracy} outside [0, 1]")));
        }
        let class_counts = layout
            .classes
            .clone()
            .map(|i| {
                field(i).parse::<u64>().map_err(|_| {
                    err(format!("invalid count {:?} for class {}", field(i), class_names[i - layout.classes.start]))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let epoch: u32 =
            field(layout.epochs).parse().map_err(|_| err(format!("invalid epoch {:?}", field(layout.epochs))))?;
        if epoch == 0 {
            return Err(err("epoch must be positive".into()));
        }
        let listed: u64 =
            field(layout.total_n).parse().map_err(|_| err(format!("invalid total_n {:?}", field(layout.total_n))))?;
        let tag = layout.tag.map(|i| field(i).to_string());
        let record = TrainingRecord::new(class_counts, epoch, accuracy, tag);
        if record.total_n == 0 {
            return Err(err("all class counts are zero".into()));
        }
        if record.total_n != listed {
            let msg = format!("line {line}: total_n {listed} differs from class sum {}; using the sum", record.total_n);
            log::warn!("{msg}");
            diagnostics.push(msg);
        }
        records.push(record);
    }
    Ok(RecordTable { class_names, records, diagnostics })
}

/// Writes the log format with a leading `row` index and trailing `tag`.
pub fn write_records<W: Write>(output: W, class_names: &[String], records: &[TrainingRecord]) -> Result<()> {
    let mut writer = csv::Writer::from_writer(output);
    let mut header = vec![ROW.to_string(), ACCS.to_string()];
    header.extend(class_names.iter().cloned());
    header.extend([EPOCHS.to_string(), TOTAL_N.to_string(), TAG.to_string()]);
    writer.write_record(&header)?;
    for (i, r) in records.iter().enumerate() {
        if r.class_counts.len() != class_names.len() {
            return Err(Error::contract(format!(
                "record {i} has {} classes, header has {}",
                r.class_counts.len(),
                class_names.len()
            )));
        }
        let mut row = vec![i.to_string(), r.accuracy.to_string()];
        row.extend(r.class_counts.iter().map(u64::to_string));
        row.extend([r.epoch.to_string(), r.total_n.to_string(), r.source_tag.clone()]);
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn save_records(path: impl AsRef<Path>, class_names: &[String], records: &[TrainingRecord]) -> Result<()> {
    write_records(File::create(path)?, class_names, records)
}

/// Range used to map one feature onto [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min: f64,
    pub max: f64,
}

impl Bounds {
    pub fn new(min: f64, max: f64) -> Self {
        Bounds { min, max }
    }

    /// A zero-width range maps everything to 0.
    pub fn is_degenerate(&self) -> bool {
        self.max <= self.min
    }

    pub fn scale(&self, v: f64) -> f64 {
        if self.is_degenerate() {
            0.0
        } else {
            (v - self.min) / (self.max - self.min)
        }
    }

    fn of(values: impl Iterator<Item = f64>) -> Self {
        let (min, max) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        Bounds { min, max }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    pub class_counts: Vec<Bounds>,
    pub total_n: Bounds,
    pub epoch: Bounds,
}

impl Scaling {
    /// Min-max bounds over `features`, with a diagnostic per constant column.
    pub fn min_max(features: &[FeatureVector], class_names: &[String]) -> Result<(Self, Vec<String>)> {
        let Some(first) = features.first() else {
            return Err(Error::InsufficientRecords { needed: 1, got: 0 });
        };
        let k = first.n_classes();
        if k != class_names.len() || features.iter().any(|f| f.n_classes() != k) {
            return Err(Error::contract("feature vectors disagree on the class count"));
        }
        let scaling = Scaling {
            class_counts: (0..k).map(|c| Bounds::of(features.iter().map(|f| f.class_counts[c]))).collect(),
            total_n: Bounds::of(features.iter().map(|f| f.total_n)),
            epoch: Bounds::of(features.iter().map(|f| f.epoch)),
        };
        let mut diagnostics = Vec::new();
        let named = class_names
            .iter()
            .map(String::as_str)
            .zip(&scaling.class_counts)
            .chain([(TOTAL_N, &scaling.total_n), ("epoch", &scaling.epoch)]);
        for (name, b) in named {
            if b.is_degenerate() {
                let msg = format!("feature {name} is constant ({}); scaled to 0", b.min);
                log::warn!("{msg}");
                diagnostics.push(msg);
            }
        }
        Ok((scaling, diagnostics))
    }

    /// Fixed bounds `[0, cap]` per class, `[0, sum of caps]` for the total
    /// and `[0, e_max]` for the epoch.
    pub fn from_caps(caps: &[u64], e_max: u32) -> Self {
        Scaling {
            class_counts: caps.iter().map(|&c| Bounds::new(0.0, c as f64)).collect(),
            total_n: Bounds::new(0.0, caps.iter().sum::<u64>() as f64),
            epoch: Bounds::new(0.0, e_max as f64),
        }
    }

    pub fn n_classes(&self) -> usize {
        self.class_counts.len()
    }

    pub fn apply(&self, raw: &FeatureVector) -> FeatureVector {
        FeatureVector::new(
            raw.class_counts.iter().zip(&self.class_counts).map(|(&v, b)| b.scale(v)).collect(),
            self.total_n.scale(raw.total_n),
            self.epoch.scale(raw.epoch),
        )
    }

    pub fn apply_record(&self, record: &TrainingRecord) -> Result<Observation> {
        if record.class_counts.len() != self.n_classes() {
            return Err(Error::contract(format!(
                "record has {} classes, scaling has {}",
                record.class_counts.len(),
                self.n_classes()
            )));
        }
        Ok(Observation::new(self.apply(&record.raw_features()), record.accuracy))
    }
}

/// Preprocessed fit split: epoch-filtered records and the scaling derived
/// from them.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub class_names: Vec<String>,
    pub records: Vec<TrainingRecord>,
    pub scaling: Scaling,
    pub min_epoch: u32,
    pub diagnostics: Vec<String>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn observations(&self) -> Vec<Observation> {
        self.records.iter().map(|r| Observation::new(self.scaling.apply(&r.raw_features()), r.accuracy)).collect()
    }

    /// Scale other records (e.g. the validation split) with this dataset's
    /// scaling, after the same epoch filter.
    pub fn scale(&self, records: &[TrainingRecord]) -> Result<Vec<Observation>> {
        filter_epochs(records, self.min_epoch).iter().map(|r| self.scaling.apply_record(r)).collect()
    }
}

pub fn filter_epochs(records: &[TrainingRecord], min_epoch: u32) -> Vec<TrainingRecord> {
    records.iter().filter(|r| r.epoch >= min_epoch).cloned().collect()
}

/// Drops early epochs and min-max scales over what remains.
pub fn preprocess(records: &[TrainingRecord], class_names: &[String], min_epoch: u32) -> Result<Dataset> {
    let kept = kept_records(records, class_names, min_epoch)?;
    let raw: Vec<FeatureVector> = kept.iter().map(TrainingRecord::raw_features).collect();
    let (scaling, diagnostics) = Scaling::min_max(&raw, class_names)?;
    Ok(Dataset { class_names: class_names.to_vec(), records: kept, scaling, min_epoch, diagnostics })
}

/// Drops early epochs and applies a given scaling.
pub fn preprocess_with_scaling(
    records: &[TrainingRecord],
    class_names: &[String],
    min_epoch: u32,
    scaling: Scaling,
) -> Result<Dataset> {
    if scaling.n_classes() != class_names.len() {
        return Err(Error::contract("scaling and class names disagree on the class count"));
    }
    let kept = kept_records(records, class_names, min_epoch)?;
    Ok(Dataset { class_names: class_names.to_vec(), records: kept, scaling, min_epoch, diagnostics: Vec::new() })
}

fn kept_records(records: &[TrainingRecord], class_names: &[String], min_epoch: u32) -> Result<Vec<TrainingRecord>> {
    validate_class_names(class_names)?;
    if records.is_empty() {
        return Err(Error::InsufficientRecords { needed: 1, got: 0 });
    }
    if let Some(r) = records.iter().find(|r| r.class_counts.len() != class_names.len()) {
        return Err(Error::contract(format!(
            "record {:?} has {} classes, expected {}",
            r.source_tag,
            r.class_counts.len(),
            class_names.len()
        )));
    }
    let kept = filter_epochs(records, min_epoch);
    if kept.is_empty() {
        return Err(Error::config(format!("no records at epoch {min_epoch} or later")));
    }
    Ok(kept)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Holdout {
    /// Records whose tag is listed go to validation, the rest to fitting.
    ByTag(BTreeSet<String>),
    /// A seeded random share of the records goes to validation.
    ByFraction { validation_fraction: f64, seed: u64 },
}

/// Partition into (fit, validation), each side in input order.
pub fn split(records: &[TrainingRecord], rule: &Holdout) -> Result<(Vec<TrainingRecord>, Vec<TrainingRecord>)> {
    let (fit, validation): (Vec<_>, Vec<_>) = match rule {
        Holdout::ByTag(tags) => records.iter().cloned().partition(|r| !tags.contains(&r.source_tag)),
        Holdout::ByFraction { validation_fraction: f, seed } => {
            if !(*f > 0.0 && *f < 1.0) {
                return Err(Error::config(format!("validation fraction {f} must lie strictly between 0 and 1")));
            }
            let n_val = (f * records.len() as f64).round() as usize;
            let mut order: Vec<usize> = (0..records.len()).collect();
            order.shuffle(&mut seeded_rng(*seed));
            let mut in_val = vec![false; records.len()];
            for &i in &order[..n_val] {
                in_val[i] = true;
            }
            let (val, fit): (Vec<_>, Vec<_>) = records.iter().zip(&in_val).partition(|(_, &v)| v);
            (fit.into_iter().map(|(r, _)| r.clone()).collect(), val.into_iter().map(|(r, _)| r.clone()).collect())
        }
    };
    if fit.is_empty() || validation.is_empty() {
        return Err(Error::config(format!(
            "split leaves an empty side ({} fit, {} validation)",
            fit.len(),
            validation.len()
        )));
    }
    Ok((fit, validation))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct DatasetSidecar {
    class_names: Vec<String>,
    min_epoch: u32,
    scaling: Scaling,
}

pub fn scaling_sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

/// Records as CSV plus a JSON sidecar holding the scaling.
pub fn save_dataset(path: impl AsRef<Path>, dataset: &Dataset) -> Result<()> {
    let path = path.as_ref();
    save_records(path, &dataset.class_names, &dataset.records)?;
    let sidecar = DatasetSidecar {
        class_names: dataset.class_names.clone(),
        min_epoch: dataset.min_epoch,
        scaling: dataset.scaling.clone(),
    };
    serde_json::to_writer_pretty(File::create(scaling_sidecar_path(path))?, &sidecar)?;
    Ok(())
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let table = ingest(path)?;
    let sidecar: DatasetSidecar = serde_json::from_reader(File::open(scaling_sidecar_path(path))?)?;
    if sidecar.class_names != table.class_names {
        return Err(Error::contract("dataset sidecar class names differ from the CSV header"));
    }
    let mut ds = preprocess_with_scaling(&table.records, &table.class_names, sidecar.min_epoch, sidecar.scaling)?;
    ds.diagnostics = table.diagnostics;
    Ok(ds)
}
