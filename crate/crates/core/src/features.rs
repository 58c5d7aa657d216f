//! Scaled model inputs and named features over them.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TOTAL_N: &str = "total_n";
pub const EPOCH: &str = "epoch";
/// Separator between the two constituents of an interaction name.
pub const INTERACTION_SEP: char = ':';

/// One observation's inputs after scaling: per-class counts, total size and
/// epoch, each nominally in `[0, 1]`. Records outside the fit split's range
/// (forward testing) may scale beyond that interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub class_counts: Vec<f64>,
    pub total_n: f64,
    pub epoch: f64,
}

impl FeatureVector {
    pub fn new(class_counts: Vec<f64>, total_n: f64, epoch: f64) -> Self {
        FeatureVector { class_counts, total_n, epoch }
    }

    pub fn n_classes(&self) -> usize {
        self.class_counts.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MainFeature {
    Class(usize),
    TotalN,
    Epoch,
}

impl MainFeature {
    pub fn value(self, x: &FeatureVector) -> f64 {
        match self {
            MainFeature::Class(c) => x.class_counts[c],
            MainFeature::TotalN => x.total_n,
            MainFeature::Epoch => x.epoch,
        }
    }

    pub fn name(self, class_names: &[String]) -> String {
        match self {
            MainFeature::Class(c) => class_names[c].clone(),
            MainFeature::TotalN => TOTAL_N.to_string(),
            MainFeature::Epoch => EPOCH.to_string(),
        }
    }

    fn parse(name: &str, class_names: &[String]) -> Result<Self> {
        match name {
            TOTAL_N => Ok(MainFeature::TotalN),
            EPOCH => Ok(MainFeature::Epoch),
            _ => class_names
                .iter()
                .position(|c| c == name)
                .map(MainFeature::Class)
                .ok_or_else(|| Error::config(format!("unknown feature {name:?}"))),
        }
    }
}

/// A main feature or the product of two of them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Feature {
    Main(MainFeature),
    Interaction(MainFeature, MainFeature),
}

impl Feature {
    pub fn value(self, x: &FeatureVector) -> f64 {
        match self {
            Feature::Main(m) => m.value(x),
            Feature::Interaction(a, b) => a.value(x) * b.value(x),
        }
    }

    pub fn name(self, class_names: &[String]) -> String {
        match self {
            Feature::Main(m) => m.name(class_names),
            Feature::Interaction(a, b) => {
                format!("{}{INTERACTION_SEP}{}", a.name(class_names), b.name(class_names))
            }
        }
    }

    pub fn parse(name: &str, class_names: &[String]) -> Result<Self> {
        match name.split_once(INTERACTION_SEP) {
            Some((a, b)) => {
                Ok(Feature::Interaction(MainFeature::parse(a, class_names)?, MainFeature::parse(b, class_names)?))
            }
            None => Ok(Feature::Main(MainFeature::parse(name, class_names)?)),
        }
    }

    /// Highest class index referenced, if any.
    pub fn max_class(self) -> Option<usize> {
        let class = |m: MainFeature| match m {
            MainFeature::Class(c) => Some(c),
            _ => None,
        };
        match self {
            Feature::Main(m) => class(m),
            Feature::Interaction(a, b) => class(a).max(class(b)),
        }
    }
}

impl fmt::Display for MainFeature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MainFeature::Class(c) => write!(f, "class_{c}"),
            MainFeature::TotalN => f.write_str(TOTAL_N),
            MainFeature::Epoch => f.write_str(EPOCH),
        }
    }
}

/// Class names must be unique and must not shadow the reserved feature names.
pub fn validate_class_names(class_names: &[String]) -> Result<()> {
    let mut seen = std::collections::HashSet::new();
    for name in class_names {
        if name.is_empty() {
            return Err(Error::config("empty class name"));
        }
        if name == TOTAL_N || name == EPOCH || name.contains(INTERACTION_SEP) {
            return Err(Error::config(format!("class name {name:?} is reserved or contains ':'")));
        }
        if !seen.insert(name.as_str()) {
            return Err(Error::config(format!("duplicate class name {name:?}")));
        }
    }
    Ok(())
}
