//! Maximin designs over per-class training-set sizes, simulated training
//! logs, and class-aware scaling-law fits with forward feature selection.

pub mod design;
pub mod error;
pub mod features;
pub mod fitting;
pub mod models;
pub mod pipeline;
pub mod report;
pub mod rng;
pub mod selection;
pub mod simulator;

pub use design::{Design, DesignPoint, DesignSpec, SamplerKind};
pub use error::{Error, Result};
pub use features::{Feature, FeatureVector, MainFeature};
pub use fitting::{FitConfig, FitResult, Observation, SplitRule};
pub use models::{Family, FittedModel, Inner, ModelSpec, ModelTemplate, ParamVector};
pub use pipeline::{Dataset, Holdout, RecordTable, Scaling, TrainingRecord};
pub use report::{PredictionPoint, ReportBundle, TableRow};
pub use selection::{CandidateSet, FeaturePath};
pub use simulator::OracleSpec;
