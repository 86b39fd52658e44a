//! Fairness auditing and bias mitigation for multi-label tabular rating data.
//!
//! The crate covers ingestion and normalization of rating tables, disparate
//! impact auditing, three mitigation families (quantile repair of features,
//! the prejudice remover, equalized-odds mixing) and a seeded generator of
//! synthetic datasets with controlled group bias.

pub mod agreement;
pub mod csvio;
pub mod dataset;
pub mod embed;
pub mod error;
pub mod labels;
pub mod logreg;
pub mod metrics;
pub mod optim;
pub mod pipeline;
pub mod postproc;
pub mod prejudice;
pub mod repair;
pub mod rng;
pub mod synth;

pub use agreement::{krippendorff_alpha, AnnotationTable};
pub use dataset::{DatasetParts, GroupSpec, ProtectedColumn, SplitConfig, TabularDataset};
pub use error::{Error, Result};
pub use logreg::{LinearModel, TrainConfig};
pub use metrics::{disparate_impact, FairnessReport, GroupFairness, Measure};
pub use pipeline::{EvaluationReport, RunConfig, RunManifest, Stage};
pub use postproc::MixingPolicy;
pub use prejudice::PrejudiceConfig;
pub use repair::{QuantileTable, RepairConfig};
pub use synth::{generate, BiasScenario, GroupCounts};
