//! Experiment orchestration: dataset assembly, labels, splits, the
//! five-system comparison, the EDMD ablation grid, reports and figures.

pub mod ablation;
pub mod config;
pub mod dataset;
pub mod features;
pub mod plots;
pub mod labels;
pub mod report;
pub mod split;
pub mod systems;

pub use config::ExperimentConfig;
pub use dataset::{load_dataset, synthetic_dataset, Dataset, Record};
pub use features::{FeatureKind, FeatureSpec, Standardizer};
pub use labels::{generate_labels, LabelRule, Task};
pub use split::{split_dataset, DatasetSplit};
pub use ablation::{run_ablation, AblationResult, GridPoint};
pub use systems::{compare, run_system, ExperimentReport, System};
