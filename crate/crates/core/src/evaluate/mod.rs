//! Bandwidth selection, accuracy metrics and the simulation study.

pub mod cv;
pub mod metrics;
pub mod study;

pub use cv::{cross_validate, default_candidates, fold_assignment, CvOutcome, CvPlan, CvTarget};
pub use metrics::{band, compute_metrics, Band, StudyMetrics};
pub use study::{run_study, Scenario, StudyConfig, StudyReport};
