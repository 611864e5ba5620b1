//! Operator surface for trainloop studies: configuration, replication
//! running, persistence, reports and plots.

pub mod app;
pub mod config;
pub mod format;
pub mod plot;
pub mod report;
pub mod study;

pub use config::{ConfigError, RunSpec, Settings};
pub use study::{simulate, GroundTruth, StudyError, StudyOutcome};
