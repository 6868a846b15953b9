//! Convergence benchmark harness.

pub mod cache;
pub mod config;
pub mod presets;
pub mod report;
pub mod study;

pub use cache::{reference_digest, ReferenceCache};
pub use config::{load_config, parse_config, ExperimentSpec, ReportFormat, SpecOverrides};
pub use presets::{InitialCondition, Preset, PresetId};
pub use report::{emit_report, load_summary};
pub use study::{estimate_order, run_convergence_study, ConvergenceReport, Problem, StudyOptions};
