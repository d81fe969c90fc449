//! Configuration, experiment runners, reports and plots for the command
//! line front end.

pub mod config;
pub mod experiment;
pub mod plot;
pub mod report;

pub use config::{parse_config, ExperimentConfig, ExperimentKind};
pub use experiment::{run_experiment, ExperimentOutput};
pub use plot::emit_plot;
pub use report::{ConvergenceReport, ReportRow};
