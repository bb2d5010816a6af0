//! Experiment harness: synthetic instances, task pipelines, randomized audit
//! suites and CSV/TOML reports.

pub mod config;
pub mod error;
pub mod generate;
pub mod output;
pub mod pipeline;
pub mod suites;

pub use config::{ExperimentConfig, Task};
pub use error::{HarnessError, Result};
pub use pipeline::{run, sweep, InstanceReport, RunReport};
pub use suites::{run_suite, Suite, SuiteRun};
