//! Scenario files in, deterministic tables out.

pub mod output;
pub mod run;
pub mod scenario;

pub use output::{write_atomically, OutputFile, Stamp};
pub use run::run;
pub use scenario::{parse_scenario, Experiment, FieldError, Scenario};
