//! Scenario files, seeded scenario generation and result files for
//! `coepi-core`.
//!
//! Random draws use SplitMix64 sub-streams, `stream(seed, task)`, one per
//! sampling task (parameter attempt, initial state, Jacobian probes), so a
//! scenario regenerates identically on any platform.

pub mod config;
pub mod error;
pub mod generator;
pub mod output;
pub mod run;

pub use config::{Scenario, ScenarioConfig};
pub use error::{CliError, ErrorKind};
pub use generator::{generate_params, generate_scenario, GeneratorSpec, TargetRegime};
pub use output::Summary;
