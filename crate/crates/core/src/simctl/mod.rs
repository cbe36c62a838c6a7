//! Scenario configuration, the run loop, artifact export and the privacy scan.

pub mod config;
pub mod privacy;
pub mod report;
pub mod run;

pub use config::{load_scenario, preset, scenario1, scenario2, ConfigError, Role, ScenarioConfig, Strategy};
pub use privacy::{verify_privacy, Finding, PrivacyReport};
pub use report::{emit_reports, verify_run_dir, write_batch, write_summary_csv};
pub use run::{run, run_with, RunArtifacts, SimError, Simulation, Summary};
