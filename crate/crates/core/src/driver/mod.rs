//! Orchestration: configuration, case setup, the coupled physics-mesh
//! iteration, and the command-line interface.

mod case;
mod cli;
mod config;
mod coupled;

pub use case::{build_case, monitor_psi, source_field, Case};
pub use cli::cli_main;
pub use config::{BcKind, CaseConfig, Ini, MeshSpec, MonitorSpec, Profile};
pub use coupled::{run_coupled, RunArtifacts};
