//! Command-line front end: TOML run configuration and command dispatch.

mod commands;
mod config;

pub use commands::{
    execute, exit_code, write_error_artifact, Command, Outcome, EXIT_INVALID, EXIT_NOT_CONVERGED, EXIT_OK,
};
pub use config::{
    load_config, parse_config, BubbleSection, CurvaturePreset, DomainConfig, Method, MtSection, Point, RefineAt,
    ReportSection, RhoConfig, RunConfig, SolverSection,
};
