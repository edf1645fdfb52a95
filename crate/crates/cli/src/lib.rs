//! Config-driven orchestration for the heatwell laboratory: simulation
//! runs, blow-up detection and extrapolation, and the theorem-level
//! experiment suites, all reading one flat TOML config.

pub mod config;
pub mod experiments;
pub mod profiles;
pub mod report;
pub mod simulate;
