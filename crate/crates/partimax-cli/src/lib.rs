//! Configuration and command implementations for the `partimax` binary.
//!
//! The binary has three modes, all driven by one TOML config plus flag
//! overrides: `bench` sweeps tracking episodes into a CSV, `verify` runs the
//! selector-guarantee suites, and `select` runs one selector over a particle
//! file. Everything here is a plain function over the parsed [`RunConfig`]
//! so the modes are testable without spawning the binary.

mod commands;
mod config;

pub use commands::{cmd_bench, cmd_select, cmd_verify, parse_particles, write_csv, BenchSummary, CSV_HEADER};
pub use config::{
    load_config, BenchSection, DetectorSection, FilterSection, MotionSection, RunConfig,
    SelectSection, TilingSection,
};
