//! Compact thermal modelling of chiplet packages.
//!
//! A layered package document is meshed into a sparse RC network
//! ([`rc::build_rc`]), solved in steady state or integrated in time
//! ([`solver`]), and optionally discretized into a fixed-step state-space
//! model ([`dss`]) that is cheap enough for run-time thermal management.
//!
//! # Examples
//!
//! Each capability has a runnable example. Use `--release` for the transient ones.
//!
//! | example | shows |
//! |---|---|
//! | `build_network` | meshing a bundled package, per-layer node counts |
//! | `custom_package` | writing a package document, diagnostics, node lookup |
//! | `calibrate_abstractions` | equivalent conductivity, heat capacity, heatsink HTC |
//! | `steady_state` | steady temperatures and energy balance for every bundled package |
//! | `transient_wl1` | synthetic stress/PRBS/cooldown workload through the adaptive solver |
//! | `dss_vs_rc` | discretizing at 10 ms and checking against the continuous solver |
//! | `compare_traces` | accuracy metrics across sampling periods and guard bands |
//! | `heatmaps` | per-layer rasters of the 3D stack |
//!
//! ```text
//! cargo run --release --example dss_vs_rc
//! ```
//!
//! The `mfit` binary exposes the same pipeline over files; see [`cli`].

pub mod bundled;
pub mod calibration;
pub mod cli;
pub mod dss;
pub mod error;
pub mod geometry;
pub mod metrics;
pub mod package;
pub mod rc;
pub mod solver;
pub mod trace;
pub mod workload;

pub use dss::DssModel;
pub use error::{Error, Result};
pub use metrics::{compare, CompareOptions, ComparisonReport};
pub use package::{load_package, parse_package, validate_package, PackageSpec};
pub use rc::{build_rc, RCModel};
pub use solver::{simulate, steady_state, SolverConfig};
pub use trace::TemperatureTrace;
pub use workload::{PowerTrace, SynthSpec};
