//! Workload characterization and first-order delay/energy modeling for
//! deciding when near-memory computing beats a conventional multi-core host.
//!
//! The pipeline is: [`trace`] records → [`characterize`] metrics →
//! [`model`] host vs. host+NMC comparison → [`advisor`] verdicts.

pub mod advisor;
pub mod characterize;
pub mod config;
pub mod model;
pub mod numfmt;
pub mod trace;
