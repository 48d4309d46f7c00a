//! Capacity and rate regions of an IRS-assisted multi-user downlink.
//!
//! The crate computes Pareto-boundary points of the NOMA capacity region and
//! the OMA rate region for a single-antenna access point that serves `K`
//! users through an intelligent reflecting surface (IRS) with discrete phase
//! shifts:
//!
//! - [`channel`] builds realizations and evaluates effective gains.
//! - [`noma`] and [`oma`] hold the region engines for unlimited IRS
//!   reconfigurations and for a finite number of time blocks.
//! - [`baseline`] contains the exhaustive finite-block references.
//! - [`experiment`] runs sweeps and writes output.
//!
//! Internal math is linear: watts and power ratios. Rates are in bit/s/Hz.

pub mod baseline;
pub mod channel;
pub mod error;
pub mod experiment;
pub mod noma;
pub mod oma;
pub mod profile;
pub mod solvers;
pub mod units;

pub use error::{Error, Result};
pub use profile::RateProfile;
