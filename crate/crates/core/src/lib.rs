//! Simulator for cavity-aided quantum nondemolition measurement of a
//! collective atomic pseudospin.
//!
//! * [`cavity`]: cavity/probe parameters and derived rates.
//! * [`coupling`]: atom cloud sampling and inhomogeneous coupling.
//! * [`backaction`]: closed-form squeezing, antisqueezing and scattering.
//! * [`sequence`]: the spin-echo protocol, rotations and dephasing contrast.
//! * [`montecarlo`]: seeded per-shot engine and ensemble statistics.
//! * [`config`] / [`cli`]: JSON run configs, presets and the `qndsim` commands.

pub mod backaction;
pub mod cavity;
pub mod cli;
pub mod config;
pub mod coupling;
pub mod error;
pub mod experiment;
pub mod montecarlo;
pub mod sequence;
pub mod stats;

pub use error::{ConfigIssue, Error, Result};
