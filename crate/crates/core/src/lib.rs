//! Simulation and analysis of pulsed time-bin entangled photon pairs.
//!
//! The [`sim`] module produces signal and idler timestamp streams from a
//! configured source, interferometers, detectors and TDCs. The
//! [`coincidence`] module counts coincidences and accidentals on those
//! streams, and [`experiments`] composes both into rate, visibility and CHSH
//! measurements that can be compared against the closed forms in [`model`].

// Range checks use `!(x > 0.0)` so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod coincidence;
pub mod error;
pub mod experiments;
pub mod io;
pub mod model;
pub mod sim;

pub use error::{Error, ErrorClass, Result};
