//! Simulation and analysis of nonlocal dispersion cancellation with
//! energy-time entangled photon pairs.
//!
//! The crate covers the whole chain: closed-form predictions ([`model`]),
//! Monte-Carlo timestamp generation ([`sim`]), coincidence reconstruction
//! from two independent event timers ([`correlator`]), peak fitting and the
//! entanglement witness ([`analysis`]), tag file and network formats
//! ([`tagio`]) and the reproduction presets ([`pipeline`]).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod config;
pub mod correlator;
pub mod error;
pub mod model;
pub mod pipeline;
pub mod sim;
pub mod tagio;
pub mod tags;

pub use error::{ConfigError, Error, FormatError, Result};
pub use tags::TagStream;
