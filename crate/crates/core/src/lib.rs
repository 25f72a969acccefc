//! Batch-infection birth-death Markov model of epidemic active cases.
//!
//! The crate covers the whole pipeline: model parameters and group mixtures
//! ([`model`]), the level-structured truncated generator ([`qbd`]), transient
//! distributions and expected trajectories ([`transient`]), exact stochastic
//! simulation ([`simulate`]), estimation from daily case series
//! ([`estimate`]), intervention scenarios ([`intervention`]) and file I/O
//! with the bundled country fixtures ([`data`]).

pub mod data;
pub mod error;
pub mod estimate;
pub mod intervention;
pub mod model;
pub mod qbd;
pub mod simulate;
pub mod transient;

pub use error::{Error, Result};
