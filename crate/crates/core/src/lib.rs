//! Simulation of two frequency-locked CW lasers joined by a long
//! injection-locking link, and of their two-photon coincidence fringes.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analysis;
pub mod channel;
pub mod cli;
pub mod csv;
pub mod detect;
pub mod error;
pub mod hom;
pub mod exec;
pub mod injection;
pub mod lockband;
pub mod phasenoise;
pub mod rng;

pub use error::{Error, Result};
