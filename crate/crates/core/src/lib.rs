#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Monte-Carlo simulator and analytics for a spectrally multiplexed heralded
//! single-photon source.

pub mod detection;
pub mod error;
pub mod experiment;
pub mod feedforward;
pub mod fmt;
pub mod hom;
pub mod kernel;
pub mod loss;
pub mod rng;
pub mod source;
pub mod spectral;

pub use error::{Error, Result};
