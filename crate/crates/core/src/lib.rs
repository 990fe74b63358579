//! Exact simulation of reflected Brownian motion whose drift and variance
//! change over time.
//!
//! The pipeline reverses the coefficients in time ([`model::reverse_spec`]),
//! removes the variance by a deterministic time change ([`model::normalize`]),
//! draws the argmax, maximum and endpoint of the resulting drifted Brownian
//! motion exactly ([`rbm::sample_triplet_alg2`]), and maps that triplet to the
//! state of the reflected process and its age since the last idle period
//! ([`rbm::rbm_state_from_triplet`]).

// Checks such as `!(x > 0.0)` also reject NaN, which is why they are written that way.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baseline;
pub mod bridge;
pub mod distributions;
pub mod error;
pub mod model;
pub(crate) mod numeric;
pub mod rbm;
pub mod stats;
pub mod tdbm;

pub use distributions::RandomStream;
pub use error::{Error, Result};
