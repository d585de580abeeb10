//! Vortex-beam-driven electron dynamics and harmonic emission in single and
//! concentric semiconductor quantum rings.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod emission;
pub mod error;
pub mod par;
pub mod propagator;
pub mod ring_model;
pub mod scenario;
pub mod selection_oracle;
pub mod units;
pub mod vortex_field;

pub use error::{Error, Result};
