//! Two-stage prostate cancer classification on 6-channel diffusion-weighted
//! MRI slices.
//!
//! Stage one trains an ensemble of pre-activation residual CNNs that score
//! each slice. Stage two turns each patient's confident slice probabilities
//! into first-order statistics, selects the most informative ones with a
//! bagged-tree importance ranking and classifies the patient with a random
//! forest.

pub mod data;
pub mod error;
pub mod eval;
pub mod io;
pub mod nn;
pub mod pipeline;
pub mod rng;
pub mod stacking;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{Element, Tensor};

/// Lower-case hex encoding.
pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
