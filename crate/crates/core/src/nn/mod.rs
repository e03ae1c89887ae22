//! A small reverse-mode autodiff engine over 2-D arrays.
//!
//! Runs in `f32` for training and inference and in `f64` for
//! finite-difference gradient validation.

mod adam;
mod params;
mod tape;

pub use adam::Adam;
pub use params::ParamStore;
pub use tape::{NodeId, Tape};

use std::fmt::{Debug, Display};

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, NumAssignOps};

/// Element type the engine is generic over.
pub trait Scalar:
    Float + NumAssignOps + ScalarOperand + LinalgScalar + Debug + Display + Send + Sync + 'static
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}
