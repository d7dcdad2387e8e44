//! Numerical core for the slicing agents: dense tensors, two-hidden-layer
//! MLPs with an explicit reverse pass, Adam, and the squashed Gaussian policy
//! head. Everything is generic over [`Real`] so the same loss code can be
//! trained in `f32` and gradient-checked in `f64`.

pub mod adam;
pub mod check;
pub mod gaussian;
pub mod mlp;
pub mod tensor;

pub use adam::Adam;
pub use mlp::{Mlp, MlpTape, HIDDEN_WIDTH};
pub use tensor::{gemm, Op, Real, Tensor};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum NnError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
}
