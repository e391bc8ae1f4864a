//! Orthogonal and 1-Lipschitz linear maps and convolutions, with independent
//! spectral verification.

// NaN has to fail the `!(x <= tol)` style checks
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod blocks;
pub mod cli;
pub mod conv;
pub mod error;
pub mod fuse;
pub mod linalg;
pub mod ortho;
pub mod orthoconv;
pub mod suite;
pub mod tensor;
pub mod verify;

pub use conv::{ConvSpec, Padding, PaddingMode};
pub use error::{Error, Result};
pub use ortho::{OrthoMethod, OrthoParams};
pub use orthoconv::{ConvLayerConfig, FreeParams};
pub use tensor::{FeatureMap, Matrix, Tensor4};
