//! Norm-preserving activations, mean-only centering and 1-Lipschitz
//! residual wrappers.

mod activation;
mod centering;
mod residual;

pub use activation::{
    householder_unnormalized, reflection_selectors, Activation, SOFT_HUBER_DELTA,
};
pub use centering::{batch_center, layer_center, CenteringMode, RunningMean, DEFAULT_MOMENTUM};
pub use residual::{apply_residual, sigmoid, ResidualKind};
