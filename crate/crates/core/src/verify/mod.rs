//! Spectral certification of layers: explicit Toeplitz SVD, per-frequency
//! FFT spectra, Gram-iteration upper bounds, power iteration and
//! finite-difference Jacobians.

mod existence;
mod gram;
mod jacobian;
mod power;
mod report;
mod spectrum;

pub use existence::{
    existence_check, existence_check_with, Existence, ExistenceRule, RejectCode, Rejection,
};
pub use gram::{gram_bound, gram_bound_sequence};
pub use jacobian::{
    finite_difference_jacobian, jacobian_spectral_check, sample_points, FD_STEP, JACOBIAN_TOLERANCE,
};
pub use power::{apply_adjoint, operator_power_iteration, POWER_BLOCK};
pub use report::{Requirement, SpectrumMethod, SpectrumReport, Verdict};
pub use spectrum::{fft_circular_spectrum, toeplitz_svd_spectrum, DEFAULT_TOLERANCE};

/// Tolerance used for the exponential-series (SOC) family.
pub const SOC_TOLERANCE: f64 = 5e-3;
