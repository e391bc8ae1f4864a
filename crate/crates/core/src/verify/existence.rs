use serde::{Deserialize, Serialize};

use crate::orthoconv::{Contract, ConvLayerConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectCode {
    InvalidConfig,
    KernelSmallerThanStride,
    /// Orthonormal rows requested but the map has more outputs than inputs
    /// (`c_out > c_in · s²` for a forward layer).
    CoIsometryImpossible,
    /// Norm preservation requested but the map has fewer outputs than inputs.
    IsometryImpossible,
    /// Stride and dilation share a factor, so some output phases never see
    /// part of the input lattice.
    StrideDilationCommonFactor,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub code: RejectCode,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Existence {
    Accept,
    Reject(Rejection),
}

impl Existence {
    pub fn is_accept(&self) -> bool {
        matches!(self, Existence::Accept)
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn reject(code: RejectCode, reason: String) -> Existence {
    Existence::Reject(Rejection { code, reason })
}

/// Extra rule: `Some(rejection)` to refuse a config.
pub type ExistenceRule<'a> = &'a dyn Fn(&ConvLayerConfig) -> Option<Rejection>;

/// Whether an exactly orthogonal layer with this config can exist.
pub fn existence_check(cfg: &ConvLayerConfig) -> Existence {
    existence_check_with(cfg, &[])
}

pub fn existence_check_with(cfg: &ConvLayerConfig, extra: &[ExistenceRule<'_>]) -> Existence {
    if let Err(e) = cfg.validate() {
        return reject(RejectCode::InvalidConfig, e.to_string());
    }
    let (k, s) = (cfg.kernel_size, cfg.stride);
    if k < s {
        return reject(
            RejectCode::KernelSmallerThanStride,
            format!("kernel size {k} < stride {s}"),
        );
    }
    let (iso_ok, coiso_ok) = cfg.feasible();
    let (ci, co, s2) = (cfg.c_in, cfg.c_out, s * s);
    let dims = if cfg.transposed {
        format!("c_in {ci}, c_out {co}, stride^2 {s2} (transposed)")
    } else {
        format!("c_in {ci}, c_out {co}, stride^2 {s2}")
    };
    match cfg.contract {
        Contract::CoIsometry if !coiso_ok => {
            return reject(
                RejectCode::CoIsometryImpossible,
                format!("orthonormal rows impossible with more outputs than inputs: {dims}"),
            );
        }
        Contract::Isometry if !iso_ok => {
            return reject(
                RejectCode::IsometryImpossible,
                format!("norm preservation impossible with fewer outputs than inputs: {dims}"),
            );
        }
        _ => {}
    }
    if s > 1 && gcd(s, cfg.dilation) > 1 {
        return reject(
            RejectCode::StrideDilationCommonFactor,
            format!("stride {s} and dilation {} share a factor", cfg.dilation),
        );
    }
    for rule in extra {
        if let Some(r) = rule(cfg) {
            return Existence::Reject(r);
        }
    }
    Existence::Accept
}
