use serde::{Deserialize, Serialize};

use crate::error::{param_err, shape_err, Result};
use crate::tensor::FeatureMap;

/// Residual wrapper around a 1-Lipschitz map `f`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ResidualKind {
    /// `[f(x₁), x₂]` with the channels split in halves; `f` maps the first
    /// half to a map of the same shape.
    Concat,
    /// `√(½x² + ½f(x)² + ε)` elementwise.
    #[serde(rename = "l2norm")]
    L2Norm { epsilon: f64 },
    /// `g·x + (1 − g)·f(x)` with `g = sigmoid(alpha)`.
    Additive { alpha: f64 },
    /// `(x + f(alpha·x)) / (1 + |alpha|)`.
    PrescaledAdditive { alpha: f64 },
}

pub fn sigmoid(a: f64) -> f64 {
    if a >= 0.0 {
        1.0 / (1.0 + (-a).exp())
    } else {
        let e = a.exp();
        e / (1.0 + e)
    }
}

impl ResidualKind {
    pub fn name(&self) -> &'static str {
        match self {
            ResidualKind::Concat => "concat",
            ResidualKind::L2Norm { .. } => "l2norm",
            ResidualKind::Additive { .. } => "additive",
            ResidualKind::PrescaledAdditive { .. } => "prescaled_additive",
        }
    }
}

fn same_shape(a: &FeatureMap, b: &FeatureMap) -> Result<()> {
    if a.shape() != b.shape() {
        return shape_err(format!(
            "residual branch maps {:?} to {:?}",
            a.shape(),
            b.shape()
        ));
    }
    Ok(())
}

pub fn apply_residual<F>(kind: ResidualKind, x: &FeatureMap, f: F) -> Result<FeatureMap>
where
    F: Fn(&FeatureMap) -> Result<FeatureMap>,
{
    match kind {
        ResidualKind::Concat => {
            let c = x.channels();
            if !c.is_multiple_of(2) {
                return shape_err(format!(
                    "concat residual needs an even channel count, got {c}"
                ));
            }
            let (a, b) = (x.channel_slice(0, c / 2)?, x.channel_slice(c / 2, c)?);
            let fa = f(&a)?;
            same_shape(&a, &fa)?;
            FeatureMap::concat_channels(&fa, &b)
        }
        ResidualKind::L2Norm { epsilon } => {
            if !(epsilon.is_finite() && epsilon > 0.0) {
                return param_err(format!("l2norm epsilon must be positive, got {epsilon}"));
            }
            let fx = f(x)?;
            same_shape(x, &fx)?;
            x.zip_with(&fx, |a, b| (0.5 * a * a + 0.5 * b * b + epsilon).sqrt())
        }
        ResidualKind::Additive { alpha } => {
            if !alpha.is_finite() {
                return param_err(format!("non-finite gate {alpha}"));
            }
            let g = sigmoid(alpha);
            let fx = f(x)?;
            same_shape(x, &fx)?;
            x.zip_with(&fx, |a, b| g * a + (1.0 - g) * b)
        }
        ResidualKind::PrescaledAdditive { alpha } => {
            if !alpha.is_finite() {
                return param_err(format!("non-finite gate {alpha}"));
            }
            let fx = f(&x.scale(alpha))?;
            same_shape(x, &fx)?;
            let s = 1.0 / (1.0 + alpha.abs());
            x.zip_with(&fx, |a, b| (a + b) * s)
        }
    }
}
