use serde::{Deserialize, Serialize};

use crate::conv::{ConvSpec, Padding, PaddingMode};
use crate::error::{param_err, Error, Result};
use crate::ortho::OrthoParams;

/// Which side of the layer's operator must be orthonormal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Contract {
    /// Whichever of isometry / co-isometry the channel counts allow.
    #[default]
    Auto,
    /// `TᵀT = I`: norm preserving on inputs.
    Isometry,
    /// `TTᵀ = I`: orthonormal rows.
    CoIsometry,
}

/// Shape and hyperparameters of one constrained convolution layer.
///
/// `c_in`/`c_out` refer to the applied map, so a transposed layer consumes
/// `c_in` channels and produces `c_out` channels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConvLayerConfig {
    pub c_in: usize,
    pub c_out: usize,
    pub kernel_size: usize,
    pub stride: usize,
    pub dilation: usize,
    pub groups: usize,
    pub transposed: bool,
    pub padding_mode: PaddingMode,
    pub ortho: OrthoParams,
    pub soc_terms: usize,
    pub aol_steps: usize,
    pub contract: Contract,
}

impl Default for ConvLayerConfig {
    fn default() -> Self {
        Self {
            c_in: 4,
            c_out: 4,
            kernel_size: 3,
            stride: 1,
            dilation: 1,
            groups: 1,
            transposed: false,
            padding_mode: PaddingMode::Circular,
            ortho: OrthoParams {
                iterations: 40,
                ..OrthoParams::default()
            },
            soc_terms: 8,
            aol_steps: 1,
            contract: Contract::Auto,
        }
    }
}

/// Channel bookkeeping of the forward kernel of one group.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GroupDims {
    /// Input channels of the forward kernel, per group.
    pub fin: usize,
    /// Output channels of the forward kernel, per group.
    pub fout: usize,
    /// Whether the forward kernel is built as an isometry (else a co-isometry).
    pub isometric: bool,
}

impl ConvLayerConfig {
    pub fn new(c_in: usize, c_out: usize, kernel_size: usize) -> Self {
        Self {
            c_in,
            c_out,
            kernel_size,
            ..Self::default()
        }
    }

    pub fn with_stride(mut self, s: usize) -> Self {
        self.stride = s;
        self
    }

    pub fn with_dilation(mut self, d: usize) -> Self {
        self.dilation = d;
        self
    }

    pub fn with_groups(mut self, g: usize) -> Self {
        self.groups = g;
        self
    }

    pub fn with_mode(mut self, m: PaddingMode) -> Self {
        self.padding_mode = m;
        self
    }

    pub fn with_transposed(mut self, t: bool) -> Self {
        self.transposed = t;
        self
    }

    pub fn with_contract(mut self, c: Contract) -> Self {
        self.contract = c;
        self
    }

    /// Structural checks only; see `verify::existence_check` for feasibility.
    pub fn validate(&self) -> Result<()> {
        if self.c_in == 0 || self.c_out == 0 || self.kernel_size == 0 {
            return param_err("channels and kernel size must be positive");
        }
        if self.stride == 0 || self.dilation == 0 || self.groups == 0 {
            return param_err("stride, dilation and groups must be positive");
        }
        if !self.c_in.is_multiple_of(self.groups) || !self.c_out.is_multiple_of(self.groups) {
            return param_err(format!(
                "groups {} must divide c_in {} and c_out {}",
                self.groups, self.c_in, self.c_out
            ));
        }
        if self.transposed && self.padding_mode == PaddingMode::Circular {
            return Err(Error::CircularTransposed);
        }
        if self.soc_terms == 0 || self.aol_steps == 0 {
            return param_err("soc_terms and aol_steps must be at least 1");
        }
        self.ortho.validate()
    }

    /// Channels of the forward kernel: `(fin, fout)` in total.
    pub fn forward_channels(&self) -> (usize, usize) {
        if self.transposed {
            (self.c_out, self.c_in)
        } else {
            (self.c_in, self.c_out)
        }
    }

    /// Whether the applied map can be an isometry / a co-isometry on an
    /// unbounded (or circular) domain.
    pub fn feasible(&self) -> (bool, bool) {
        let s2 = self.stride * self.stride;
        if self.transposed {
            (self.c_out * s2 >= self.c_in, self.c_out * s2 <= self.c_in)
        } else {
            (self.c_out >= self.c_in * s2, self.c_out <= self.c_in * s2)
        }
    }

    pub fn group_dims(&self) -> GroupDims {
        let (fin, fout) = self.forward_channels();
        let (fin, fout) = (fin / self.groups, fout / self.groups);
        let s2 = self.stride * self.stride;
        // the applied map of a transposed layer is the adjoint of the forward
        // kernel; on ties Auto makes the applied map the norm-preserving one
        let isometric = match (self.contract, self.transposed) {
            (Contract::Auto, false) => fout >= fin * s2,
            (Contract::Auto, true) => fout > fin * s2,
            (Contract::Isometry, false) | (Contract::CoIsometry, true) => true,
            (Contract::Isometry, true) | (Contract::CoIsometry, false) => false,
        };
        GroupDims {
            fin,
            fout,
            isometric,
        }
    }

    /// Convolution spec for a kernel of spatial size `kh × kw` built for
    /// this layer.
    ///
    /// Circular layers pad by `extent - stride` in total. Zero-padded layers
    /// cannot keep the spatial size and stay orthogonal, so an isometric
    /// forward map gets full padding (`extent - 1` per side, every nonzero
    /// output kept) and a co-isometric one gets none (only outputs whose
    /// receptive field lies inside the input).
    pub fn conv_spec(&self, kh: usize, kw: usize) -> ConvSpec {
        let base = ConvSpec::default()
            .with_stride(self.stride)
            .with_dilation(self.dilation)
            .with_groups(self.groups)
            .with_mode(self.padding_mode)
            .with_transposed(self.transposed);
        let (eh, ew) = base.extent(kh, kw);
        let padding = match self.padding_mode {
            PaddingMode::Circular => Padding::split(
                eh.saturating_sub(self.stride),
                ew.saturating_sub(self.stride),
            ),
            PaddingMode::Zero if self.group_dims().isometric => Padding {
                top: eh - 1,
                bottom: eh - 1,
                left: ew - 1,
                right: ew - 1,
            },
            PaddingMode::Zero => Padding::default(),
        };
        base.with_padding(padding)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transposed_swaps_forward_channels() {
        let cfg = ConvLayerConfig::new(8, 4, 3)
            .with_stride(2)
            .with_mode(PaddingMode::Zero)
            .with_transposed(true);
        assert_eq!(cfg.forward_channels(), (4, 8));
        let d = cfg.group_dims();
        assert!(!d.isometric);
        assert_eq!(cfg.feasible(), (true, false));
    }

    #[test]
    fn circular_padding_keeps_size_over_stride() {
        let cfg = ConvLayerConfig::new(4, 8, 3).with_stride(2);
        let spec = cfg.conv_spec(3, 3);
        assert_eq!(spec.forward_size(3, 3, 8, 8).unwrap(), (4, 4));
        let cfg = ConvLayerConfig::new(4, 4, 5).with_dilation(2);
        let spec = cfg.conv_spec(5, 5);
        assert_eq!(spec.forward_size(5, 5, 8, 8).unwrap(), (8, 8));
    }

    #[test]
    fn rejects_non_dividing_groups() {
        assert!(ConvLayerConfig::new(4, 6, 3)
            .with_groups(4)
            .validate()
            .is_err());
        assert!(ConvLayerConfig::new(4, 8, 3)
            .with_groups(2)
            .validate()
            .is_ok());
    }
}
