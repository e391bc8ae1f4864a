//! Reference convolution arithmetic.
//!
//! Convolutions are cross-correlations (no kernel flip): for output position
//! `o` the input is read at `o * stride + tap * dilation - pad_before`.
//! Out-of-range reads are zero under [`PaddingMode::Zero`] and wrap modulo the
//! input size under [`PaddingMode::Circular`]; circular reads may wrap more
//! than once, so kernels larger than the image are allowed.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{param_err, shape_err, Error, Result};
use crate::tensor::{FeatureMap, Matrix, Tensor4};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PaddingMode {
    #[default]
    Zero,
    Circular,
}

/// Per-side padding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct Padding {
    pub top: usize,
    pub bottom: usize,
    pub left: usize,
    pub right: usize,
}

impl Padding {
    pub fn uniform(p: usize) -> Self {
        Self {
            top: p,
            bottom: p,
            left: p,
            right: p,
        }
    }

    /// Total padding `total` split with the smaller half first.
    pub fn split(total_h: usize, total_w: usize) -> Self {
        Self {
            top: total_h / 2,
            bottom: total_h - total_h / 2,
            left: total_w / 2,
            right: total_w - total_w / 2,
        }
    }

    pub fn plus(self, o: Padding) -> Self {
        Self {
            top: self.top + o.top,
            bottom: self.bottom + o.bottom,
            left: self.left + o.left,
            right: self.right + o.right,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub stride: (usize, usize),
    pub dilation: (usize, usize),
    pub groups: usize,
    pub padding_mode: PaddingMode,
    pub padding: Padding,
    pub transposed: bool,
    /// Extra rows/cols appended to a transposed output; must be below the stride.
    #[serde(default)]
    pub output_padding: (usize, usize),
}

impl Default for ConvSpec {
    fn default() -> Self {
        Self {
            stride: (1, 1),
            dilation: (1, 1),
            groups: 1,
            padding_mode: PaddingMode::Zero,
            padding: Padding::default(),
            transposed: false,
            output_padding: (0, 0),
        }
    }
}

impl ConvSpec {
    pub fn with_stride(mut self, s: usize) -> Self {
        self.stride = (s, s);
        self
    }

    pub fn with_dilation(mut self, d: usize) -> Self {
        self.dilation = (d, d);
        self
    }

    pub fn with_groups(mut self, g: usize) -> Self {
        self.groups = g;
        self
    }

    pub fn with_padding(mut self, p: Padding) -> Self {
        self.padding = p;
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

    /// "Same" padding for stride 1: total `extent - 1` per axis.
    pub fn same(kh: usize, kw: usize, mode: PaddingMode) -> Self {
        Self::default()
            .with_mode(mode)
            .with_padding(Padding::split(kh - 1, kw - 1))
    }

    /// Effective (dilated) kernel extent.
    pub fn extent(&self, kh: usize, kw: usize) -> (usize, usize) {
        (
            (kh - 1) * self.dilation.0 + 1,
            (kw - 1) * self.dilation.1 + 1,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.stride.0 == 0 || self.stride.1 == 0 {
            return param_err("stride must be positive");
        }
        if self.dilation.0 == 0 || self.dilation.1 == 0 {
            return param_err("dilation must be positive");
        }
        if self.groups == 0 {
            return param_err("groups must be positive");
        }
        if self.transposed && self.padding_mode == PaddingMode::Circular {
            return Err(Error::CircularTransposed);
        }
        if self.output_padding.0 >= self.stride.0 || self.output_padding.1 >= self.stride.1 {
            return param_err("output_padding must be smaller than the stride");
        }
        Ok(())
    }

    /// Spatial output size of the forward correlation for an `h × w` input.
    pub fn forward_size(&self, kh: usize, kw: usize, h: usize, w: usize) -> Result<(usize, usize)> {
        let (eh, ew) = self.extent(kh, kw);
        let ph = h + self.padding.top + self.padding.bottom;
        let pw = w + self.padding.left + self.padding.right;
        if ph < eh || pw < ew {
            return shape_err(format!(
                "padded input {ph}x{pw} smaller than effective kernel {eh}x{ew}"
            ));
        }
        Ok(((ph - eh) / self.stride.0 + 1, (pw - ew) / self.stride.1 + 1))
    }

    /// Spatial output size of the transposed convolution for an `h × w` input.
    pub fn transposed_size(
        &self,
        kh: usize,
        kw: usize,
        h: usize,
        w: usize,
    ) -> Result<(usize, usize)> {
        let (eh, ew) = self.extent(kh, kw);
        let oh = ((h - 1) * self.stride.0 + eh + self.output_padding.0) as isize
            - (self.padding.top + self.padding.bottom) as isize;
        let ow = ((w - 1) * self.stride.1 + ew + self.output_padding.1) as isize
            - (self.padding.left + self.padding.right) as isize;
        if oh < 1 || ow < 1 {
            return shape_err("transposed convolution output would be empty");
        }
        Ok((oh as usize, ow as usize))
    }

    /// Output shape of whichever direction `transposed` selects.
    pub fn output_shape(&self, k: &Tensor4, in_shape: [usize; 3]) -> Result<[usize; 3]> {
        self.validate()?;
        check_channels(k, self, in_shape[0])?;
        let [_, h, w] = in_shape;
        if self.transposed {
            let (oh, ow) = self.transposed_size(k.kh(), k.kw(), h, w)?;
            Ok([k.c_in() * self.groups, oh, ow])
        } else {
            let (oh, ow) = self.forward_size(k.kh(), k.kw(), h, w)?;
            Ok([k.c_out(), oh, ow])
        }
    }
}

fn check_channels(k: &Tensor4, spec: &ConvSpec, c_in: usize) -> Result<()> {
    let g = spec.groups;
    if !k.c_out().is_multiple_of(g) {
        return shape_err(format!(
            "groups {g} do not divide kernel output channels {}",
            k.c_out()
        ));
    }
    let expected = if spec.transposed {
        k.c_out()
    } else {
        k.c_in() * g
    };
    if c_in != expected {
        return shape_err(format!(
            "input has {c_in} channels, kernel {:?} with {g} groups expects {expected}",
            k.shape()
        ));
    }
    Ok(())
}

#[inline]
fn wrap(i: isize, n: usize) -> usize {
    i.rem_euclid(n as isize) as usize
}

/// Strided, dilated, grouped cross-correlation.
///
/// The `transposed` flag of `spec` is ignored here, except that
/// circular+transposed is still rejected.
pub fn conv2d_forward(x: &FeatureMap, k: &Tensor4, spec: &ConvSpec) -> Result<FeatureMap> {
    if spec.padding_mode == PaddingMode::Circular && spec.transposed {
        return Err(Error::CircularTransposed);
    }
    let spec = ConvSpec {
        transposed: false,
        ..*spec
    };
    spec.validate()?;
    check_channels(k, &spec, x.channels())?;
    let [_, h, w] = x.shape();
    let (oh, ow) = spec.forward_size(k.kh(), k.kw(), h, w)?;
    let (co, cig) = (k.c_out(), k.c_in());
    let cog = co / spec.groups;
    let (sh, sw) = spec.stride;
    let (dh, dw) = spec.dilation;
    let (top, left) = (spec.padding.top as isize, spec.padding.left as isize);
    let circular = spec.padding_mode == PaddingMode::Circular;

    let mut out = FeatureMap::zeros([co, oh, ow])?;
    let plane = oh * ow;
    out.data_mut()
        .par_chunks_mut(plane)
        .enumerate()
        .for_each(|(oc, dst)| {
            let g = oc / cog;
            for icl in 0..cig {
                let ic = g * cig + icl;
                for ky in 0..k.kh() {
                    for kx in 0..k.kw() {
                        let wv = k.at(oc, icl, ky, kx);
                        if wv == 0.0 {
                            continue;
                        }
                        for oy in 0..oh {
                            let iy = (oy * sh + ky * dh) as isize - top;
                            let iy = if circular {
                                wrap(iy, h)
                            } else if iy < 0 || iy >= h as isize {
                                continue;
                            } else {
                                iy as usize
                            };
                            for ox in 0..ow {
                                let ix = (ox * sw + kx * dw) as isize - left;
                                let ix = if circular {
                                    wrap(ix, w)
                                } else if ix < 0 || ix >= w as isize {
                                    continue;
                                } else {
                                    ix as usize
                                };
                                dst[oy * ow + ox] += wv * x.at(ic, iy, ix);
                            }
                        }
                    }
                }
            }
        });
    Ok(out)
}

/// Transposed convolution: the exact adjoint of [`conv2d_forward`] with the
/// same kernel and spec. Input channels are `k.c_out()`, output channels
/// `k.c_in() * groups`.
pub fn conv_transpose2d_forward(
    y: &FeatureMap,
    k: &Tensor4,
    spec: &ConvSpec,
) -> Result<FeatureMap> {
    if spec.padding_mode == PaddingMode::Circular {
        return Err(Error::CircularTransposed);
    }
    let spec = ConvSpec {
        transposed: true,
        ..*spec
    };
    spec.validate()?;
    check_channels(k, &spec, y.channels())?;
    let [_, hy, wy] = y.shape();
    let (h, w) = spec.transposed_size(k.kh(), k.kw(), hy, wy)?;
    adjoint_into(y, k, &spec, h, w)
}

/// Adjoint of the correlation evaluated onto an `h × w` input grid; handles
/// both padding modes (circular only for internal use by SLL-type blocks).
pub(crate) fn adjoint_into(
    y: &FeatureMap,
    k: &Tensor4,
    spec: &ConvSpec,
    h: usize,
    w: usize,
) -> Result<FeatureMap> {
    let (co, cig) = (k.c_out(), k.c_in());
    if y.channels() != co {
        return shape_err(format!(
            "adjoint input has {} channels, kernel expects {co}",
            y.channels()
        ));
    }
    let g_count = spec.groups;
    let cog = co / g_count;
    let [_, hy, wy] = y.shape();
    let (sh, sw) = spec.stride;
    let (dh, dw) = spec.dilation;
    let (top, left) = (spec.padding.top as isize, spec.padding.left as isize);
    let circular = spec.padding_mode == PaddingMode::Circular;
    let ci = cig * g_count;
    let mut out = FeatureMap::zeros([ci, h, w])?;
    let plane = h * w;
    out.data_mut()
        .par_chunks_mut(plane)
        .enumerate()
        .for_each(|(ic, dst)| {
            let g = ic / cig;
            let icl = ic % cig;
            for ocl in 0..cog {
                let oc = g * cog + ocl;
                for ky in 0..k.kh() {
                    for kx in 0..k.kw() {
                        let wv = k.at(oc, icl, ky, kx);
                        if wv == 0.0 {
                            continue;
                        }
                        for oy in 0..hy {
                            let iy = (oy * sh + ky * dh) as isize - top;
                            let iy = if circular {
                                wrap(iy, h)
                            } else if iy < 0 || iy >= h as isize {
                                continue;
                            } else {
                                iy as usize
                            };
                            for ox in 0..wy {
                                let ix = (ox * sw + kx * dw) as isize - left;
                                let ix = if circular {
                                    wrap(ix, w)
                                } else if ix < 0 || ix >= w as isize {
                                    continue;
                                } else {
                                    ix as usize
                                };
                                dst[iy * w + ix] += wv * y.at(oc, oy, ox);
                            }
                        }
                    }
                }
            }
        });
    Ok(out)
}

/// Apply in the direction selected by `spec.transposed`.
pub fn apply(x: &FeatureMap, k: &Tensor4, spec: &ConvSpec) -> Result<FeatureMap> {
    if spec.transposed {
        conv_transpose2d_forward(x, k, spec)
    } else {
        conv2d_forward(x, k, spec)
    }
}

/// Dense matrix `M` with `flatten(apply(x)) = M · flatten(x)`, assembled one
/// column per unit impulse.
pub fn toeplitz_assemble(k: &Tensor4, spec: &ConvSpec, in_shape: [usize; 3]) -> Result<Matrix> {
    let out_shape = spec.output_shape(k, in_shape)?;
    let n_in: usize = in_shape.iter().product();
    let n_out: usize = out_shape.iter().product();
    let columns: Vec<Result<Vec<f64>>> = (0..n_in)
        .into_par_iter()
        .map(|j| {
            let mut e = FeatureMap::zeros(in_shape)?;
            e.data_mut()[j] = 1.0;
            Ok(apply(&e, k, spec)?.into_vec())
        })
        .collect();
    let mut m = Matrix::zeros(n_out, n_in);
    for (j, col) in columns.into_iter().enumerate() {
        let col = col?;
        m.column_mut(j).copy_from_slice(&col);
    }
    Ok(m)
}

/// Kernel of the adjoint map written as a forward correlation: channels
/// swapped within each group and both spatial axes flipped. For stride 1 and
/// padding `p`, correlating with the result under padding `extent - 1 - p`
/// reproduces [`conv_transpose2d_forward`].
pub fn transpose_kernel(k: &Tensor4, groups: usize) -> Result<Tensor4> {
    let [co, cig, kh, kw] = k.shape();
    if co % groups != 0 {
        return shape_err("groups must divide output channels");
    }
    let cog = co / groups;
    let mut t = Tensor4::zeros([cig * groups, cog, kh, kw])?;
    for g in 0..groups {
        for ocl in 0..cog {
            for icl in 0..cig {
                for y in 0..kh {
                    for x in 0..kw {
                        *t.at_mut(g * cig + icl, ocl, kh - 1 - y, kw - 1 - x) =
                            k.at(g * cog + ocl, icl, y, x);
                    }
                }
            }
        }
    }
    Ok(t)
}

/// Padding of the adjoint correlation: `extent - 1 - p` per side.
pub fn adjoint_padding(k: &Tensor4, spec: &ConvSpec) -> Padding {
    let (eh, ew) = spec.extent(k.kh(), k.kw());
    Padding {
        top: eh - 1 - spec.padding.top.min(eh - 1),
        bottom: eh - 1 - spec.padding.bottom.min(eh - 1),
        left: ew - 1 - spec.padding.left.min(ew - 1),
        right: ew - 1 - spec.padding.right.min(ew - 1),
    }
}
