//! Dense containers: rank-4 kernels, rank-3 feature maps and dense matrices.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{param_err, shape_err, Result};

/// Dense real matrix used for dense weights and Toeplitz operators.
pub type Matrix = nalgebra::DMatrix<f64>;

/// Convolution kernel laid out as `(c_out, c_in_per_group, k_h, k_w)`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor4 {
    shape: [usize; 4],
    data: Vec<f64>,
}

impl Tensor4 {
    pub fn zeros(shape: [usize; 4]) -> Result<Self> {
        check_dims(&shape)?;
        Ok(Self {
            shape,
            data: vec![0.0; shape.iter().product()],
        })
    }

    pub fn from_vec(shape: [usize; 4], data: Vec<f64>) -> Result<Self> {
        check_dims(&shape)?;
        if data.len() != shape.iter().product::<usize>() {
            return shape_err(format!(
                "tensor of shape {:?} needs {} values, got {}",
                shape,
                shape.iter().product::<usize>(),
                data.len()
            ));
        }
        Ok(Self { shape, data })
    }

    /// Standard normal entries scaled by `scale`.
    pub fn random<R: Rng + ?Sized>(shape: [usize; 4], scale: f64, rng: &mut R) -> Result<Self> {
        check_dims(&shape)?;
        let n = shape.iter().product();
        let data = (0..n)
            .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Ok(Self { shape, data })
    }

    /// 1×1 kernel holding `m` (rows = output channels).
    pub fn from_matrix(m: &Matrix) -> Self {
        let (r, c) = m.shape();
        let mut t = Self {
            shape: [r, c, 1, 1],
            data: vec![0.0; r * c],
        };
        for i in 0..r {
            for j in 0..c {
                t.data[i * c + j] = m[(i, j)];
            }
        }
        t
    }

    /// Kernel whose convolution is the identity: a centered delta on `c` channels.
    /// Even sizes place the tap at `(k - 1) / 2`.
    pub fn identity(c: usize, k: usize) -> Self {
        let mut t = Self {
            shape: [c, c, k, k],
            data: vec![0.0; c * c * k * k],
        };
        let m = (k - 1) / 2;
        for i in 0..c {
            *t.at_mut(i, i, m, m) = 1.0;
        }
        t
    }

    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    pub fn c_out(&self) -> usize {
        self.shape[0]
    }

    pub fn c_in(&self) -> usize {
        self.shape[1]
    }

    pub fn kh(&self) -> usize {
        self.shape[2]
    }

    pub fn kw(&self) -> usize {
        self.shape[3]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    fn idx(&self, o: usize, i: usize, y: usize, x: usize) -> usize {
        ((o * self.shape[1] + i) * self.shape[2] + y) * self.shape[3] + x
    }

    #[inline]
    pub fn at(&self, o: usize, i: usize, y: usize, x: usize) -> f64 {
        self.data[self.idx(o, i, y, x)]
    }

    #[inline]
    pub fn at_mut(&mut self, o: usize, i: usize, y: usize, x: usize) -> &mut f64 {
        let k = self.idx(o, i, y, x);
        &mut self.data[k]
    }

    /// Spatial tap `(y, x)` as a `c_out × c_in` matrix.
    pub fn tap(&self, y: usize, x: usize) -> Matrix {
        Matrix::from_fn(self.shape[0], self.shape[1], |o, i| self.at(o, i, y, x))
    }

    /// The 1×1 kernel as a matrix.
    pub fn as_matrix(&self) -> Result<Matrix> {
        if self.kh() != 1 || self.kw() != 1 {
            return shape_err(format!("expected a 1x1 kernel, got {:?}", self.shape));
        }
        Ok(self.tap(0, 0))
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            shape: self.shape,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.shape, other.shape);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Rows `[start, end)` of the output-channel axis.
    pub fn slice_out(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.shape[0] {
            return shape_err(format!("output slice {start}..{end} of {}", self.shape[0]));
        }
        let block = self.shape[1] * self.shape[2] * self.shape[3];
        Ok(Self {
            shape: [end - start, self.shape[1], self.shape[2], self.shape[3]],
            data: self.data[start * block..end * block].to_vec(),
        })
    }

    /// Columns `[start, end)` of the input-channel axis.
    pub fn slice_in(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.shape[1] {
            return shape_err(format!("input slice {start}..{end} of {}", self.shape[1]));
        }
        let [o, _, kh, kw] = self.shape;
        let mut t = Self::zeros([o, end - start, kh, kw])?;
        for a in 0..o {
            for b in start..end {
                for y in 0..kh {
                    for x in 0..kw {
                        *t.at_mut(a, b - start, y, x) = self.at(a, b, y, x);
                    }
                }
            }
        }
        Ok(t)
    }

    /// Stack kernels along the output-channel axis.
    pub fn concat_out(parts: &[Tensor4]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| crate::Error::Shape("empty concat".into()))?;
        let [_, i, kh, kw] = first.shape;
        let mut data = Vec::new();
        let mut o = 0;
        for p in parts {
            if p.shape[1..] != [i, kh, kw] {
                return shape_err(format!("concat_out: {:?} vs {:?}", p.shape, first.shape));
            }
            o += p.shape[0];
            data.extend_from_slice(&p.data);
        }
        Self::from_vec([o, i, kh, kw], data)
    }

    /// Embed into a larger spatial window, placing the original taps at `(off_y, off_x)`.
    pub fn pad_spatial(&self, kh: usize, kw: usize, off_y: usize, off_x: usize) -> Result<Self> {
        if off_y + self.kh() > kh || off_x + self.kw() > kw {
            return shape_err("pad_spatial target too small");
        }
        let mut t = Self::zeros([self.shape[0], self.shape[1], kh, kw])?;
        for o in 0..self.shape[0] {
            for i in 0..self.shape[1] {
                for y in 0..self.kh() {
                    for x in 0..self.kw() {
                        *t.at_mut(o, i, y + off_y, x + off_x) = self.at(o, i, y, x);
                    }
                }
            }
        }
        Ok(t)
    }

    /// Elementwise sum of kernels with equal shape.
    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.shape != other.shape {
            return shape_err(format!("add: {:?} vs {:?}", self.shape, other.shape));
        }
        Ok(Self {
            shape: self.shape,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    /// Materialize dilation: taps spread `d` apart, zeros in between.
    pub fn dilate(&self, dh: usize, dw: usize) -> Result<Self> {
        if dh == 0 || dw == 0 {
            return param_err("dilation must be positive");
        }
        let [o, i, kh, kw] = self.shape;
        let (eh, ew) = ((kh - 1) * dh + 1, (kw - 1) * dw + 1);
        let mut t = Self::zeros([o, i, eh, ew])?;
        for a in 0..o {
            for b in 0..i {
                for y in 0..kh {
                    for x in 0..kw {
                        *t.at_mut(a, b, y * dh, x * dw) = self.at(a, b, y, x);
                    }
                }
            }
        }
        Ok(t)
    }
}

fn check_dims(shape: &[usize]) -> Result<()> {
    if shape.contains(&0) {
        return shape_err(format!("all dimensions must be >= 1, got {shape:?}"));
    }
    Ok(())
}

/// Feature map laid out as `(c, h, w)`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMap {
    shape: [usize; 3],
    data: Vec<f64>,
}

impl FeatureMap {
    pub fn zeros(shape: [usize; 3]) -> Result<Self> {
        check_dims(&shape)?;
        Ok(Self {
            shape,
            data: vec![0.0; shape.iter().product()],
        })
    }

    pub fn from_vec(shape: [usize; 3], data: Vec<f64>) -> Result<Self> {
        check_dims(&shape)?;
        if data.len() != shape.iter().product::<usize>() {
            return shape_err(format!(
                "feature map {:?} needs {} values, got {}",
                shape,
                shape.iter().product::<usize>(),
                data.len()
            ));
        }
        Ok(Self { shape, data })
    }

    pub fn filled(shape: [usize; 3], v: f64) -> Result<Self> {
        check_dims(&shape)?;
        Ok(Self {
            shape,
            data: vec![v; shape.iter().product()],
        })
    }

    pub fn random<R: Rng + ?Sized>(shape: [usize; 3], rng: &mut R) -> Result<Self> {
        check_dims(&shape)?;
        let n = shape.iter().product();
        Ok(Self {
            shape,
            data: (0..n).map(|_| rng.sample(StandardNormal)).collect(),
        })
    }

    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    pub fn channels(&self) -> usize {
        self.shape[0]
    }

    pub fn height(&self) -> usize {
        self.shape[1]
    }

    pub fn width(&self) -> usize {
        self.shape[2]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn at(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.shape[1] + y) * self.shape[2] + x]
    }

    #[inline]
    pub fn at_mut(&mut self, c: usize, y: usize, x: usize) -> &mut f64 {
        let k = (c * self.shape[1] + y) * self.shape[2] + x;
        &mut self.data[k]
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.shape != other.shape {
            return shape_err(format!(
                "elementwise op on {:?} and {:?}",
                self.shape, other.shape
            ));
        }
        Ok(Self {
            shape: self.shape,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|v| v * s)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.shape, other.shape);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Channels `[start, end)`.
    pub fn channel_slice(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.shape[0] {
            return shape_err(format!("channel slice {start}..{end} of {}", self.shape[0]));
        }
        let plane = self.shape[1] * self.shape[2];
        Self::from_vec(
            [end - start, self.shape[1], self.shape[2]],
            self.data[start * plane..end * plane].to_vec(),
        )
    }

    pub fn concat_channels(a: &Self, b: &Self) -> Result<Self> {
        if a.shape[1..] != b.shape[1..] {
            return shape_err(format!("concat {:?} with {:?}", a.shape, b.shape));
        }
        let mut data = a.data.clone();
        data.extend_from_slice(&b.data);
        Self::from_vec([a.shape[0] + b.shape[0], a.shape[1], a.shape[2]], data)
    }
}
