//! Dense row-major `f64` tensors and the 2-d kernels shared by every layer.
//!
//! Images and feature maps use channel-major `(C, H, W)` ordering.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::invalid(format!(
                "tensor extents must be positive, got {shape:?}"
            )));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::invalid(format!(
                "shape {shape:?} needs {expected} elements, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::filled(shape, 0.0)
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    /// Builds a 1-d tensor. An empty slice yields a zero-length vector, which is
    /// only meaningful as a concatenation operand.
    pub fn from_vec(data: Vec<f64>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    /// Builds a 2-d tensor from rows of equal length.
    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let h = rows.len();
        let w = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != w) {
            return Err(Error::invalid("ragged rows"));
        }
        Self::new(vec![h, w], rows.iter().flat_map(|r| r.iter().copied()).collect())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(Error::invalid(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            )));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn flatten(self) -> Self {
        let n = self.data.len();
        Self {
            shape: vec![n],
            data: self.data,
        }
    }

    /// `(C, H, W)` extents of a 3-d tensor.
    pub fn chw(&self) -> Result<(usize, usize, usize)> {
        match *self.shape.as_slice() {
            [c, h, w] => Ok((c, h, w)),
            _ => Err(Error::invalid(format!(
                "expected a C×H×W tensor, got shape {:?}",
                self.shape
            ))),
        }
    }

    /// `(H, W)` extents of a 2-d tensor.
    pub fn hw(&self) -> Result<(usize, usize)> {
        match *self.shape.as_slice() {
            [h, w] => Ok((h, w)),
            _ => Err(Error::invalid(format!(
                "expected an H×W tensor, got shape {:?}",
                self.shape
            ))),
        }
    }

    /// Channel `c` of a 3-d tensor as a flat `H*W` slice.
    pub fn channel(&self, c: usize) -> &[f64] {
        let plane = self.shape[1] * self.shape[2];
        &self.data[c * plane..(c + 1) * plane]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        let plane = self.shape[1] * self.shape[2];
        &mut self.data[c * plane..(c + 1) * plane]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        assert_eq!(self.shape, other.shape, "shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub(crate) fn ensure_shape(&self, shape: &[usize], what: &str) -> Result<()> {
        if self.shape != shape {
            return Err(Error::invalid(format!(
                "{what}: expected shape {shape:?}, got {:?}",
                self.shape
            )));
        }
        Ok(())
    }
}

/// A normalized, strictly positive 2-d Gaussian window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianKernel {
    size: usize,
    sigma: f64,
    weights: Tensor,
}

impl GaussianKernel {
    pub fn new(size: usize, sigma: f64) -> Result<Self> {
        gaussian_kernel(size, sigma)
    }

    /// Kernel with `sigma = max((k - 1) / 4, 0.25)`.
    pub fn with_default_sigma(size: usize) -> Result<Self> {
        gaussian_kernel(size, default_sigma(size))
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn weights(&self) -> &Tensor {
        &self.weights
    }
}

pub fn default_sigma(size: usize) -> f64 {
    ((size as f64 - 1.0) / 4.0).max(0.25)
}

pub fn gaussian_kernel(size: usize, sigma: f64) -> Result<GaussianKernel> {
    if size == 0 {
        return Err(Error::invalid("gaussian kernel size must be positive"));
    }
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::invalid(format!(
            "gaussian sigma must be positive and finite, got {sigma}"
        )));
    }
    let c = (size as f64 - 1.0) / 2.0;
    let denom = 2.0 * sigma * sigma;
    let mut w = Vec::with_capacity(size * size);
    for y in 0..size {
        for x in 0..size {
            let dy = y as f64 - c;
            let dx = x as f64 - c;
            w.push((-(dx * dx + dy * dy) / denom).exp());
        }
    }
    let total: f64 = w.iter().sum();
    for v in &mut w {
        *v /= total;
    }
    Ok(GaussianKernel {
        size,
        sigma,
        weights: Tensor::new(vec![size, size], w)?,
    })
}

/// Valid (unpadded) strided 2-d correlation.
pub fn correlate2d_valid(input: &Tensor, kernel: &Tensor, stride: (usize, usize)) -> Result<Tensor> {
    let (h, w) = input.hw()?;
    let (kh, kw) = kernel.hw()?;
    if stride.0 == 0 || stride.1 == 0 {
        return Err(Error::invalid("stride must be positive"));
    }
    if kh > h || kw > w {
        return Err(Error::invalid(format!(
            "kernel {kh}×{kw} larger than input {h}×{w}"
        )));
    }
    let oh = (h - kh) / stride.0 + 1;
    let ow = (w - kw) / stride.1 + 1;
    let mut out = vec![0.0; oh * ow];
    let (x, k) = (input.data(), kernel.data());
    for oy in 0..oh {
        for ox in 0..ow {
            let mut acc = 0.0;
            for ky in 0..kh {
                let row = (oy * stride.0 + ky) * w + ox * stride.1;
                let krow = ky * kw;
                for kx in 0..kw {
                    acc += k[krow + kx] * x[row + kx];
                }
            }
            out[oy * ow + ox] = acc;
        }
    }
    Tensor::new(vec![oh, ow], out)
}

/// Stride-1 valid correlation on raw planes, accumulated into `out`
/// (`(h - kh + 1) × (w - kw + 1)`). Rows are processed as contiguous
/// multiply-adds so the inner loop vectorizes.
pub(crate) fn correlate_valid_acc(
    input: &[f64],
    h: usize,
    w: usize,
    kernel: &[f64],
    kh: usize,
    kw: usize,
    out: &mut [f64],
) {
    let oh = h - kh + 1;
    let ow = w - kw + 1;
    debug_assert_eq!(out.len(), oh * ow);
    for ky in 0..kh {
        for kx in 0..kw {
            let wgt = kernel[ky * kw + kx];
            for oy in 0..oh {
                let src = &input[(oy + ky) * w + kx..(oy + ky) * w + kx + ow];
                let dst = &mut out[oy * ow..(oy + 1) * ow];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += wgt * s;
                }
            }
        }
    }
}

/// Reflects an index into `[0, n)` without repeating the edge sample.
#[inline]
pub(crate) fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let r = if i < 0 {
        -i
    } else if i >= n {
        2 * (n - 1) - i
    } else {
        i
    };
    r as usize
}

pub(crate) fn pad_mirror_plane(input: &[f64], h: usize, w: usize, pad: usize) -> Vec<f64> {
    let ph = h + 2 * pad;
    let pw = w + 2 * pad;
    let mut out = Vec::with_capacity(ph * pw);
    for y in 0..ph {
        let sy = reflect(y as isize - pad as isize, h);
        for x in 0..pw {
            let sx = reflect(x as isize - pad as isize, w);
            out.push(input[sy * w + sx]);
        }
    }
    out
}

/// Mirror padding that reflects the interior without repeating the border.
pub fn pad_mirror(input: &Tensor, pad: usize) -> Result<Tensor> {
    let (h, w) = input.hw()?;
    if pad >= h.min(w) {
        return Err(Error::invalid(format!(
            "mirror pad {pad} must be smaller than min extent {}",
            h.min(w)
        )));
    }
    Tensor::new(
        vec![h + 2 * pad, w + 2 * pad],
        pad_mirror_plane(input.data(), h, w, pad),
    )
}

/// Removes `pad` rows/columns from each border of a 2-d tensor.
pub fn center_crop(input: &Tensor, pad: usize) -> Result<Tensor> {
    let (h, w) = input.hw()?;
    if 2 * pad >= h || 2 * pad >= w {
        return Err(Error::invalid("crop removes the whole tensor"));
    }
    let (oh, ow) = (h - 2 * pad, w - 2 * pad);
    let mut out = Vec::with_capacity(oh * ow);
    for y in pad..pad + oh {
        out.extend_from_slice(&input.data()[y * w + pad..y * w + pad + ow]);
    }
    Tensor::new(vec![oh, ow], out)
}
