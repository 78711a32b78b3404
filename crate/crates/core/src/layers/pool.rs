//! Lp pooling: a Gaussian-weighted power mean over each strided window,
//!
//! ```text
//! O = (ΣΣ |I(i,j)|^p · G(i,j))^(1/p)
//! ```
//!
//! `p = 1` is Gaussian averaging of `|I|` and `p = ∞` is max pooling of `|I|`.
//! Finite `p` is evaluated with the window maximum `m` factored out,
//! `O = m · (ΣΣ G · (|I|/m)^p)^(1/p)`, so every power is of a value in `[0, 1]`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::LayerGrads;
use crate::error::{Error, Result};
use crate::tensor::{GaussianKernel, Tensor};

/// Pooling exponent in `[1, ∞]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PoolExponent {
    Finite(f64),
    Infinity,
}

impl PoolExponent {
    pub fn finite(p: f64) -> Result<Self> {
        Self::Finite(p).validated()
    }

    pub fn validated(self) -> Result<Self> {
        match self {
            PoolExponent::Finite(p) if p.is_infinite() && p > 0.0 => Ok(PoolExponent::Infinity),
            PoolExponent::Finite(p) if !(p >= 1.0) => Err(Error::invalid(format!(
                "pooling exponent must satisfy p >= 1, got {p}"
            ))),
            other => Ok(other),
        }
    }

    /// Abscissa used when plotting: `∞` is drawn at 100.
    pub fn plot_value(self) -> f64 {
        match self {
            PoolExponent::Finite(p) => p,
            PoolExponent::Infinity => 100.0,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, PoolExponent::Infinity)
    }
}

impl fmt::Display for PoolExponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PoolExponent::Finite(p) => write!(f, "{p}"),
            PoolExponent::Infinity => f.write_str("inf"),
        }
    }
}

impl FromStr for PoolExponent {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        if matches!(t.to_ascii_lowercase().as_str(), "inf" | "infinity" | "max") || t == "∞" {
            return Ok(PoolExponent::Infinity);
        }
        let p: f64 = t
            .parse()
            .map_err(|_| Error::invalid(format!("cannot parse pooling exponent `{s}`")))?;
        PoolExponent::Finite(p).validated()
    }
}

impl Serialize for PoolExponent {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            PoolExponent::Finite(p) => s.serialize_f64(*p),
            PoolExponent::Infinity => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for PoolExponent {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        let parsed = match Repr::deserialize(d)? {
            Repr::Num(p) => PoolExponent::Finite(p).validated(),
            Repr::Text(t) => t.parse(),
        };
        parsed.map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpPoolConfig {
    p: PoolExponent,
    window: GaussianKernel,
    stride: (usize, usize),
}

impl LpPoolConfig {
    pub fn new(p: PoolExponent, window: GaussianKernel, stride: (usize, usize)) -> Result<Self> {
        if stride.0 == 0 || stride.1 == 0 {
            return Err(Error::invalid("pooling stride must be positive"));
        }
        Ok(Self {
            p: p.validated()?,
            window,
            stride,
        })
    }

    pub fn p(&self) -> PoolExponent {
        self.p
    }

    pub fn window(&self) -> &GaussianKernel {
        &self.window
    }

    pub fn stride(&self) -> (usize, usize) {
        self.stride
    }

    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let k = self.window.size();
        if h < k || w < k {
            return Err(Error::invalid(format!(
                "pooling window {k}×{k} larger than input {h}×{w}"
            )));
        }
        Ok(((h - k) / self.stride.0 + 1, (w - k) / self.stride.1 + 1))
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        let (c, h, w) = input.chw()?;
        let (oh, ow) = self.output_hw(h, w)?;
        let k = self.window.size();
        let g = self.window.weights().data();
        let mut buf = vec![0.0; k * k];
        let mut out = Vec::with_capacity(c * oh * ow);
        for ch in 0..c {
            let x = input.channel(ch);
            for oy in 0..oh {
                for ox in 0..ow {
                    self.gather(x, w, oy, ox, &mut buf);
                    out.push(pool_window(&buf, g, self.p));
                }
            }
        }
        Tensor::new(vec![c, oh, ow], out)
    }

    /// Input gradient given the cached forward `output`. Overlapping windows
    /// accumulate.
    pub fn backward(&self, input: &Tensor, output: &Tensor, upstream: &Tensor) -> Result<LayerGrads> {
        let (c, h, w) = input.chw()?;
        let (oh, ow) = self.output_hw(h, w)?;
        output.ensure_shape(&[c, oh, ow], "pooling cached output")?;
        upstream.ensure_shape(&[c, oh, ow], "pooling upstream gradient")?;
        let k = self.window.size();
        let g = self.window.weights().data();
        let (sy, sx) = self.stride;
        let mut buf = vec![0.0; k * k];
        let mut dbuf = vec![0.0; k * k];
        let mut gin = vec![0.0; input.len()];
        for ch in 0..c {
            let x = input.channel(ch);
            let gx = &mut gin[ch * h * w..(ch + 1) * h * w];
            for oy in 0..oh {
                for ox in 0..ow {
                    let idx = (ch * oh + oy) * ow + ox;
                    let up = upstream.data()[idx];
                    if up == 0.0 {
                        continue;
                    }
                    self.gather(x, w, oy, ox, &mut buf);
                    pool_window_grad(&buf, g, self.p, output.data()[idx], &mut dbuf);
                    for a in 0..k {
                        let row = (oy * sy + a) * w + ox * sx;
                        for b in 0..k {
                            gx[row + b] += up * dbuf[a * k + b];
                        }
                    }
                }
            }
        }
        Ok(LayerGrads::input_only(Tensor::new(input.shape().to_vec(), gin)?))
    }

    fn gather(&self, plane: &[f64], w: usize, oy: usize, ox: usize, buf: &mut [f64]) {
        let k = self.window.size();
        for a in 0..k {
            let row = (oy * self.stride.0 + a) * w + ox * self.stride.1;
            buf[a * k..(a + 1) * k].copy_from_slice(&plane[row..row + k]);
        }
    }
}

#[inline]
fn pow_unit(r: f64, p: f64) -> f64 {
    // integer exponents are common (2, 4, 12, ...) and powi is faster
    if p.fract() == 0.0 && p <= 64.0 {
        r.powi(p as i32)
    } else {
        r.powf(p)
    }
}

/// Pools one window of raw values with weights `g` (same length).
pub fn pool_window(values: &[f64], g: &[f64], p: PoolExponent) -> f64 {
    let m = values.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if m == 0.0 {
        return 0.0;
    }
    match p {
        PoolExponent::Infinity => m,
        PoolExponent::Finite(p) if p == 1.0 => values.iter().zip(g).map(|(v, gw)| gw * v.abs()).sum(),
        PoolExponent::Finite(p) => {
            let s: f64 = values
                .iter()
                .zip(g)
                .map(|(v, gw)| gw * pow_unit(v.abs() / m, p))
                .sum();
            m * s.powf(1.0 / p)
        }
    }
}

/// `∂O/∂I` for one window, written into `out`.
///
/// Finite `p`: `G · sign(I) · (|I|/O)^(p-1)`, zero where `O = 0` or `I = 0`.
/// Infinite `p`: `sign(I)` at the first arg-max of `|I|` in row-major order.
pub fn pool_window_grad(values: &[f64], g: &[f64], p: PoolExponent, output: f64, out: &mut [f64]) {
    out.fill(0.0);
    if output == 0.0 {
        return;
    }
    match p {
        PoolExponent::Infinity => {
            let mut best = 0;
            for (i, v) in values.iter().enumerate() {
                if v.abs() > values[best].abs() {
                    best = i;
                }
            }
            out[best] = sign(values[best]);
        }
        PoolExponent::Finite(p) => {
            for ((o, &v), &gw) in out.iter_mut().zip(values).zip(g) {
                if v != 0.0 {
                    *o = gw * sign(v) * pow_unit(v.abs() / output, p - 1.0);
                }
            }
        }
    }
}

#[inline]
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}
