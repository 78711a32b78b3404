use serde::{Deserialize, Serialize};

use super::LayerGrads;
use crate::error::{Error, Result};
use crate::tensor::{correlate_valid_acc, Tensor};

/// Fully connected valid convolution: every output map sees every input map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvLayer {
    weights: Tensor,
    bias: Tensor,
}

impl ConvLayer {
    /// `weights` is `(Cout, Cin, kH, kW)`, `bias` is `(Cout)`.
    pub fn new(weights: Tensor, bias: Tensor) -> Result<Self> {
        let [cout, _, _, _] = *weights.shape() else {
            return Err(Error::invalid(format!(
                "conv weights must be 4-d, got {:?}",
                weights.shape()
            )));
        };
        bias.ensure_shape(&[cout], "conv bias")?;
        if !weights.is_finite() || !bias.is_finite() {
            return Err(Error::invalid("conv parameters must be finite"));
        }
        Ok(Self { weights, bias })
    }

    pub fn weights(&self) -> &Tensor {
        &self.weights
    }

    pub fn bias(&self) -> &Tensor {
        &self.bias
    }

    pub(crate) fn params_mut(&mut self) -> [&mut Tensor; 2] {
        [&mut self.weights, &mut self.bias]
    }

    /// `(Cout, Cin, kH, kW)`.
    pub fn dims(&self) -> (usize, usize, usize, usize) {
        let s = self.weights.shape();
        (s[0], s[1], s[2], s[3])
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<[usize; 3]> {
        let (cout, cin, kh, kw) = self.dims();
        let [c, h, w] = *input else {
            return Err(Error::invalid(format!("conv input must be 3-d, got {input:?}")));
        };
        if c != cin {
            return Err(Error::invalid(format!(
                "conv expects {cin} input channels, got {c}"
            )));
        }
        if h < kh || w < kw {
            return Err(Error::invalid(format!(
                "conv kernel {kh}×{kw} larger than input {h}×{w}"
            )));
        }
        Ok([cout, h - kh + 1, w - kw + 1])
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        let [cout, oh, ow] = self.output_shape(input.shape())?;
        let (_, cin, kh, kw) = self.dims();
        let (_, h, w) = input.chw()?;
        let ksz = kh * kw;
        let mut out = vec![0.0; cout * oh * ow];
        for (co, plane) in out.chunks_exact_mut(oh * ow).enumerate() {
            plane.fill(self.bias.data()[co]);
            for ci in 0..cin {
                let k = &self.weights.data()[(co * cin + ci) * ksz..(co * cin + ci + 1) * ksz];
                correlate_valid_acc(input.channel(ci), h, w, k, kh, kw, plane);
            }
        }
        Tensor::new(vec![cout, oh, ow], out)
    }

    pub fn backward(&self, input: &Tensor, upstream: &Tensor) -> Result<LayerGrads> {
        let out_shape = self.output_shape(input.shape())?;
        upstream.ensure_shape(&out_shape, "conv upstream gradient")?;
        let [cout, oh, ow] = out_shape;
        let (_, cin, kh, kw) = self.dims();
        let (_, h, w) = input.chw()?;
        let ksz = kh * kw;

        let mut gw = vec![0.0; self.weights.len()];
        let mut gb = vec![0.0; cout];
        let mut gin = vec![0.0; input.len()];
        for co in 0..cout {
            let g = &upstream.data()[co * oh * ow..(co + 1) * oh * ow];
            gb[co] = g.iter().sum();
            for ci in 0..cin {
                let x = input.channel(ci);
                let base = (co * cin + ci) * ksz;
                let k = &self.weights.data()[base..base + ksz];
                let gx = &mut gin[ci * h * w..(ci + 1) * h * w];
                for ky in 0..kh {
                    for kx in 0..kw {
                        let wgt = k[ky * kw + kx];
                        let mut acc = 0.0;
                        for oy in 0..oh {
                            let off = (oy + ky) * w + kx;
                            let grow = &g[oy * ow..(oy + 1) * ow];
                            let xs = &x[off..off + ow];
                            acc += grow.iter().zip(xs).map(|(a, b)| a * b).sum::<f64>();
                            let dst = &mut gx[off..off + ow];
                            for (d, gv) in dst.iter_mut().zip(grow) {
                                *d += wgt * gv;
                            }
                        }
                        gw[base + ky * kw + kx] = acc;
                    }
                }
            }
        }
        Ok(LayerGrads {
            weights: Some(Tensor::new(self.weights.shape().to_vec(), gw)?),
            bias: Some(Tensor::new(vec![cout], gb)?),
            input: Tensor::new(input.shape().to_vec(), gin)?,
        })
    }
}
