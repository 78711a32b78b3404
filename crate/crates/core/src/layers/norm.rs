use super::LayerGrads;
use crate::error::{Error, Result};
use crate::tensor::{correlate_valid_acc, pad_mirror_plane, reflect, GaussianKernel, Tensor};

/// Per-channel subtractive normalization: each activation minus its
/// Gaussian-weighted neighbourhood mean, with mirror padding at the borders.
/// No divisive step.
#[derive(Debug, Clone, PartialEq)]
pub struct SubtractiveNorm {
    kernel: GaussianKernel,
}

impl SubtractiveNorm {
    pub fn new(kernel: GaussianKernel) -> Result<Self> {
        if kernel.size() % 2 == 0 {
            return Err(Error::invalid(format!(
                "normalization kernel must have odd size, got {}",
                kernel.size()
            )));
        }
        Ok(Self { kernel })
    }

    pub fn kernel(&self) -> &GaussianKernel {
        &self.kernel
    }

    fn pad(&self) -> usize {
        self.kernel.size() / 2
    }

    pub fn check_input(&self, h: usize, w: usize) -> Result<()> {
        if self.pad() >= h.min(w) {
            return Err(Error::invalid(format!(
                "normalization kernel {0}×{0} does not fit mirrored {h}×{w} input",
                self.kernel.size()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        let (c, h, w) = input.chw()?;
        self.check_input(h, w)?;
        let (k, pad) = (self.kernel.size(), self.pad());
        let g = self.kernel.weights().data();
        let mut out = input.clone();
        let mut smooth = vec![0.0; h * w];
        for ch in 0..c {
            let padded = pad_mirror_plane(input.channel(ch), h, w, pad);
            smooth.fill(0.0);
            correlate_valid_acc(&padded, h + 2 * pad, w + 2 * pad, g, k, k, &mut smooth);
            for (o, s) in out.channel_mut(ch).iter_mut().zip(&smooth) {
                *o -= s;
            }
        }
        Ok(out)
    }

    /// Exact adjoint of the (linear) forward map.
    pub fn backward(&self, upstream: &Tensor) -> Result<LayerGrads> {
        let (c, h, w) = upstream.chw()?;
        self.check_input(h, w)?;
        let (k, pad) = (self.kernel.size(), self.pad());
        let g = self.kernel.weights().data();
        let (ph, pw) = (h + 2 * pad, w + 2 * pad);
        let mut gin = upstream.clone();
        let mut padded = vec![0.0; ph * pw];
        for ch in 0..c {
            let up = upstream.channel(ch);
            padded.fill(0.0);
            for a in 0..k {
                for b in 0..k {
                    let wgt = g[a * k + b];
                    for y in 0..h {
                        let dst = &mut padded[(y + a) * pw + b..(y + a) * pw + b + w];
                        for (d, u) in dst.iter_mut().zip(&up[y * w..(y + 1) * w]) {
                            *d += wgt * u;
                        }
                    }
                }
            }
            // fold the padded border back onto the samples it mirrors
            let dst = gin.channel_mut(ch);
            for i in 0..ph {
                let sy = reflect(i as isize - pad as isize, h);
                for j in 0..pw {
                    let sx = reflect(j as isize - pad as isize, w);
                    dst[sy * w + sx] -= padded[i * pw + j];
                }
            }
        }
        Ok(LayerGrads::input_only(gin))
    }
}
