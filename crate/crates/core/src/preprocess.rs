//! Sample preprocessing: RGB → YUV, local contrast normalization of Y,
//! then global contrast normalization of every channel.

use crate::error::{Error, Result};
use crate::tensor::{correlate_valid_acc, pad_mirror_plane, GaussianKernel, Tensor};

/// Window size of the local contrast normalization applied to Y.
pub const LCN_KERNEL_SIZE: usize = 7;

const GCN_STD_FLOOR: f64 = 1e-8;

/// An RGB sample with pixels in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSample {
    pixels: Tensor,
    label: u8,
}

impl RawSample {
    pub fn new(pixels: Tensor, label: u8) -> Result<Self> {
        let (c, _, _) = pixels.chw()?;
        if c != 3 {
            return Err(Error::invalid(format!("raw samples are RGB, got {c} channels")));
        }
        if pixels.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid("raw pixel values must lie in [0, 1]"));
        }
        if label > 9 {
            return Err(Error::invalid(format!("label {label} outside 0..=9")));
        }
        Ok(Self { pixels, label })
    }

    /// 8-bit channel-major pixels, scaled by 1/255.
    pub fn from_u8(bytes: &[u8], height: usize, width: usize, label: u8) -> Result<Self> {
        let pixels = Tensor::new(
            vec![3, height, width],
            bytes.iter().map(|&b| f64::from(b) / 255.0).collect(),
        )?;
        Self::new(pixels, label)
    }

    pub fn pixels(&self) -> &Tensor {
        &self.pixels
    }

    pub fn label(&self) -> u8 {
        self.label
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessedSample {
    pub channels: Tensor,
    pub label: u8,
}

/// BT.601 luma with analog U/V scaling.
pub fn rgb_to_yuv(pixels: &Tensor) -> Result<Tensor> {
    let (c, h, w) = pixels.chw()?;
    if c != 3 {
        return Err(Error::invalid(format!("YUV conversion needs 3 channels, got {c}")));
    }
    let n = h * w;
    let (r, g, b) = (pixels.channel(0), pixels.channel(1), pixels.channel(2));
    let mut out = vec![0.0; 3 * n];
    for i in 0..n {
        let y = 0.299 * r[i] + 0.587 * g[i] + 0.114 * b[i];
        out[i] = y;
        out[n + i] = 0.492 * (b[i] - y);
        out[2 * n + i] = 0.877 * (r[i] - y);
    }
    Tensor::new(vec![3, h, w], out)
}

// Rounding in the smoothing and mean would otherwise leave ulp-sized
// residue on flat planes.
fn is_constant(v: &[f64]) -> bool {
    v.iter().all(|&x| x == v[0])
}

fn smooth(plane: &[f64], h: usize, w: usize, kernel: &GaussianKernel) -> Vec<f64> {
    let k = kernel.size();
    let pad = k / 2;
    let padded = pad_mirror_plane(plane, h, w, pad);
    let mut out = vec![0.0; h * w];
    correlate_valid_acc(&padded, h + 2 * pad, w + 2 * pad, kernel.weights().data(), k, k, &mut out);
    out
}

/// Subtractive then divisive normalization. The divisor at each pixel is the
/// local standard deviation, floored at its image-wide mean.
pub fn local_contrast_normalize(y: &Tensor, kernel: &GaussianKernel) -> Result<Tensor> {
    let (h, w) = y.hw()?;
    let k = kernel.size();
    if k % 2 == 0 {
        return Err(Error::invalid("contrast normalization kernel must have odd size"));
    }
    if h < k || w < k {
        return Err(Error::invalid(format!(
            "image {h}×{w} smaller than {k}×{k} normalization kernel"
        )));
    }
    if is_constant(y.data()) {
        return Ok(Tensor::zeros(&[h, w]));
    }
    let mean = smooth(y.data(), h, w, kernel);
    let v: Vec<f64> = y.data().iter().zip(&mean).map(|(a, m)| a - m).collect();
    let sq: Vec<f64> = v.iter().map(|x| x * x).collect();
    let sigma: Vec<f64> = smooth(&sq, h, w, kernel).into_iter().map(f64::sqrt).collect();
    let floor = sigma.iter().sum::<f64>() / sigma.len() as f64;
    let out = v
        .iter()
        .zip(&sigma)
        .map(|(&vi, &s)| {
            let d = floor.max(s);
            if d > 0.0 {
                vi / d
            } else {
                0.0
            }
        })
        .collect();
    Tensor::new(vec![h, w], out)
}

/// Zero mean, unit population standard deviation (divisor floored at 1e-8).
pub fn global_contrast_normalize(channel: &Tensor) -> Tensor {
    if is_constant(channel.data()) {
        return Tensor::from_vec(vec![0.0; channel.len()])
            .reshape(channel.shape())
            .expect("same length");
    }
    let n = channel.len() as f64;
    let mean = channel.sum() / n;
    let var = channel.data().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let d = var.sqrt().max(GCN_STD_FLOOR);
    let mut out = channel.clone();
    out.data_mut().iter_mut().for_each(|v| *v = (*v - mean) / d);
    out
}

pub fn preprocess_sample(raw: &RawSample) -> Result<PreprocessedSample> {
    let kernel = GaussianKernel::with_default_sigma(LCN_KERNEL_SIZE)?;
    preprocess_with(raw, &kernel)
}

pub fn preprocess_with(raw: &RawSample, lcn_kernel: &GaussianKernel) -> Result<PreprocessedSample> {
    let yuv = rgb_to_yuv(raw.pixels())?;
    let (_, h, w) = yuv.chw()?;
    let mut out = Vec::with_capacity(yuv.len());
    for c in 0..3 {
        let plane = Tensor::new(vec![h, w], yuv.channel(c).to_vec())?;
        let plane = if c == 0 {
            local_contrast_normalize(&plane, lcn_kernel)?
        } else {
            plane
        };
        out.extend(global_contrast_normalize(&plane).into_data());
    }
    Ok(PreprocessedSample {
        channels: Tensor::new(vec![3, h, w], out)?,
        label: raw.label(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_raw(rng: &mut ChaCha8Rng) -> RawSample {
        let px = (0..3 * 32 * 32).map(|_| rng.gen_range(0.0..=1.0)).collect();
        RawSample::new(Tensor::new(vec![3, 32, 32], px).unwrap(), rng.gen_range(0..10)).unwrap()
    }

    fn lcn7() -> GaussianKernel {
        GaussianKernel::with_default_sigma(7).unwrap()
    }

    #[test]
    fn yuv_reference_colors() {
        let px = |r: f64, g: f64, b: f64| Tensor::new(vec![3, 1, 1], vec![r, g, b]).unwrap();
        let gray = rgb_to_yuv(&px(0.4, 0.4, 0.4)).unwrap();
        assert_abs_diff_eq!(gray.data()[0], 0.4, epsilon = 1e-15);
        assert_abs_diff_eq!(gray.data()[1], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(gray.data()[2], 0.0, epsilon = 1e-15);
        let red = rgb_to_yuv(&px(1.0, 0.0, 0.0)).unwrap();
        assert_abs_diff_eq!(red.data()[0], 0.299, epsilon = 1e-15);
        assert_abs_diff_eq!(red.data()[1], -0.1471, epsilon = 1e-4);
        assert_abs_diff_eq!(red.data()[2], 0.6148, epsilon = 1e-4);
        assert_eq!(rgb_to_yuv(&px(0.0, 0.0, 0.0)).unwrap().data(), &[0.0, 0.0, 0.0]);
        assert!(rgb_to_yuv(&Tensor::zeros(&[1, 2, 2])).is_err());
    }

    #[test]
    fn lcn_constant_and_too_small() {
        let out = local_contrast_normalize(&Tensor::filled(&[9, 9], 0.6), &lcn7()).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
        assert!(matches!(
            local_contrast_normalize(&Tensor::zeros(&[6, 9]), &lcn7()),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn lcn_matches_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let (h, w) = (32usize, 32usize);
        let y: Vec<f64> = (0..h * w).map(|_| rng.gen::<f64>()).collect();
        let k = lcn7();
        let g = k.weights().data();
        let mirror = |i: isize, n: usize| -> usize {
            let n = n as isize;
            (if i < 0 { -i } else if i >= n { 2 * n - 2 - i } else { i }) as usize
        };
        let local = |src: &[f64], py: usize, px: usize| -> f64 {
            let mut acc = 0.0;
            for a in 0..7 {
                for b in 0..7 {
                    let sy = mirror(py as isize + a as isize - 3, h);
                    let sx = mirror(px as isize + b as isize - 3, w);
                    acc += g[a * 7 + b] * src[sy * w + sx];
                }
            }
            acc
        };
        let mut v = vec![0.0; h * w];
        for py in 0..h {
            for px in 0..w {
                v[py * w + px] = y[py * w + px] - local(&y, py, px);
            }
        }
        let sq: Vec<f64> = v.iter().map(|x| x * x).collect();
        let mut sigma = vec![0.0; h * w];
        for py in 0..h {
            for px in 0..w {
                sigma[py * w + px] = local(&sq, py, px).sqrt();
            }
        }
        let mean_sigma = sigma.iter().sum::<f64>() / (h * w) as f64;
        let got = local_contrast_normalize(&Tensor::new(vec![h, w], y).unwrap(), &k).unwrap();
        for i in 0..h * w {
            let want = v[i] / mean_sigma.max(sigma[i]);
            assert!((got.data()[i] - want).abs() <= 1e-10);
        }
    }

    #[test]
    fn gcn_cases() {
        let out = global_contrast_normalize(&Tensor::from_vec(vec![1.0, 2.0, 3.0, 4.0]));
        let s = 1.25f64.sqrt();
        for (o, x) in out.data().iter().zip([1.0, 2.0, 3.0, 4.0]) {
            assert_abs_diff_eq!(*o, (x - 2.5) / s, epsilon = 1e-14);
        }
        assert_abs_diff_eq!(out.data()[0], -1.342, epsilon = 1e-3);
        assert_abs_diff_eq!(out.data()[1], -0.447, epsilon = 1e-3);
        let flat = global_contrast_normalize(&Tensor::filled(&[4, 4], 7.0));
        assert!(flat.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gcn_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = Tensor::new(vec![8, 8], (0..64).map(|_| rng.gen_range(-3.0..9.0)).collect()).unwrap();
        let out = global_contrast_normalize(&x);
        let mean = out.sum() / 64.0;
        let var = out.data().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 64.0;
        assert!(mean.abs() <= 1e-10);
        assert!((var.sqrt() - 1.0).abs() <= 1e-6);
    }

    #[test]
    fn constant_gray_sample_is_all_zero() {
        let raw = RawSample::new(Tensor::filled(&[3, 32, 32], 0.5), 3).unwrap();
        let out = preprocess_sample(&raw).unwrap();
        assert!(out.channels.data().iter().all(|&v| v == 0.0));
        assert_eq!(out.label, 3);
    }

    #[test]
    fn pipeline_equals_manual_composition() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let raw = random_raw(&mut rng);
        let out = preprocess_sample(&raw).unwrap();
        let yuv = rgb_to_yuv(raw.pixels()).unwrap();
        let y = Tensor::new(vec![32, 32], yuv.channel(0).to_vec()).unwrap();
        let y = global_contrast_normalize(&local_contrast_normalize(&y, &lcn7()).unwrap());
        let u = global_contrast_normalize(&Tensor::new(vec![32, 32], yuv.channel(1).to_vec()).unwrap());
        let v = global_contrast_normalize(&Tensor::new(vec![32, 32], yuv.channel(2).to_vec()).unwrap());
        assert_eq!(out.channels.channel(0), y.data());
        assert_eq!(out.channels.channel(1), u.data());
        assert_eq!(out.channels.channel(2), v.data());
        // byte-identical on repeat
        assert_eq!(preprocess_sample(&raw).unwrap(), out);
    }

    #[test]
    fn raw_sample_validation() {
        assert!(RawSample::new(Tensor::filled(&[3, 4, 4], 1.5), 0).is_err());
        assert!(RawSample::new(Tensor::filled(&[3, 4, 4], 0.5), 10).is_err());
        assert!(RawSample::new(Tensor::filled(&[1, 4, 4], 0.5), 0).is_err());
        let r = RawSample::from_u8(&[255; 48], 4, 4, 2).unwrap();
        assert_eq!(r.pixels().data()[0], 1.0);
    }

    proptest! {
        #[test]
        fn lcn_affine_invariant(seed in any::<u64>(), a in 0.05f64..20.0, b in -5.0f64..5.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let y = Tensor::new(vec![12, 10], (0..120).map(|_| rng.gen::<f64>()).collect()).unwrap();
            let mut z = y.clone();
            z.data_mut().iter_mut().for_each(|v| *v = a * *v + b);
            let k = lcn7();
            let oy = local_contrast_normalize(&y, &k).unwrap();
            let oz = local_contrast_normalize(&z, &k).unwrap();
            for (p, q) in oy.data().iter().zip(oz.data()) {
                prop_assert!((p - q).abs() <= 1e-10 * p.abs().max(1.0));
            }
        }

        #[test]
        fn finite_on_unit_cube(seed in any::<u64>(), constant in any::<bool>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let raw = if constant {
                let c: f64 = rng.gen();
                RawSample::new(Tensor::filled(&[3, 32, 32], c), 1).unwrap()
            } else {
                random_raw(&mut rng)
            };
            let out = preprocess_sample(&raw).unwrap();
            prop_assert!(out.channels.is_finite());
            prop_assert_eq!(out.label, raw.label());
        }
    }
}
