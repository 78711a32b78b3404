//! Datasets on disk and in memory.

pub mod container;
mod idx;
mod split;

pub use idx::{idx_to_images, read_idx, IdxTensor};
pub use split::{build_validation_split, SplitSource, SplitSpec, ValidationSplit};

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use container::{ContainerTensor, DType};

use crate::error::{Error, Result};
use crate::preprocess::{preprocess_sample, RawSample};
use crate::tensor::Tensor;

pub const IMAGES_ENTRY: &str = "images";
pub const LABELS_ENTRY: &str = "labels";

#[derive(Debug, Clone, PartialEq)]
pub enum Pixels {
    U8(Vec<u8>),
    F32(Vec<f32>),
    F64(Vec<f64>),
}

impl Pixels {
    fn len(&self) -> usize {
        match self {
            Pixels::U8(v) => v.len(),
            Pixels::F32(v) => v.len(),
            Pixels::F64(v) => v.len(),
        }
    }
}

/// An `N×C×H×W` image tensor with one label per image, as stored in a
/// dataset container.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImages {
    dims: [usize; 4],
    pixels: Pixels,
    labels: Vec<u8>,
}

impl LabeledImages {
    pub fn new(dims: [usize; 4], pixels: Pixels, labels: Vec<u8>) -> Result<Self> {
        let expected: usize = dims.iter().product();
        if pixels.len() != expected {
            return Err(Error::invalid(format!(
                "image dims {dims:?} need {expected} values, got {}",
                pixels.len()
            )));
        }
        if labels.len() != dims[0] {
            return Err(Error::invalid(format!(
                "{} images but {} labels",
                dims[0],
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l > 9) {
            return Err(Error::invalid(format!("label {bad} outside 0..=9")));
        }
        Ok(Self {
            dims,
            pixels,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.dims[0]
    }

    pub fn is_empty(&self) -> bool {
        self.dims[0] == 0
    }

    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    pub fn pixels(&self) -> &Pixels {
        &self.pixels
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    fn sample_len(&self) -> usize {
        self.dims[1] * self.dims[2] * self.dims[3]
    }

    /// Rows `indices`, in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let n = self.sample_len();
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(Error::invalid(format!("index {bad} out of range {}", self.len())));
        }
        fn pick<T: Copy>(src: &[T], idx: &[usize], n: usize) -> Vec<T> {
            idx.iter().flat_map(|&i| src[i * n..(i + 1) * n].iter().copied()).collect()
        }
        let pixels = match &self.pixels {
            Pixels::U8(v) => Pixels::U8(pick(v, indices, n)),
            Pixels::F32(v) => Pixels::F32(pick(v, indices, n)),
            Pixels::F64(v) => Pixels::F64(pick(v, indices, n)),
        };
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        Self::new([indices.len(), self.dims[1], self.dims[2], self.dims[3]], pixels, labels)
    }

    pub fn concat(&self, other: &Self) -> Result<Self> {
        if self.dims[1..] != other.dims[1..] {
            return Err(Error::invalid("cannot concatenate datasets of different sample shape"));
        }
        let pixels = match (&self.pixels, &other.pixels) {
            (Pixels::U8(a), Pixels::U8(b)) => Pixels::U8([a.as_slice(), b].concat()),
            (Pixels::F32(a), Pixels::F32(b)) => Pixels::F32([a.as_slice(), b].concat()),
            (Pixels::F64(a), Pixels::F64(b)) => Pixels::F64([a.as_slice(), b].concat()),
            _ => return Err(Error::invalid("cannot concatenate datasets of different dtype")),
        };
        let mut dims = self.dims;
        dims[0] += other.dims[0];
        Self::new(dims, pixels, [self.labels.as_slice(), &other.labels].concat())
    }

    pub fn class_histogram(&self) -> [usize; 10] {
        let mut h = [0; 10];
        for &l in &self.labels {
            h[l as usize] += 1;
        }
        h
    }
}

pub fn write_container(path: &Path, data: &LabeledImages) -> Result<()> {
    let dims = data.dims.to_vec();
    let images = match &data.pixels {
        Pixels::U8(v) => ContainerTensor::u8(IMAGES_ENTRY, dims, v.clone()),
        Pixels::F32(v) => ContainerTensor::f32(IMAGES_ENTRY, dims, v),
        Pixels::F64(v) => ContainerTensor::f64(IMAGES_ENTRY, dims, v.clone()),
    };
    let labels = ContainerTensor::u8(LABELS_ENTRY, vec![data.len()], data.labels.clone());
    container::write_file(path, &[images, labels])
}

pub fn read_container(path: &Path) -> Result<LabeledImages> {
    let entries = container::read_file(path)?;
    let find = |name: &str| {
        entries
            .iter()
            .find(|e| e.name == name)
            .ok_or_else(|| Error::format(0, format!("dataset container has no `{name}` entry")))
    };
    let images = find(IMAGES_ENTRY)?;
    let labels = find(LABELS_ENTRY)?;
    let dims: [usize; 4] = images.dims.as_slice().try_into().map_err(|_| {
        Error::format(0, format!("images must be N×C×H×W, got dims {:?}", images.dims))
    })?;
    if labels.dtype != DType::U8 || labels.dims != [dims[0]] {
        return Err(Error::format(
            0,
            format!(
                "labels must be {} u8 values, got {:?} {:?}",
                dims[0], labels.dtype, labels.dims
            ),
        ));
    }
    if let Some(bad) = labels.bytes.iter().find(|&&l| l > 9) {
        return Err(Error::format(0, format!("label {bad} outside 0..=9")));
    }
    let pixels = match images.dtype {
        DType::U8 => Pixels::U8(images.bytes.clone()),
        DType::F32 => Pixels::F32(images.to_f64().into_iter().map(|v| v as f32).collect()),
        DType::F64 => Pixels::F64(images.to_f64()),
    };
    LabeledImages::new(dims, pixels, labels.bytes.clone())
}

/// Preprocessed samples ready for the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Tensor>,
    pub labels: Vec<u8>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Raw 8-bit RGB images go through the preprocessing pipeline (single
    /// channel images are treated as gray RGB); float images are taken as
    /// already preprocessed.
    pub fn from_images(images: &LabeledImages) -> Result<Self> {
        let [n, c, h, w] = images.dims;
        let plane = c * h * w;
        let mut samples = Vec::with_capacity(n);
        match &images.pixels {
            Pixels::U8(px) => {
                for (i, &label) in images.labels.iter().enumerate() {
                    let src = &px[i * plane..(i + 1) * plane];
                    let rgb: Vec<u8> = match c {
                        3 => src.to_vec(),
                        1 => src.iter().cycle().take(3 * plane).copied().collect(),
                        _ => {
                            return Err(Error::invalid(format!(
                                "raw images need 1 or 3 channels, got {c}"
                            )))
                        }
                    };
                    let raw = RawSample::from_u8(&rgb, h, w, label)?;
                    samples.push(preprocess_sample(&raw)?.channels);
                }
            }
            Pixels::F32(px) => {
                for i in 0..n {
                    let v = px[i * plane..(i + 1) * plane].iter().map(|&x| f64::from(x)).collect();
                    samples.push(Tensor::new(vec![c, h, w], v)?);
                }
            }
            Pixels::F64(px) => {
                for i in 0..n {
                    samples.push(Tensor::new(vec![c, h, w], px[i * plane..(i + 1) * plane].to_vec())?);
                }
            }
        }
        Ok(Self {
            samples,
            labels: images.labels.clone(),
        })
    }

    /// Stores the preprocessed samples as an `f64` dataset container.
    pub fn to_images(&self) -> Result<LabeledImages> {
        let Some(first) = self.samples.first() else {
            return Err(Error::invalid("empty dataset"));
        };
        let (c, h, w) = first.chw()?;
        let px = self.samples.iter().flat_map(|s| s.data().iter().copied()).collect();
        LabeledImages::new([self.len(), c, h, w], Pixels::F64(px), self.labels.clone())
    }
}

/// Permutation of `0..n` for one epoch; deterministic in `(seed, epoch)`.
pub fn shuffle_epoch(n: usize, seed: u64, epoch: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);
    perm
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toy() -> LabeledImages {
        LabeledImages::new(
            [3, 1, 2, 2],
            Pixels::U8((0..12).collect()),
            vec![0, 9, 4],
        )
        .unwrap()
    }

    #[test]
    fn container_round_trip_every_dtype() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.cnd");
        for px in [
            Pixels::U8((0..12).collect()),
            Pixels::F32((0..12).map(|v| v as f32 * 0.5).collect()),
            Pixels::F64((0..12).map(|v| v as f64 / 3.0).collect()),
        ] {
            let d = LabeledImages::new([3, 1, 2, 2], px, vec![1, 2, 3]).unwrap();
            write_container(&path, &d).unwrap();
            assert_eq!(read_container(&path).unwrap(), d);
        }
    }

    #[test]
    fn label_validation() {
        assert!(LabeledImages::new([1, 1, 1, 1], Pixels::U8(vec![0]), vec![10]).is_err());
        assert!(LabeledImages::new([2, 1, 1, 1], Pixels::U8(vec![0, 1]), vec![1]).is_err());
    }

    #[test]
    fn select_and_concat() {
        let d = toy();
        let s = d.select(&[2, 0]).unwrap();
        assert_eq!(s.labels(), &[4, 0]);
        assert_eq!(s.pixels(), &Pixels::U8(vec![8, 9, 10, 11, 0, 1, 2, 3]));
        let c = s.concat(&d).unwrap();
        assert_eq!(c.len(), 5);
        assert_eq!(c.class_histogram()[0], 2);
        assert!(d.select(&[3]).is_err());
    }

    #[test]
    fn preprocessed_round_trip() {
        let d = LabeledImages::new([2, 3, 8, 8], Pixels::U8((0..384).map(|v| (v * 7 % 256) as u8).collect()), vec![1, 2]).unwrap();
        let ds = Dataset::from_images(&d).unwrap();
        assert_eq!(ds.samples[0].shape(), &[3, 8, 8]);
        let back = Dataset::from_images(&ds.to_images().unwrap()).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn shuffle_small_cases() {
        assert_eq!(shuffle_epoch(1, 3, 0), vec![0]);
        assert_eq!(shuffle_epoch(50, 3, 2), shuffle_epoch(50, 3, 2));
        assert_ne!(shuffle_epoch(1000, 7, 0), shuffle_epoch(1000, 7, 1));
    }

    proptest! {
        #[test]
        fn shuffle_is_a_permutation(n in 1usize..500, seed in any::<u64>(), epoch in 0u64..100) {
            let mut p = shuffle_epoch(n, seed, epoch);
            p.sort_unstable();
            prop_assert_eq!(p, (0..n).collect::<Vec<_>>());
        }
    }
}
