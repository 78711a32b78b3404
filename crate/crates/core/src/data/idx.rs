//! IDX files (the MNIST distribution format): big-endian magic
//! `0x0000 TT NN` with type code `TT` and `NN` dimensions, then `NN`
//! big-endian u32 extents and the raw payload. Gzip-compressed files are
//! detected by their header and inflated transparently.

use std::fs;
use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;

use super::{LabeledImages, Pixels};
use crate::error::{Error, Result};

const UBYTE: u8 = 0x08;

/// An unsigned-byte IDX tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct IdxTensor {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

pub fn read_idx(path: &Path) -> Result<IdxTensor> {
    let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bytes = if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| Error::format(0, format!("corrupt gzip stream: {e}")))?;
        out
    } else {
        raw
    };
    parse_idx(&bytes)
}

pub fn parse_idx(bytes: &[u8]) -> Result<IdxTensor> {
    if bytes.len() < 4 {
        return Err(Error::format(0, "truncated IDX header"));
    }
    let magic = u32::from_be_bytes(bytes[0..4].try_into().expect("4 bytes"));
    let (zero, ty, ndim) = (magic >> 16, ((magic >> 8) & 0xff) as u8, (magic & 0xff) as usize);
    if zero != 0 || ty != UBYTE || ndim == 0 {
        return Err(Error::format(
            0,
            format!("unsupported IDX magic 0x{magic:08x} (expected unsigned-byte data)"),
        ));
    }
    let header = 4 + 4 * ndim;
    if bytes.len() < header {
        return Err(Error::format(4, "truncated IDX dimension list"));
    }
    let dims: Vec<usize> = bytes[4..header]
        .chunks_exact(4)
        .map(|c| u32::from_be_bytes(c.try_into().expect("4 bytes")) as usize)
        .collect();
    let expected: usize = dims.iter().product();
    let payload = &bytes[header..];
    if payload.len() != expected {
        return Err(Error::format(
            header as u64,
            format!(
                "IDX dims {dims:?} declare {expected} bytes, payload has {}",
                payload.len()
            ),
        ));
    }
    Ok(IdxTensor {
        dims,
        data: payload.to_vec(),
    })
}

/// Pairs an `N×H×W` image file with its `N` labels, zero-pads every image
/// to `target×target` (centered) and stores it as one gray channel.
pub fn idx_to_images(images: &IdxTensor, labels: &IdxTensor, target: usize) -> Result<LabeledImages> {
    let [n, h, w] = *images.dims.as_slice() else {
        return Err(Error::invalid(format!("IDX images must be 3-d, got {:?}", images.dims)));
    };
    if labels.dims != [n] {
        return Err(Error::invalid(format!(
            "IDX labels {:?} do not match {n} images",
            labels.dims
        )));
    }
    if target < h || target < w {
        return Err(Error::invalid(format!("cannot pad {h}×{w} down to {target}")));
    }
    let (top, left) = ((target - h) / 2, (target - w) / 2);
    let mut px = vec![0u8; n * target * target];
    for i in 0..n {
        for y in 0..h {
            let src = &images.data[(i * h + y) * w..(i * h + y + 1) * w];
            let dst = (i * target + top + y) * target + left;
            px[dst..dst + w].copy_from_slice(src);
        }
    }
    LabeledImages::new([n, 1, target, target], Pixels::U8(px), labels.data.clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn idx_bytes(magic: u32, dims: &[u32], payload: &[u8]) -> Vec<u8> {
        let mut b = magic.to_be_bytes().to_vec();
        for d in dims {
            b.extend_from_slice(&d.to_be_bytes());
        }
        b.extend_from_slice(payload);
        b
    }

    #[test]
    fn parses_images_and_labels() {
        let t = parse_idx(&idx_bytes(0x0803, &[2, 2, 3], &[0; 12])).unwrap();
        assert_eq!(t.dims, vec![2, 2, 3]);
        let l = parse_idx(&idx_bytes(0x0801, &[3], &[7, 0, 9])).unwrap();
        assert_eq!(l.data, vec![7, 0, 9]);
    }

    #[test]
    fn ten_thousand_image_header() {
        let mut b = idx_bytes(0x0803, &[10000, 28, 28], &[]);
        b.resize(b.len() + 10000 * 784, 0);
        assert_eq!(parse_idx(&b).unwrap().dims, vec![10000, 28, 28]);
    }

    #[test]
    fn rejects_bad_files() {
        assert!(matches!(parse_idx(&idx_bytes(0x0d03, &[1, 1, 1], &[0; 4])), Err(Error::Format { .. })));
        assert!(matches!(parse_idx(&idx_bytes(0x0803, &[2, 2, 2], &[0; 7])), Err(Error::Format { .. })));
        assert!(matches!(parse_idx(&[0, 0, 8]), Err(Error::Format { .. })));
        assert!(matches!(parse_idx(&idx_bytes(0x0803, &[2], &[])), Err(Error::Format { .. })));
    }

    #[test]
    fn gzip_transparent() {
        use flate2::write::GzEncoder;
        use std::io::Write;
        let raw = idx_bytes(0x0801, &[2], &[3, 4]);
        let mut enc = GzEncoder::new(Vec::new(), flate2::Compression::default());
        enc.write_all(&raw).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("l.gz");
        fs::write(&p, enc.finish().unwrap()).unwrap();
        assert_eq!(read_idx(&p).unwrap().data, vec![3, 4]);
    }

    #[test]
    fn padding_centers_images() {
        let imgs = IdxTensor { dims: vec![1, 2, 2], data: vec![1, 2, 3, 4] };
        let labels = IdxTensor { dims: vec![1], data: vec![5] };
        let d = idx_to_images(&imgs, &labels, 4).unwrap();
        assert_eq!(d.dims(), [1, 1, 4, 4]);
        assert_eq!(d.pixels(), &Pixels::U8(vec![0, 0, 0, 0, 0, 1, 2, 0, 0, 3, 4, 0, 0, 0, 0, 0]));
    }
}
