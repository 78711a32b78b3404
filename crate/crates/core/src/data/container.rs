//! The `CND1` tensor container.
//!
//! All integers are little-endian.
//!
//! ```text
//! offset  size        field
//! 0       4           magic "CND1"
//! 4       4           version (u32, = 1)
//! 8       4           entry count (u32)
//! 12      ...         manifest, one record per entry:
//!                       name_len u32, name (UTF-8),
//!                       dtype u32 (0 = u8, 1 = f32, 2 = f64),
//!                       ndim u32, dims u64 × ndim,
//!                       payload offset u64 (absolute)
//! ...     ...         payloads, contiguous, in entry order
//! ```
//!
//! The first payload starts right after the manifest and the file ends
//! exactly at the end of the last payload.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"CND1";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DType {
    U8 = 0,
    F32 = 1,
    F64 = 2,
}

impl DType {
    pub fn size(self) -> usize {
        match self {
            DType::U8 => 1,
            DType::F32 => 4,
            DType::F64 => 8,
        }
    }

    fn from_code(code: u32, offset: u64) -> Result<Self> {
        match code {
            0 => Ok(DType::U8),
            1 => Ok(DType::F32),
            2 => Ok(DType::F64),
            other => Err(Error::format(offset, format!("unknown dtype code {other}"))),
        }
    }
}

/// One named tensor with its raw little-endian payload.
#[derive(Debug, Clone, PartialEq)]
pub struct ContainerTensor {
    pub name: String,
    pub dtype: DType,
    pub dims: Vec<usize>,
    pub bytes: Vec<u8>,
}

impl ContainerTensor {
    pub fn u8(name: &str, dims: Vec<usize>, data: Vec<u8>) -> Self {
        Self {
            name: name.to_string(),
            dtype: DType::U8,
            dims,
            bytes: data,
        }
    }

    pub fn f32(name: &str, dims: Vec<usize>, data: &[f32]) -> Self {
        Self {
            name: name.to_string(),
            dtype: DType::F32,
            dims,
            bytes: data.iter().flat_map(|v| v.to_le_bytes()).collect(),
        }
    }

    pub fn f64(name: &str, dims: Vec<usize>, data: Vec<f64>) -> Self {
        Self {
            name: name.to_string(),
            dtype: DType::F64,
            dims,
            bytes: data.iter().flat_map(|v| v.to_le_bytes()).collect(),
        }
    }

    pub fn elements(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn as_u8(&self) -> Result<&[u8]> {
        match self.dtype {
            DType::U8 => Ok(&self.bytes),
            other => Err(Error::format(
                0,
                format!("entry `{}` is {other:?}, expected U8", self.name),
            )),
        }
    }

    /// Payload converted to `f64` (exact for every supported dtype).
    pub fn to_f64(&self) -> Vec<f64> {
        match self.dtype {
            DType::U8 => self.bytes.iter().map(|&b| f64::from(b)).collect(),
            DType::F32 => self
                .bytes
                .chunks_exact(4)
                .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes"))))
                .collect(),
            DType::F64 => self
                .bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect(),
        }
    }
}

pub fn encode(entries: &[ContainerTensor]) -> Result<Vec<u8>> {
    let mut manifest_len = 12usize;
    for e in entries {
        if e.elements() * e.dtype.size() != e.bytes.len() {
            return Err(Error::invalid(format!(
                "entry `{}` dims {:?} need {} bytes, payload has {}",
                e.name,
                e.dims,
                e.elements() * e.dtype.size(),
                e.bytes.len()
            )));
        }
        manifest_len += 4 + e.name.len() + 4 + 4 + 8 * e.dims.len() + 8;
    }
    let total = manifest_len + entries.iter().map(|e| e.bytes.len()).sum::<usize>();
    let mut out = Vec::with_capacity(total);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    let mut offset = manifest_len as u64;
    for e in entries {
        out.extend_from_slice(&(e.name.len() as u32).to_le_bytes());
        out.extend_from_slice(e.name.as_bytes());
        out.extend_from_slice(&(e.dtype as u32).to_le_bytes());
        out.extend_from_slice(&(e.dims.len() as u32).to_le_bytes());
        for &d in &e.dims {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        out.extend_from_slice(&offset.to_le_bytes());
        offset += e.bytes.len() as u64;
    }
    for e in entries {
        out.extend_from_slice(&e.bytes);
    }
    debug_assert_eq!(out.len(), total);
    Ok(out)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::format(
                self.pos as u64,
                format!(
                    "truncated while reading {what}: need {n} bytes, {} remain",
                    self.buf.len() - self.pos
                ),
            ));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
}

pub fn decode(buf: &[u8]) -> Result<Vec<ContainerTensor>> {
    let mut cur = Cursor { buf, pos: 0 };
    let magic = cur.take(4, "magic")?;
    if magic != MAGIC {
        return Err(Error::format(0, format!("bad magic {magic:?}, expected \"CND1\"")));
    }
    let version = cur.u32("version")?;
    if version != VERSION {
        return Err(Error::format(4, format!("unsupported version {version}")));
    }
    let count = cur.u32("entry count")? as usize;

    struct Record {
        name: String,
        dtype: DType,
        dims: Vec<usize>,
        offset: u64,
        at: u64,
    }
    let mut records = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let at = cur.pos as u64;
        let name_len = cur.u32("name length")? as usize;
        let name = std::str::from_utf8(cur.take(name_len, "entry name")?)
            .map_err(|_| Error::format(at + 4, "entry name is not UTF-8"))?
            .to_string();
        let dtype_at = cur.pos as u64;
        let dtype = DType::from_code(cur.u32("dtype")?, dtype_at)?;
        let ndim = cur.u32("ndim")? as usize;
        let mut dims = Vec::with_capacity(ndim.min(16));
        for _ in 0..ndim {
            dims.push(cur.u64("dims")? as usize);
        }
        let offset = cur.u64("payload offset")?;
        records.push(Record {
            name,
            dtype,
            dims,
            offset,
            at,
        });
    }

    let mut expected_offset = cur.pos as u64;
    let mut out = Vec::with_capacity(records.len());
    for r in records {
        if r.offset != expected_offset {
            return Err(Error::format(
                r.at,
                format!(
                    "entry `{}` payload offset {} but payloads are contiguous from {expected_offset}",
                    r.name, r.offset
                ),
            ));
        }
        let len = r
            .dims
            .iter()
            .try_fold(r.dtype.size(), |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::format(r.at, format!("entry `{}` dims overflow", r.name)))?;
        let available = buf.len() as u64 - expected_offset.min(buf.len() as u64);
        if (len as u64) > available {
            return Err(Error::format(
                expected_offset,
                format!(
                    "entry `{}` dims {:?} declare {len} payload bytes, file holds {available}",
                    r.name, r.dims
                ),
            ));
        }
        let start = expected_offset as usize;
        out.push(ContainerTensor {
            name: r.name,
            dtype: r.dtype,
            dims: r.dims,
            bytes: buf[start..start + len].to_vec(),
        });
        expected_offset += len as u64;
    }
    if expected_offset != buf.len() as u64 {
        return Err(Error::format(
            expected_offset,
            format!(
                "declared payloads end at byte {expected_offset}, file has {} bytes",
                buf.len()
            ),
        ));
    }
    Ok(out)
}

pub fn write_file(path: &Path, entries: &[ContainerTensor]) -> Result<()> {
    let bytes = encode(entries)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_file(path: &Path) -> Result<Vec<ContainerTensor>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}
