//! The `NTT1` binary tensor format and the label sidecar.
//!
//! Layout, all integers little-endian:
//!
//! | bytes        | content                                   |
//! |--------------|-------------------------------------------|
//! | 4            | magic `NTT1`                              |
//! | 2            | format version (`1`)                      |
//! | 1            | dtype: `0` = f64, `1` = f32               |
//! | 1            | order `N`                                 |
//! | 8 N          | extents as u64                            |
//! | 8 or 4 each  | payload, row-major                        |
//! | 4            | CRC32 (IEEE) of the payload bytes         |
//!
//! Labels live in a text file with one non-negative integer per line.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::DenseTensor;

pub const TENSOR_MAGIC: &[u8; 4] = b"NTT1";
pub const TENSOR_VERSION: u16 = 1;

/// Scalar encoding of an `NTT1` payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F64,
    F32,
}

impl Dtype {
    fn code(self) -> u8 {
        match self {
            Dtype::F64 => 0,
            Dtype::F32 => 1,
        }
    }

    fn width(self) -> usize {
        match self {
            Dtype::F64 => 8,
            Dtype::F32 => 4,
        }
    }
}

/// Serializes `x` as a complete `NTT1` blob.
pub fn encode_tensor(x: &DenseTensor, dtype: Dtype) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 8 * x.order() + dtype.width() * x.len() + 4);
    out.extend_from_slice(TENSOR_MAGIC);
    out.extend_from_slice(&TENSOR_VERSION.to_le_bytes());
    out.push(dtype.code());
    out.push(x.order() as u8);
    for &d in x.shape() {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    let start = out.len();
    match dtype {
        Dtype::F64 => x.data().iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
        Dtype::F32 => x
            .data()
            .iter()
            .for_each(|&v| out.extend_from_slice(&(v as f32).to_le_bytes())),
    }
    let crc = crc32fast::hash(&out[start..]);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

/// Bounds-checked little-endian reader; offsets in errors are absolute.
pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    base: u64,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(bytes: &'a [u8], base: u64) -> Self {
        Self { bytes, pos: 0, base }
    }

    pub(crate) fn offset(&self) -> u64 {
        self.base + self.pos as u64
    }

    pub(crate) fn position(&self) -> usize {
        self.pos
    }

    pub(crate) fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::format(
                self.offset(),
                format!("truncated {what}: need {n} bytes, {} left", self.bytes.len() - self.pos),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub(crate) fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    pub(crate) fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    pub(crate) fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

/// Parses one `NTT1` blob from the front of `bytes`. `base` is the absolute
/// offset of `bytes[0]`, used in error messages. Returns the tensor and the
/// number of bytes consumed.
pub fn decode_tensor(bytes: &[u8], base: u64) -> Result<(DenseTensor, usize)> {
    let mut r = Reader::new(bytes, base);
    let magic_at = r.offset();
    if r.take(4, "magic")? != TENSOR_MAGIC {
        return Err(Error::format(magic_at, "bad magic, expected NTT1"));
    }
    let version_at = r.offset();
    let version = r.u16("version")?;
    if version != TENSOR_VERSION {
        return Err(Error::format(version_at, format!("unsupported version {version}")));
    }
    let dtype_at = r.offset();
    let dtype = match r.u8("dtype")? {
        0 => Dtype::F64,
        1 => Dtype::F32,
        c => return Err(Error::format(dtype_at, format!("unknown dtype code {c}"))),
    };
    let order_at = r.offset();
    let order = r.u8("order")? as usize;
    if order == 0 {
        return Err(Error::format(order_at, "order 0 tensors are not allowed"));
    }
    let mut shape = Vec::with_capacity(order);
    let mut count: u64 = 1;
    for n in 0..order {
        let at = r.offset();
        let d = r.u64("extents")?;
        if d == 0 {
            return Err(Error::format(at, format!("extent of mode {n} is zero")));
        }
        count = count
            .checked_mul(d)
            .ok_or_else(|| Error::format(at, "element count overflows"))?;
        shape.push(usize::try_from(d).map_err(|_| Error::format(at, "extent too large"))?);
    }
    let payload_at = r.offset();
    let needed = count
        .checked_mul(dtype.width() as u64)
        .and_then(|n| usize::try_from(n).ok())
        .ok_or_else(|| Error::format(payload_at, "payload size overflows"))?;
    let available = bytes.len() - r.position();
    if available < needed + 4 {
        return Err(Error::format(
            payload_at,
            format!(
                "truncated payload: {count} elements need {} bytes plus checksum, {available} present",
                needed
            ),
        ));
    }
    let payload = r.take(needed, "payload")?;
    let crc_at = r.offset();
    let stored = r.u32("checksum")?;
    let actual = crc32fast::hash(payload);
    if stored != actual {
        return Err(Error::format(
            crc_at,
            format!("checksum mismatch: stored {stored:08x}, computed {actual:08x}"),
        ));
    }
    let data: Vec<f64> = match dtype {
        Dtype::F64 => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
        Dtype::F32 => payload
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
            .collect(),
    };
    let t = DenseTensor::from_data(shape, data).map_err(|e| Error::format(payload_at, e.to_string()))?;
    Ok((t, r.position()))
}

pub fn save_tensor(path: impl AsRef<Path>, x: &DenseTensor) -> Result<()> {
    save_tensor_as(path, x, Dtype::F64)
}

pub fn save_tensor_as(path: impl AsRef<Path>, x: &DenseTensor, dtype: Dtype) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_tensor(x, dtype)).map_err(|e| Error::io(path, e))
}

/// Reads a file holding exactly one `NTT1` blob.
pub fn load_tensor(path: impl AsRef<Path>) -> Result<DenseTensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (t, used) = decode_tensor(&bytes, 0)?;
    if used != bytes.len() {
        return Err(Error::format(
            used as u64,
            format!("{} trailing bytes", bytes.len() - used),
        ));
    }
    Ok(t)
}

pub fn write_labels(path: impl AsRef<Path>, labels: &[usize]) -> Result<()> {
    let path = path.as_ref();
    let mut text = String::with_capacity(labels.len() * 3);
    for l in labels {
        text.push_str(&l.to_string());
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Reads a label sidecar. Blank lines are ignored.
pub fn read_labels(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim()
                .parse()
                .map_err(|_| Error::Input(format!("{}: line {}: {l:?} is not a label", path.display(), i + 1)))
        })
        .collect()
}
