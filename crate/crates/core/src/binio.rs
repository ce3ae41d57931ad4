//! Little-endian binary array layout shared by dataset records, spectrogram
//! tensors and checkpoints.
//!
//! One array record is:
//!
//! | bytes      | content                                  |
//! |------------|------------------------------------------|
//! | 4          | magic `CSAR`                             |
//! | 1          | format version, currently `1`            |
//! | 1          | dtype code: `1` = float32, `2` = float64 |
//! | 2          | `ndim` as u16                            |
//! | 8 × ndim   | dimensions as u64, outermost first       |
//! | elem × n   | row-major data                           |
//!
//! A file may hold several records back to back; readers consume them in
//! order until end of file.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{ArrayD, ArrayViewD, IxDyn};

use crate::error::{CassError, Result};
use crate::real::Real;

pub const MAGIC: &[u8; 4] = b"CSAR";
pub const VERSION: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DType {
    F32,
    F64,
}

impl DType {
    pub fn code(self) -> u8 {
        match self {
            DType::F32 => 1,
            DType::F64 => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(DType::F32),
            2 => Some(DType::F64),
            _ => None,
        }
    }

    pub fn size(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F64 => 8,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DType::F32 => "f32",
            DType::F64 => "f64",
        }
    }
}

/// Append one array record, stored with `T`'s own dtype.
pub fn encode_array<T: Real>(out: &mut Vec<u8>, array: &ArrayViewD<'_, T>) {
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(T::DTYPE.code());
    out.extend_from_slice(&(array.ndim() as u16).to_le_bytes());
    for &d in array.shape() {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    // `iter` walks logical row-major order regardless of memory layout.
    for &v in array.iter() {
        v.write_le(out);
    }
}

/// Append one array record converting the values to float32.
pub fn encode_array_f32(out: &mut Vec<u8>, array: &ArrayViewD<'_, f64>) {
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(DType::F32.code());
    out.extend_from_slice(&(array.ndim() as u16).to_le_bytes());
    for &d in array.shape() {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for &v in array.iter() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let slice = self.bytes.get(self.pos..end)?;
        self.pos = end;
        Some(slice)
    }
}

/// Decode every array record in `bytes`, converting to `T`.
///
/// A float32 record read as `f32` (or a float64 record read as `f64`) is
/// bit-exact.
pub fn decode_arrays<T: Real>(bytes: &[u8], origin: &Path) -> Result<Vec<ArrayD<T>>> {
    let bad = |reason: &str| CassError::format(origin, reason);
    let mut cur = Cursor { bytes, pos: 0 };
    let mut arrays = Vec::new();
    while cur.pos < bytes.len() {
        let magic = cur.take(4).ok_or_else(|| bad("truncated header"))?;
        if magic != MAGIC {
            return Err(bad("bad magic bytes"));
        }
        let head = cur.take(4).ok_or_else(|| bad("truncated header"))?;
        if head[0] != VERSION {
            return Err(bad(&format!("unsupported version {}", head[0])));
        }
        let dtype = DType::from_code(head[1]).ok_or_else(|| bad("unknown dtype code"))?;
        let ndim = u16::from_le_bytes([head[2], head[3]]) as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            let d = cur.take(8).ok_or_else(|| bad("truncated shape"))?;
            shape.push(u64::from_le_bytes(d.try_into().expect("8 bytes")) as usize);
        }
        let count = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| bad("shape overflow"))?;
        let data = cur
            .take(count.checked_mul(dtype.size()).ok_or_else(|| bad("shape overflow"))?)
            .ok_or_else(|| bad("truncated data"))?;
        let values: Vec<T> = match dtype {
            d if d == T::DTYPE => data.chunks_exact(d.size()).map(T::read_le).collect(),
            DType::F32 => data
                .chunks_exact(4)
                .map(|c| T::lit(f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64))
                .collect(),
            DType::F64 => data
                .chunks_exact(8)
                .map(|c| T::lit(f64::from_le_bytes(c.try_into().expect("8 bytes"))))
                .collect(),
        };
        let array = ArrayD::from_shape_vec(IxDyn(&shape), values)
            .map_err(|e| bad(&e.to_string()))?;
        arrays.push(array);
    }
    Ok(arrays)
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| CassError::io(path, e))?;
    f.write_all(bytes).map_err(|e| CassError::io(path, e))
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    let mut f = fs::File::open(path).map_err(|e| CassError::io(path, e))?;
    let mut bytes = Vec::new();
    f.read_to_end(&mut bytes).map_err(|e| CassError::io(path, e))?;
    Ok(bytes)
}

pub fn save_arrays<T: Real>(path: &Path, arrays: &[ArrayViewD<'_, T>]) -> Result<()> {
    let mut bytes = Vec::new();
    for a in arrays {
        encode_array(&mut bytes, a);
    }
    write_file(path, &bytes)
}

pub fn load_arrays<T: Real>(path: &Path) -> Result<Vec<ArrayD<T>>> {
    decode_arrays(&read_file(path)?, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr1, arr2};
    use proptest::prelude::*;

    #[test]
    fn header_layout_is_exact() {
        let a = arr2(&[[1.0f32, 2.0], [3.0, 4.0]]).into_dyn();
        let mut bytes = Vec::new();
        encode_array(&mut bytes, &a.view());
        assert_eq!(&bytes[..4], b"CSAR");
        assert_eq!(bytes[4], 1);
        assert_eq!(bytes[5], 1);
        assert_eq!(&bytes[6..8], &2u16.to_le_bytes());
        assert_eq!(&bytes[8..16], &2u64.to_le_bytes());
        assert_eq!(&bytes[16..24], &2u64.to_le_bytes());
        assert_eq!(&bytes[24..28], &1.0f32.to_le_bytes());
        assert_eq!(&bytes[36..40], &4.0f32.to_le_bytes());
        assert_eq!(bytes.len(), 40);
    }

    #[test]
    fn transposed_views_serialize_in_logical_order() {
        let a = arr2(&[[1.0f64, 2.0], [3.0, 4.0]]);
        let mut bytes = Vec::new();
        encode_array(&mut bytes, &a.t().into_dyn());
        let back = decode_arrays::<f64>(&bytes, Path::new("mem")).unwrap();
        assert_eq!(back[0], a.t().to_owned().into_dyn());
    }

    #[test]
    fn corrupt_input_is_rejected() {
        let a = arr1(&[1.0f32, 2.0]).into_dyn();
        let mut bytes = Vec::new();
        encode_array(&mut bytes, &a.view());
        assert!(decode_arrays::<f32>(&bytes[..bytes.len() - 1], Path::new("x")).is_err());
        bytes[0] = b'X';
        assert!(decode_arrays::<f32>(&bytes, Path::new("x")).is_err());
    }

    proptest! {
        #[test]
        fn multi_record_roundtrip_is_bit_exact(
            a in proptest::collection::vec(any::<f32>().prop_filter("finite", |v| v.is_finite()), 0..40),
            b in proptest::collection::vec(-1e6f64..1e6, 1..20),
        ) {
            let a = ArrayD::from_shape_vec(IxDyn(&[a.len()]), a).unwrap();
            let b = ArrayD::from_shape_vec(IxDyn(&[1, b.len()]), b).unwrap();
            let mut bytes = Vec::new();
            encode_array(&mut bytes, &a.view());
            encode_array(&mut bytes, &b.view());
            let back32 = decode_arrays::<f32>(&bytes[..], Path::new("m")).unwrap();
            prop_assert_eq!(&back32[0], &a);
            let back64 = decode_arrays::<f64>(&bytes[..], Path::new("m")).unwrap();
            prop_assert_eq!(&back64[1], &b);
        }
    }
}
