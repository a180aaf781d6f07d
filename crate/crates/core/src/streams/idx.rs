//! IDX binary arrays, the format the MNIST files ship in.
//!
//! Layout: two zero bytes, a type byte (`0x08` unsigned byte, `0x0D` 32-bit
//! float), a dimension-count byte, one big-endian `u32` size per dimension,
//! then the payload in row-major order (big-endian for floats).

use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum IdxData {
    U8(Vec<u8>),
    F32(Vec<f32>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct IdxArray {
    pub dims: Vec<usize>,
    pub data: IdxData,
}

impl IdxArray {
    pub fn len(&self) -> usize {
        match &self.data {
            IdxData::U8(v) => v.len(),
            IdxData::F32(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Values as reals: bytes scaled by 1/255, floats unchanged.
    pub fn values(&self) -> Vec<f64> {
        match &self.data {
            IdxData::U8(v) => v.iter().map(|&b| f64::from(b) / 255.0).collect(),
            IdxData::F32(v) => v.iter().map(|&f| f64::from(f)).collect(),
        }
    }

    /// Raw bytes, for label files.
    pub fn bytes(&self) -> Option<&[u8]> {
        match &self.data {
            IdxData::U8(v) => Some(v),
            IdxData::F32(_) => None,
        }
    }

    /// Number of items along the first dimension.
    pub fn items(&self) -> usize {
        self.dims.first().copied().unwrap_or(0)
    }

    /// Values per item.
    pub fn item_len(&self) -> usize {
        self.dims.iter().skip(1).product()
    }
}

/// Parses an IDX array. Errors carry the byte offset where parsing failed.
pub fn parse_idx(bytes: &[u8]) -> Result<IdxArray> {
    if bytes.len() < 4 {
        return Err(Error::Parse {
            offset: bytes.len(),
            message: format!("expected 4-byte magic, file has {} bytes", bytes.len()),
        });
    }
    if bytes[0] != 0 || bytes[1] != 0 {
        return Err(Error::Parse {
            offset: 0,
            message: format!("bad magic {:02x} {:02x}, expected 00 00", bytes[0], bytes[1]),
        });
    }
    let elem = match bytes[2] {
        0x08 => 1,
        0x0D => 4,
        t => {
            return Err(Error::Parse {
                offset: 2,
                message: format!("unsupported type byte 0x{t:02x}"),
            })
        }
    };
    let ndim = bytes[3] as usize;
    let header = 4 + 4 * ndim;
    if bytes.len() < header {
        return Err(Error::Parse {
            offset: bytes.len(),
            message: format!(
                "truncated header: expected {header} bytes for {ndim} dimensions, got {}",
                bytes.len()
            ),
        });
    }
    let dims: Vec<usize> = bytes[4..header]
        .chunks_exact(4)
        .map(|c| u32::from_be_bytes([c[0], c[1], c[2], c[3]]) as usize)
        .collect();
    let count: usize = dims.iter().product();
    let expected = count * elem;
    let payload = &bytes[header..];
    if payload.len() != expected {
        return Err(Error::Parse {
            offset: header + payload.len().min(expected),
            message: format!(
                "payload length mismatch: expected {expected} bytes, got {}",
                payload.len()
            ),
        });
    }
    let data = if elem == 1 {
        IdxData::U8(payload.to_vec())
    } else {
        IdxData::F32(
            payload
                .chunks_exact(4)
                .map(|c| f32::from_be_bytes([c[0], c[1], c[2], c[3]]))
                .collect(),
        )
    };
    Ok(IdxArray { dims, data })
}

pub fn read_idx(path: &Path) -> Result<IdxArray> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_idx(&bytes).map_err(|e| match e {
        Error::Parse { offset, message } => Error::Parse {
            offset,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    })
}

/// Serializes an array back to IDX bytes.
pub fn encode_idx(array: &IdxArray) -> Vec<u8> {
    let mut out = vec![0, 0];
    out.push(match array.data {
        IdxData::U8(_) => 0x08,
        IdxData::F32(_) => 0x0D,
    });
    out.push(array.dims.len() as u8);
    for d in &array.dims {
        out.extend_from_slice(&(*d as u32).to_be_bytes());
    }
    match &array.data {
        IdxData::U8(v) => out.extend_from_slice(v),
        IdxData::F32(v) => v.iter().for_each(|f| out.extend_from_slice(&f.to_be_bytes())),
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn scales_unsigned_bytes() {
        let a = parse_idx(&[0, 0, 0x08, 1, 0, 0, 0, 3, 0, 128, 255]).unwrap();
        assert_eq!(a.dims, vec![3]);
        assert_eq!(a.values(), vec![0.0, 128.0 / 255.0, 1.0]);
    }

    #[test]
    fn reads_floats_big_endian() {
        let mut bytes = vec![0, 0, 0x0D, 2, 0, 0, 0, 1, 0, 0, 0, 2];
        bytes.extend_from_slice(&1.5f32.to_be_bytes());
        bytes.extend_from_slice(&(-2.0f32).to_be_bytes());
        let a = parse_idx(&bytes).unwrap();
        assert_eq!(a.dims, vec![1, 2]);
        assert_eq!(a.values(), vec![1.5, -2.0]);
    }

    #[test]
    fn truncated_payload_names_lengths() {
        let err = parse_idx(&[0, 0, 0x08, 1, 0, 0, 0, 3, 1, 2]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("expected 3 bytes, got 2"), "{msg}");
        assert!(matches!(err, Error::Parse { offset: 10, .. }));
    }

    #[test]
    fn bad_magic_and_type() {
        assert!(matches!(
            parse_idx(&[1, 0, 0x08, 0]),
            Err(Error::Parse { offset: 0, .. })
        ));
        assert!(matches!(
            parse_idx(&[0, 0, 0x0C, 0]),
            Err(Error::Parse { offset: 2, .. })
        ));
        assert!(matches!(parse_idx(&[0, 0]), Err(Error::Parse { .. })));
        assert!(matches!(
            parse_idx(&[0, 0, 0x08, 2, 0, 0, 0, 1]),
            Err(Error::Parse { offset: 8, .. })
        ));
    }

    proptest! {
        #[test]
        fn encode_parse_round_trip(rows in 0usize..6, cols in 1usize..6, seed in any::<u64>()) {
            let data: Vec<u8> = (0..rows * cols).map(|i| (seed.wrapping_mul(i as u64 + 1) >> 7) as u8).collect();
            let a = IdxArray { dims: vec![rows, cols], data: IdxData::U8(data) };
            prop_assert_eq!(parse_idx(&encode_idx(&a)).unwrap(), a);
        }
    }
}
