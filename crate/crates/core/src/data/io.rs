//! MIXQ activation files.
//!
//! Layout (all integers little-endian):
//!
//! | offset | size | field                          |
//! |--------|------|--------------------------------|
//! | 0      | 4    | magic `b"MIXQ"`                |
//! | 4      | 4    | version, `u32` = 1             |
//! | 8      | 1    | dtype, `u8` (0 = f32)          |
//! | 9      | 3    | reserved                       |
//! | 12     | 8    | rows `m`, `u64`                |
//! | 20     | 8    | cols `d`, `u64`                |
//! | 28     | 4·m·d| row-major little-endian `f32`  |

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::Matrix;
use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"MIXQ";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 28;

pub const DTYPE_F32: u8 = 0;
pub const DTYPE_INT_CODES: u8 = 1;
pub const DTYPE_FP4_CODES: u8 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Header {
    pub dtype: u8,
    pub reserved: [u8; 3],
    pub rows: u64,
    pub cols: u64,
}

impl Header {
    pub fn encode(&self) -> [u8; HEADER_LEN] {
        let mut out = [0u8; HEADER_LEN];
        out[0..4].copy_from_slice(&MAGIC);
        out[4..8].copy_from_slice(&VERSION.to_le_bytes());
        out[8] = self.dtype;
        out[9..12].copy_from_slice(&self.reserved);
        out[12..20].copy_from_slice(&self.rows.to_le_bytes());
        out[20..28].copy_from_slice(&self.cols.to_le_bytes());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Header> {
        if bytes.len() < 4 || bytes[0..4] != MAGIC {
            return Err(Error::BadMagic);
        }
        if bytes.len() < HEADER_LEN {
            return Err(Error::TruncatedPayload {
                expected: HEADER_LEN as u64,
                found: bytes.len() as u64,
            });
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != VERSION {
            return Err(Error::VersionMismatch {
                found: version,
                expected: VERSION,
            });
        }
        Ok(Header {
            dtype: bytes[8],
            reserved: [bytes[9], bytes[10], bytes[11]],
            rows: u64::from_le_bytes(bytes[12..20].try_into().unwrap()),
            cols: u64::from_le_bytes(bytes[20..28].try_into().unwrap()),
        })
    }
}

pub fn write_activations(set: &Matrix, mut w: impl Write) -> Result<()> {
    let header = Header {
        dtype: DTYPE_F32,
        reserved: [0; 3],
        rows: set.rows() as u64,
        cols: set.cols() as u64,
    };
    w.write_all(&header.encode())?;
    let mut buf = Vec::with_capacity(set.as_slice().len() * 4);
    for &v in set.as_slice() {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_activations(mut r: impl Read) -> Result<Matrix> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    decode_activations(&bytes)
}

pub fn decode_activations(bytes: &[u8]) -> Result<Matrix> {
    let header = Header::decode(bytes)?;
    if header.dtype != DTYPE_F32 {
        return Err(Error::UnsupportedDtype(header.dtype));
    }
    let count = header
        .rows
        .checked_mul(header.cols)
        .and_then(|c| c.checked_mul(4))
        .ok_or_else(|| Error::InvalidParams("declared shape overflows".into()))?;
    let payload = &bytes[HEADER_LEN..];
    if (payload.len() as u64) < count {
        return Err(Error::TruncatedPayload {
            expected: count,
            found: payload.len() as u64,
        });
    }
    if (payload.len() as u64) > count {
        return Err(Error::TrailingBytes(payload.len() as u64 - count));
    }
    let data: Vec<f64> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    Matrix::new(header.rows as usize, header.cols as usize, data)
}

/// Writes `set` as a MIXQ file. Values are narrowed to `f32`.
pub fn save_activations(set: &Matrix, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_activations(set, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_activations(path: impl AsRef<Path>) -> Result<Matrix> {
    read_activations(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn encode(set: &Matrix) -> Vec<u8> {
        let mut buf = Vec::new();
        write_activations(set, &mut buf).unwrap();
        buf
    }

    #[test]
    fn round_trip_small() {
        let set = Matrix::from_rows(&[[1.0, 2.0, 3.0, 4.0]]).unwrap();
        let bytes = encode(&set);
        assert_eq!(bytes.len(), HEADER_LEN + 16);
        assert_eq!(&bytes[0..4], b"MIXQ");
        assert_eq!(decode_activations(&bytes).unwrap(), set);
    }

    #[test]
    fn empty_file_is_bad_magic() {
        assert!(matches!(decode_activations(&[]), Err(Error::BadMagic)));
        assert!(matches!(
            decode_activations(b"NOPE0000"),
            Err(Error::BadMagic)
        ));
    }

    #[test]
    fn truncated_payload() {
        let set = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        let bytes = encode(&set);
        let err = decode_activations(&bytes[..bytes.len() - 3]).unwrap_err();
        assert!(matches!(
            err,
            Error::TruncatedPayload {
                expected: 16,
                found: 13
            }
        ));
    }

    #[test]
    fn version_and_dtype_checks() {
        let set = Matrix::from_rows(&[[1.0]]).unwrap();
        let mut bytes = encode(&set);
        bytes[4] = 2;
        assert!(matches!(
            decode_activations(&bytes),
            Err(Error::VersionMismatch {
                found: 2,
                expected: 1
            })
        ));
        let mut bytes = encode(&set);
        bytes[8] = 9;
        assert!(matches!(
            decode_activations(&bytes),
            Err(Error::UnsupportedDtype(9))
        ));
    }

    #[test]
    fn non_finite_payload_rejected() {
        let set = Matrix::from_rows(&[[1.0, 2.0]]).unwrap();
        let mut bytes = encode(&set);
        bytes[HEADER_LEN + 4..].copy_from_slice(&f32::INFINITY.to_le_bytes());
        assert!(matches!(
            decode_activations(&bytes),
            Err(Error::NonFinite { row: 0, col: 1 })
        ));
    }

    proptest! {
        #[test]
        fn f32_payloads_round_trip_bit_exactly(
            bits in proptest::collection::vec(any::<u32>(), 1..48),
            cols in 1usize..6,
        ) {
            let vals: Vec<f64> = bits
                .iter()
                .map(|&b| f32::from_bits(b))
                .filter(|v| v.is_finite())
                .map(|v| v as f64)
                .collect();
            let rows = vals.len() / cols;
            prop_assume!(rows > 0);
            let mut vals = vals[..rows * cols].to_vec();
            vals[0] = -0.0;
            let set = Matrix::new(rows, cols, vals).unwrap();
            let back = decode_activations(&encode(&set)).unwrap();
            for (a, b) in set.as_slice().iter().zip(back.as_slice()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
