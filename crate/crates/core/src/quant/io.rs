//! MIXQ-Q container for quantized tensors.
//!
//! The standard 28-byte MIXQ header (dtype 1 for INT codes, 2 for FP4
//! codes) is followed by, little-endian throughout:
//!
//! | size      | field                                                  |
//! |-----------|--------------------------------------------------------|
//! | 1         | format: 0 int symmetric, 1 int asymmetric, 2 fp4, 3 mxfp4 |
//! | 1         | bits                                                   |
//! | 1         | granularity: 0 per channel, 1 per token, 2 per group   |
//! | 1         | scale search: 0 absmax, 1 mse linear                   |
//! | 4         | group size (`u32`, 0 unless per group)                 |
//! | 4         | grid size (`u32`, 0 for absmax)                        |
//! | 8         | alpha min (`f64`)                                      |
//! | 8         | fp4 divisor (`f64`, 0 unless fp4)                      |
//! | 8         | unit count `u` (`u64`)                                 |
//! | 8·u       | scales (`f64`)                                         |
//! | 8·u       | zero points (`f64`)                                    |
//! | 8         | clamped count `c` (`u64`)                              |
//! | 8·c       | clamped unit indices (`u64`)                           |
//! | codes     | bits ≤ 4: two codes per byte, low nibble first; else one byte per code |
//!
//! Codes are stored as two's-complement nibbles or bytes. Asymmetric codes
//! are unsigned.

use std::fs;
use std::path::Path;

use super::{Format, Granularity, QuantizedTensor, QuantizerConfig, ScaleSearch};
use crate::data::io::{Header, DTYPE_FP4_CODES, DTYPE_INT_CODES, HEADER_LEN};
use crate::error::{Error, Result};

pub fn encode_quantized(qt: &QuantizedTensor) -> Vec<u8> {
    let cfg = qt.config();
    let dtype = if matches!(cfg.format, Format::Fp4 { .. } | Format::Mxfp4) {
        DTYPE_FP4_CODES
    } else {
        DTYPE_INT_CODES
    };
    let mut out = Header {
        dtype,
        reserved: [0; 3],
        rows: qt.rows() as u64,
        cols: qt.cols() as u64,
    }
    .encode()
    .to_vec();
    let (fmt, divisor) = match cfg.format {
        Format::IntSymmetric { .. } => (0u8, 0.0),
        Format::IntAsymmetric { .. } => (1, 0.0),
        Format::Fp4 { divisor } => (2, divisor),
        Format::Mxfp4 => (3, 0.0),
    };
    let (gran, group) = match cfg.granularity {
        Granularity::PerChannel => (0u8, 0u32),
        Granularity::PerToken => (1, 0),
        Granularity::PerGroup { size } => (2, size as u32),
    };
    let (search, grid, alpha_min) = match cfg.scale_search {
        ScaleSearch::Absmax => (0u8, 0u32, 1.0),
        ScaleSearch::MseLinear {
            grid_size,
            alpha_min,
        } => (1, grid_size as u32, alpha_min),
    };
    out.extend_from_slice(&[fmt, cfg.bits(), gran, search]);
    out.extend_from_slice(&group.to_le_bytes());
    out.extend_from_slice(&grid.to_le_bytes());
    out.extend_from_slice(&alpha_min.to_le_bytes());
    out.extend_from_slice(&divisor.to_le_bytes());
    out.extend_from_slice(&(qt.scales().len() as u64).to_le_bytes());
    for v in qt.scales().iter().chain(qt.zero_points()) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&(qt.clamped().len() as u64).to_le_bytes());
    for &u in qt.clamped() {
        out.extend_from_slice(&(u as u64).to_le_bytes());
    }
    if cfg.bits() <= 4 {
        for pair in qt.codes().chunks(2) {
            let lo = (pair[0] as u8) & 0x0f;
            let hi = pair.get(1).map_or(0, |&c| (c as u8) & 0x0f);
            out.push(lo | (hi << 4));
        }
    } else {
        out.extend(qt.codes().iter().map(|&c| c as u8));
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(Error::TruncatedPayload {
                expected: (self.pos + n) as u64,
                found: self.bytes.len() as u64,
            });
        };
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn len(&mut self, per_item: usize) -> Result<usize> {
        let n = self.u64()?;
        let remaining = (self.bytes.len() - self.pos) as u64;
        if n.saturating_mul(per_item as u64) > remaining {
            return Err(Error::TruncatedPayload {
                expected: self.pos as u64 + n.saturating_mul(per_item as u64),
                found: self.bytes.len() as u64,
            });
        }
        Ok(n as usize)
    }
}

pub fn decode_quantized(bytes: &[u8]) -> Result<QuantizedTensor> {
    let header = Header::decode(bytes)?;
    if header.dtype != DTYPE_INT_CODES && header.dtype != DTYPE_FP4_CODES {
        return Err(Error::UnsupportedDtype(header.dtype));
    }
    let mut cur = Cursor {
        bytes,
        pos: HEADER_LEN,
    };
    let (fmt, bits, gran, search) = (cur.u8()?, cur.u8()?, cur.u8()?, cur.u8()?);
    let (group, grid) = (cur.u32()? as usize, cur.u32()? as usize);
    let (alpha_min, divisor) = (cur.f64()?, cur.f64()?);
    let format = match fmt {
        0 => Format::IntSymmetric { bits },
        1 => Format::IntAsymmetric { bits },
        2 => Format::Fp4 { divisor },
        3 => Format::Mxfp4,
        f => return Err(Error::InvalidParams(format!("unknown format code {f}"))),
    };
    let fp4 = matches!(format, Format::Fp4 { .. } | Format::Mxfp4);
    if fp4 != (header.dtype == DTYPE_FP4_CODES) {
        return Err(Error::InvalidParams("dtype does not match format".into()));
    }
    let granularity = match gran {
        0 => Granularity::PerChannel,
        1 => Granularity::PerToken,
        2 => Granularity::PerGroup { size: group },
        g => {
            return Err(Error::InvalidParams(format!(
                "unknown granularity code {g}"
            )))
        }
    };
    let scale_search = match search {
        0 => ScaleSearch::Absmax,
        1 => ScaleSearch::MseLinear {
            grid_size: grid,
            alpha_min,
        },
        s => {
            return Err(Error::InvalidParams(format!(
                "unknown scale search code {s}"
            )))
        }
    };
    let config = QuantizerConfig {
        format,
        granularity,
        scale_search,
    };
    config.validate()?;
    let units = cur.len(16)?;
    let scales = (0..units).map(|_| cur.f64()).collect::<Result<Vec<_>>>()?;
    let zero_points = (0..units).map(|_| cur.f64()).collect::<Result<Vec<_>>>()?;
    let n_clamped = cur.len(8)?;
    let clamped = (0..n_clamped)
        .map(|_| cur.u64().map(|u| u as usize))
        .collect::<Result<Vec<_>>>()?;
    let count = header
        .rows
        .checked_mul(header.cols)
        .ok_or_else(|| Error::InvalidParams("declared shape overflows".into()))?
        as usize;
    let signed = !matches!(format, Format::IntAsymmetric { .. });
    let codes: Vec<i16> = if config.bits() <= 4 {
        let packed = cur.take(count.div_ceil(2))?;
        (0..count)
            .map(|i| {
                let nib = (packed[i / 2] >> (4 * (i % 2))) & 0x0f;
                if signed && nib & 0x08 != 0 {
                    nib as i16 - 16
                } else {
                    nib as i16
                }
            })
            .collect()
    } else {
        cur.take(count)?
            .iter()
            .map(|&b| if signed { b as i8 as i16 } else { b as i16 })
            .collect()
    };
    if cur.pos < bytes.len() {
        return Err(Error::TrailingBytes((bytes.len() - cur.pos) as u64));
    }
    QuantizedTensor::from_parts(
        header.rows as usize,
        header.cols as usize,
        codes,
        scales,
        zero_points,
        clamped,
        config,
    )
}

pub fn save_quantized(qt: &QuantizedTensor, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_quantized(qt))?;
    Ok(())
}

pub fn load_quantized(path: impl AsRef<Path>) -> Result<QuantizedTensor> {
    decode_quantized(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Matrix;
    use crate::quant::quantize;

    fn sample() -> Matrix {
        let data = (0..3 * 64)
            .map(|i| ((i * 37 % 101) as f64 - 50.0) / 7.0)
            .collect();
        Matrix::new(3, 64, data).unwrap()
    }

    #[test]
    fn round_trips_every_format() {
        let mut zeros = sample().into_vec();
        zeros[..32].iter_mut().for_each(|v| *v = 0.0);
        let with_zero_group = Matrix::new(3, 64, zeros).unwrap();
        for cfg in [
            QuantizerConfig::int_symmetric(4),
            QuantizerConfig::int_symmetric(8).per_channel(),
            QuantizerConfig::int_asymmetric(4),
            QuantizerConfig::int_asymmetric(7)
                .with_granularity(Granularity::PerGroup { size: 16 })
                .with_scale_search(ScaleSearch::mse()),
            QuantizerConfig::fp4(),
            QuantizerConfig::mxfp4(),
        ] {
            let qt = quantize(&with_zero_group, &cfg).unwrap();
            let bytes = encode_quantized(&qt);
            assert_eq!(decode_quantized(&bytes).unwrap(), qt, "{cfg:?}");
        }
    }

    #[test]
    fn nibble_packing_size() {
        let qt = quantize(&sample(), &QuantizerConfig::int_symmetric(4)).unwrap();
        let bytes = encode_quantized(&qt);
        let fixed = HEADER_LEN + 4 + 8 + 16 + 8 + 16 * 3 + 8;
        assert_eq!(bytes.len(), fixed + 3 * 64 / 2);
    }

    #[test]
    fn corrupted_files() {
        let qt = quantize(&sample(), &QuantizerConfig::fp4()).unwrap();
        let bytes = encode_quantized(&qt);
        assert!(matches!(
            decode_quantized(&bytes[..bytes.len() - 1]),
            Err(Error::TruncatedPayload { .. })
        ));
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(
            decode_quantized(&extra),
            Err(Error::TrailingBytes(1))
        ));
        let mut wrong = bytes;
        wrong[8] = 0;
        assert!(matches!(
            decode_quantized(&wrong),
            Err(Error::UnsupportedDtype(0))
        ));
    }
}
