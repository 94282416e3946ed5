//! Round-to-nearest INT, FP4 (e2m1) and MXFP4 quantizers.
//!
//! Matrices are `rows × cols` with tokens as rows. A quantization *unit*
//! is the set of entries sharing one scale: a column (per channel), a row
//! (per token) or a contiguous run of `size` entries within a row
//! (per group).

pub mod io;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Matrix;
use crate::error::{Error, Result};

pub use io::{decode_quantized, encode_quantized, load_quantized, save_quantized};

/// Magnitudes of the e2m1 alphabet, indexed by the absolute code.
pub const FP4_MAGNITUDES: [f64; 8] = [0.0, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0];

/// MXFP4 group size.
pub const MX_GROUP: usize = 32;

/// Scale substituted for all-zero units so that decoding stays total.
pub const MIN_SCALE: f64 = 1.0 / (1u128 << 126) as f64;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Format {
    IntSymmetric {
        bits: u8,
    },
    IntAsymmetric {
        bits: u8,
    },
    /// Scale is `amax / divisor` under absmax.
    Fp4 {
        divisor: f64,
    },
    Mxfp4,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Granularity {
    PerChannel,
    PerToken,
    PerGroup { size: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScaleSearch {
    Absmax,
    /// Candidates `α · s_absmax` on a uniform grid over `[alpha_min, 1]`.
    MseLinear {
        grid_size: usize,
        alpha_min: f64,
    },
}

impl ScaleSearch {
    pub const DEFAULT_GRID: usize = 64;
    pub const DEFAULT_ALPHA_MIN: f64 = 0.3;

    pub fn mse() -> Self {
        ScaleSearch::MseLinear {
            grid_size: Self::DEFAULT_GRID,
            alpha_min: Self::DEFAULT_ALPHA_MIN,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantizerConfig {
    pub format: Format,
    pub granularity: Granularity,
    pub scale_search: ScaleSearch,
}

impl QuantizerConfig {
    pub fn int_symmetric(bits: u8) -> Self {
        QuantizerConfig {
            format: Format::IntSymmetric { bits },
            granularity: Granularity::PerToken,
            scale_search: ScaleSearch::Absmax,
        }
    }

    pub fn int_asymmetric(bits: u8) -> Self {
        QuantizerConfig {
            format: Format::IntAsymmetric { bits },
            ..Self::int_symmetric(bits)
        }
    }

    pub fn fp4() -> Self {
        QuantizerConfig {
            format: Format::Fp4 { divisor: 6.0 },
            ..Self::int_symmetric(4)
        }
    }

    pub fn mxfp4() -> Self {
        QuantizerConfig {
            format: Format::Mxfp4,
            granularity: Granularity::PerGroup { size: MX_GROUP },
            scale_search: ScaleSearch::Absmax,
        }
    }

    pub fn per_channel(self) -> Self {
        self.with_granularity(Granularity::PerChannel)
    }

    pub fn with_granularity(mut self, granularity: Granularity) -> Self {
        self.granularity = granularity;
        self
    }

    pub fn with_scale_search(mut self, scale_search: ScaleSearch) -> Self {
        self.scale_search = scale_search;
        self
    }

    pub fn bits(&self) -> u8 {
        match self.format {
            Format::IntSymmetric { bits } | Format::IntAsymmetric { bits } => bits,
            Format::Fp4 { .. } | Format::Mxfp4 => 4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParams(m));
        match self.format {
            Format::IntSymmetric { bits } | Format::IntAsymmetric { bits }
                if !(2..=8).contains(&bits) =>
            {
                return bad(format!("bit width {bits} outside 2..=8"));
            }
            Format::Fp4 { divisor } if !(divisor.is_finite() && divisor > 0.0) => {
                return bad(format!("fp4 divisor must be positive, got {divisor}"));
            }
            Format::Mxfp4 => {
                if self.granularity != (Granularity::PerGroup { size: MX_GROUP }) {
                    return bad("mxfp4 requires per-group granularity with 32 elements".into());
                }
                if self.scale_search != ScaleSearch::Absmax {
                    return bad("mxfp4 scales are fixed powers of 2; no scale search".into());
                }
            }
            _ => {}
        }
        if let Granularity::PerGroup { size: 0 } = self.granularity {
            return bad("group size must be positive".into());
        }
        if let ScaleSearch::MseLinear {
            grid_size,
            alpha_min,
        } = self.scale_search
        {
            if grid_size < 2 || !(alpha_min > 0.0 && alpha_min <= 1.0) {
                return bad(format!(
                    "scale grid needs >= 2 points and alpha_min in (0, 1], got {grid_size}, {alpha_min}"
                ));
            }
        }
        Ok(())
    }

    /// Inclusive code range.
    pub fn code_range(&self) -> (i16, i16) {
        match self.format {
            Format::IntSymmetric { bits } => {
                let q = (1i16 << (bits - 1)) - 1;
                (-q, q)
            }
            Format::IntAsymmetric { bits } => (0, ((1u16 << bits) - 1) as i16),
            Format::Fp4 { .. } | Format::Mxfp4 => (-7, 7),
        }
    }

    fn is_fp4(&self) -> bool {
        matches!(self.format, Format::Fp4 { .. } | Format::Mxfp4)
    }
}

/// Codes with one scale and zero point per unit.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantizedTensor {
    rows: usize,
    cols: usize,
    codes: Vec<i16>,
    scales: Vec<f64>,
    zero_points: Vec<f64>,
    /// Units whose scale was clamped because every entry was zero.
    clamped: Vec<usize>,
    config: QuantizerConfig,
}

fn unit_count(rows: usize, cols: usize, g: Granularity) -> Result<usize> {
    match g {
        Granularity::PerChannel => Ok(cols),
        Granularity::PerToken => Ok(rows),
        Granularity::PerGroup { size } => {
            if size == 0 || !cols.is_multiple_of(size) {
                return Err(Error::Dimension(format!(
                    "group size {size} does not divide {cols} columns"
                )));
            }
            Ok(rows * (cols / size))
        }
    }
}

#[inline]
fn unit_of(r: usize, c: usize, cols: usize, g: Granularity) -> usize {
    match g {
        Granularity::PerChannel => c,
        Granularity::PerToken => r,
        Granularity::PerGroup { size } => r * (cols / size) + c / size,
    }
}

impl QuantizedTensor {
    /// Validates codes and per-unit parameters against `config`.
    pub fn from_parts(
        rows: usize,
        cols: usize,
        codes: Vec<i16>,
        scales: Vec<f64>,
        zero_points: Vec<f64>,
        clamped: Vec<usize>,
        config: QuantizerConfig,
    ) -> Result<Self> {
        config.validate()?;
        let units = unit_count(rows, cols, config.granularity)?;
        if codes.len() != rows * cols || scales.len() != units || zero_points.len() != units {
            return Err(Error::Dimension(format!(
                "expected {} codes and {units} scales/zero points",
                rows * cols
            )));
        }
        let (lo, hi) = config.code_range();
        if let Some(c) = codes.iter().find(|&&c| c < lo || c > hi) {
            return Err(Error::InvalidParams(format!(
                "code {c} outside [{lo}, {hi}]"
            )));
        }
        if let Some(s) = scales.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(Error::InvalidParams(format!("non-positive scale {s}")));
        }
        if zero_points
            .iter()
            .any(|z| !z.is_finite() || z.fract() != 0.0)
        {
            return Err(Error::InvalidParams("zero points must be integers".into()));
        }
        if clamped.iter().any(|&u| u >= units) {
            return Err(Error::InvalidParams(
                "clamped unit index out of range".into(),
            ));
        }
        Ok(QuantizedTensor {
            rows,
            cols,
            codes,
            scales,
            zero_points,
            clamped,
            config,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn codes(&self) -> &[i16] {
        &self.codes
    }

    pub fn code(&self, r: usize, c: usize) -> i16 {
        self.codes[r * self.cols + c]
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    pub fn zero_points(&self) -> &[f64] {
        &self.zero_points
    }

    pub fn clamped(&self) -> &[usize] {
        &self.clamped
    }

    pub fn config(&self) -> &QuantizerConfig {
        &self.config
    }

    pub fn unit_of(&self, r: usize, c: usize) -> usize {
        unit_of(r, c, self.cols, self.config.granularity)
    }

    /// The alphabet value `a` (before scaling) that a code denotes.
    pub fn level(&self, code: i16) -> f64 {
        decode_level(&self.config, code)
    }
}

fn decode_level(config: &QuantizerConfig, code: i16) -> f64 {
    if config.is_fp4() {
        let m = FP4_MAGNITUDES[code.unsigned_abs() as usize];
        if code < 0 {
            -m
        } else {
            m
        }
    } else {
        code as f64
    }
}

/// Nearest e2m1 magnitude index, ties to the even index; saturates at 6.
fn fp4_index(mag: f64) -> i16 {
    if mag >= 6.0 {
        return 7;
    }
    let mut best = 0usize;
    for i in 1..FP4_MAGNITUDES.len() {
        let lo = FP4_MAGNITUDES[i - 1];
        let hi = FP4_MAGNITUDES[i];
        if mag < lo || mag > hi {
            continue;
        }
        let mid = 0.5 * (lo + hi);
        best = if mag < mid {
            i - 1
        } else if mag > mid {
            i
        } else if (i - 1) % 2 == 0 {
            i - 1
        } else {
            i
        };
        break;
    }
    best as i16
}

#[inline]
fn encode(x: f64, scale: f64, zero: f64, config: &QuantizerConfig) -> i16 {
    let v = x / scale;
    match config.format {
        Format::IntSymmetric { .. } | Format::IntAsymmetric { .. } => {
            let (lo, hi) = config.code_range();
            (v.round_ties_even() + zero).clamp(lo as f64, hi as f64) as i16
        }
        Format::Fp4 { .. } | Format::Mxfp4 => {
            let i = fp4_index(v.abs());
            if v < 0.0 {
                -i
            } else {
                i
            }
        }
    }
}

#[inline]
fn roundtrip(x: f64, scale: f64, zero: f64, config: &QuantizerConfig) -> f64 {
    scale * (decode_level(config, encode(x, scale, zero, config)) - zero)
}

/// `2^⌊log₂(amax / 6)⌋`, computed without rounding error.
pub fn mx_scale(amax: f64) -> f64 {
    let pow2 = |e: i32| f64::from_bits(((e + 1023) as u64) << 52);
    let mut e = (amax / 6.0).log2().floor() as i32;
    while e > -1022 && 6.0 * pow2(e) > amax {
        e -= 1;
    }
    while e < 1023 && 6.0 * pow2(e + 1) <= amax {
        e += 1;
    }
    pow2(e)
}

struct UnitFit {
    scale: f64,
    zero: f64,
    clamped: bool,
}

fn sq_error(values: &[f64], scale: f64, zero: f64, config: &QuantizerConfig) -> f64 {
    values
        .iter()
        .map(|&x| {
            let e = x - roundtrip(x, scale, zero, config);
            e * e
        })
        .sum()
}

fn grid_alpha(i: usize, grid_size: usize, alpha_min: f64) -> f64 {
    alpha_min + (1.0 - alpha_min) * (i as f64 / (grid_size - 1) as f64)
}

fn absmax_params(values: &[f64], config: &QuantizerConfig) -> Option<(f64, f64)> {
    let amax = values.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if amax == 0.0 {
        return None;
    }
    Some(match config.format {
        Format::IntSymmetric { bits } => (amax / ((1u32 << (bits - 1)) - 1) as f64, 0.0),
        Format::IntAsymmetric { bits } => {
            let levels = ((1u32 << bits) - 1) as f64;
            let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let s = if hi > lo {
                (hi - lo) / levels
            } else {
                lo.abs() / levels
            };
            (s, asym_zero(lo, s))
        }
        Format::Fp4 { divisor } => (amax / divisor, 0.0),
        Format::Mxfp4 => (mx_scale(amax), 0.0),
    })
}

fn asym_zero(min: f64, s: f64) -> f64 {
    // `+ 0.0` normalizes a negative zero.
    -(min / s).round_ties_even() + 0.0
}

fn fit_unit(values: &[f64], config: &QuantizerConfig) -> UnitFit {
    let Some((s_abs, z_abs)) = absmax_params(values, config) else {
        return UnitFit {
            scale: MIN_SCALE,
            zero: 0.0,
            clamped: true,
        };
    };
    let ScaleSearch::MseLinear {
        grid_size,
        alpha_min,
    } = config.scale_search
    else {
        return UnitFit {
            scale: s_abs,
            zero: z_abs,
            clamped: false,
        };
    };
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let mut best = (sq_error(values, s_abs, z_abs, config), s_abs, z_abs);
    for i in (0..grid_size - 1).rev() {
        let s = grid_alpha(i, grid_size, alpha_min) * s_abs;
        let z = match config.format {
            Format::IntAsymmetric { .. } => asym_zero(min, s),
            _ => 0.0,
        };
        let err = sq_error(values, s, z, config);
        if err < best.0 {
            best = (err, s, z);
        }
    }
    UnitFit {
        scale: best.1,
        zero: best.2,
        clamped: false,
    }
}

fn gather_units(set: &Matrix, g: Granularity) -> Result<Vec<Vec<f64>>> {
    let (rows, cols) = (set.rows(), set.cols());
    let n = unit_count(rows, cols, g)?;
    Ok(match g {
        Granularity::PerToken => set.iter_rows().map(<[f64]>::to_vec).collect(),
        Granularity::PerGroup { size } => {
            set.as_slice().chunks(size).map(<[f64]>::to_vec).collect()
        }
        Granularity::PerChannel => {
            let mut units = vec![Vec::with_capacity(rows); n];
            for row in set.iter_rows() {
                for (c, &x) in row.iter().enumerate() {
                    units[c].push(x);
                }
            }
            units
        }
    })
}

pub fn quantize(set: &Matrix, config: &QuantizerConfig) -> Result<QuantizedTensor> {
    config.validate()?;
    let units = gather_units(set, config.granularity)?;
    let fits: Vec<UnitFit> = units.par_iter().map(|u| fit_unit(u, config)).collect();
    let cols = set.cols();
    let codes: Vec<i16> = set
        .as_slice()
        .par_iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = &fits[unit_of(i / cols, i % cols, cols, config.granularity)];
            encode(x, f.scale, f.zero, config)
        })
        .collect();
    Ok(QuantizedTensor {
        rows: set.rows(),
        cols,
        codes,
        clamped: (0..fits.len()).filter(|&u| fits[u].clamped).collect(),
        scales: fits.iter().map(|f| f.scale).collect(),
        zero_points: fits.iter().map(|f| f.zero).collect(),
        config: *config,
    })
}

/// `s · (level(code) − z)` elementwise.
pub fn dequantize(qt: &QuantizedTensor) -> Matrix {
    let cols = qt.cols;
    let data = qt
        .codes
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let u = qt.unit_of(i / cols, i % cols);
            qt.scales[u] * (qt.level(c) - qt.zero_points[u])
        })
        .collect();
    Matrix::from_parts(qt.rows, cols, data)
}

/// `dequantize(quantize(set))`.
pub fn fake_quantize(set: &Matrix, config: &QuantizerConfig) -> Result<Matrix> {
    Ok(dequantize(&quantize(set, config)?))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ScaleChoice {
    /// Zero for an all-zero channel.
    pub scale: f64,
    pub alpha: f64,
    pub mse: f64,
    pub absmax_mse: f64,
    pub zero_channel: bool,
}

/// Per-column symmetric INT-`bits` scale minimizing the squared error over
/// `grid_size` candidates `α · s_absmax`, `α ∈ [alpha_min, 1]`.
pub fn mse_scale_search(
    weights: &Matrix,
    bits: u8,
    grid_size: usize,
    alpha_min: f64,
) -> Result<Vec<ScaleChoice>> {
    let config = QuantizerConfig::int_symmetric(bits)
        .per_channel()
        .with_scale_search(ScaleSearch::MseLinear {
            grid_size,
            alpha_min,
        });
    config.validate()?;
    let units = gather_units(weights, Granularity::PerChannel)?;
    Ok(units
        .par_iter()
        .map(|col| {
            let Some((s_abs, _)) = absmax_params(col, &config) else {
                return ScaleChoice {
                    scale: 0.0,
                    alpha: 1.0,
                    mse: 0.0,
                    absmax_mse: 0.0,
                    zero_channel: true,
                };
            };
            let n = col.len() as f64;
            let absmax_mse = sq_error(col, s_abs, 0.0, &config) / n;
            let mut best = ScaleChoice {
                scale: s_abs,
                alpha: 1.0,
                mse: absmax_mse,
                absmax_mse,
                zero_channel: false,
            };
            for i in (0..grid_size - 1).rev() {
                let alpha = grid_alpha(i, grid_size, alpha_min);
                let mse = sq_error(col, alpha * s_abs, 0.0, &config) / n;
                if mse < best.mse {
                    best = ScaleChoice {
                        scale: alpha * s_abs,
                        alpha,
                        mse,
                        ..best
                    };
                }
            }
            best
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ErrorBoundRow {
    pub linf: f64,
    pub linf_error: f64,
    pub l2_error: f64,
    pub linf_bound: f64,
    pub l2_bound: f64,
    pub satisfied: bool,
}

impl ErrorBoundRow {
    pub fn linf_slack(&self) -> f64 {
        self.linf_bound - self.linf_error
    }

    pub fn l2_slack(&self) -> f64 {
        self.l2_bound - self.l2_error
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ErrorBoundReport {
    pub bits: u8,
    pub rows: Vec<ErrorBoundRow>,
    pub violations: usize,
    /// Largest `‖X − Q(X)‖∞ / ‖X‖∞` over nonzero rows.
    pub max_error_ratio: f64,
    /// Smallest `∞`-norm slack relative to `‖X‖∞`.
    pub min_relative_slack: f64,
}

/// Relative tolerance applied to bound slacks.
pub const BOUND_TOLERANCE: f64 = 1e-9;

/// Checks `‖X − Q(X)‖∞ ≤ ‖X‖∞ / (2^q − 2)` and
/// `‖X − Q(X)‖₂ ≤ √d ‖X‖∞ / (2^q − 2)` per row.
pub fn verify_error_bound(set: &Matrix, config: &QuantizerConfig) -> Result<ErrorBoundReport> {
    let Format::IntSymmetric { bits } = config.format else {
        return Err(Error::InvalidParams(
            "error bound applies to symmetric INT quantizers".into(),
        ));
    };
    if config.scale_search != ScaleSearch::Absmax || config.granularity == Granularity::PerChannel {
        return Err(Error::InvalidParams(
            "error bound needs absmax scales within each row".into(),
        ));
    }
    let deq = fake_quantize(set, config)?;
    let denom = ((1u32 << bits) - 2) as f64;
    let sqrt_d = (set.cols() as f64).sqrt();
    let rows: Vec<ErrorBoundRow> = set
        .iter_rows()
        .zip(deq.iter_rows())
        .map(|(x, q)| {
            let linf = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let (mut linf_error, mut sq) = (0.0f64, 0.0f64);
            for (a, b) in x.iter().zip(q) {
                let e = (a - b).abs();
                linf_error = linf_error.max(e);
                sq += e * e;
            }
            let linf_bound = linf / denom;
            let l2_bound = sqrt_d * linf / denom;
            let l2_error = sq.sqrt();
            let tol = -BOUND_TOLERANCE * linf;
            ErrorBoundRow {
                linf,
                linf_error,
                l2_error,
                linf_bound,
                l2_bound,
                satisfied: linf_bound - linf_error >= tol && l2_bound - l2_error >= tol,
            }
        })
        .collect();
    let nonzero = || rows.iter().filter(|r| r.linf > 0.0);
    Ok(ErrorBoundReport {
        bits,
        violations: rows.iter().filter(|r| !r.satisfied).count(),
        max_error_ratio: nonzero().map(|r| r.linf_error / r.linf).fold(0.0, f64::max),
        min_relative_slack: nonzero()
            .map(|r| r.linf_slack() / r.linf)
            .fold(f64::INFINITY, f64::min),
        rows,
    })
}
