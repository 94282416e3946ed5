//! Closed-form add/subtract counts for Hadamard rotations.
//!
//! A count is the number of binary additions or subtractions. A radix-2
//! butterfly stage over `d` lanes costs `d`; a signed sum of `m` operands
//! costs `m − 1`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `d = k · t` with `k` the largest power-of-2 divisor of `d`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DimensionFactorization {
    pub d: usize,
    /// Odd part of `d` (1 when `d` is a power of 2).
    pub t: usize,
    pub k: usize,
    /// `log₂(k) − 2`: number of radix-2 stages ahead of the `4t` blocks.
    /// `None` when `t = 1` or `k < 4`.
    pub k_prime: Option<u32>,
}

impl DimensionFactorization {
    pub fn of(d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::Dimension("cannot factor d = 0".into()));
        }
        let k = 1usize << d.trailing_zeros();
        let t = d / k;
        let k_prime = (t > 1 && k >= 4).then(|| k.trailing_zeros() - 2);
        Ok(DimensionFactorization { d, t, k, k_prime })
    }

    pub fn is_power_of_two(&self) -> bool {
        self.t == 1
    }

    /// `(k′, 4t)` for the lifted non-power-of-2 structure.
    pub fn lifted(&self) -> Result<(u32, usize)> {
        match self.k_prime {
            Some(kp) => Ok((kp, 4 * self.t)),
            None if self.t == 1 => Err(Error::InvalidParams(format!(
                "d = {} is a power of 2; no non-power-of-2 factor",
                self.d
            ))),
            None => Err(Error::InvalidParams(format!(
                "d = {} = {}·{} has no 4t-dimensional base block (needs k >= 4)",
                self.d, self.k, self.t
            ))),
        }
    }

    pub fn log2_k(&self) -> u32 {
        self.k.trailing_zeros()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "method", content = "block")]
pub enum OpMethod {
    DenseMatmul,
    ButterflyPlusMatmul,
    Optimized,
    Block(usize),
    FullPowerOf2,
    /// Power-of-2 butterflies when `d` is a power of 2, otherwise
    /// [`OpMethod::Optimized`].
    Full,
}

impl fmt::Display for OpMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OpMethod::DenseMatmul => f.write_str("dense_matmul"),
            OpMethod::ButterflyPlusMatmul => f.write_str("butterfly_plus_matmul"),
            OpMethod::Optimized => f.write_str("optimized"),
            OpMethod::Block(b) => write!(f, "block({b})"),
            OpMethod::FullPowerOf2 => f.write_str("full_power_of_2"),
            OpMethod::Full => f.write_str("full"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCount {
    pub additions_subtractions: u64,
    pub method: OpMethod,
}

pub fn count_ops(d: usize, method: OpMethod) -> Result<OpCount> {
    let fact = DimensionFactorization::of(d)?;
    let d64 = d as u64;
    let ops = match method {
        OpMethod::DenseMatmul => d64 * (d64 - 1),
        OpMethod::FullPowerOf2 => {
            if !fact.is_power_of_two() {
                return Err(Error::InvalidParams(format!("d = {d} is not a power of 2")));
            }
            d64 * fact.log2_k() as u64
        }
        OpMethod::Block(b) => {
            if b == 0 || !b.is_power_of_two() || !d.is_multiple_of(b) {
                return Err(Error::InvalidParams(format!(
                    "block size {b} must be a power of 2 dividing d = {d}"
                )));
            }
            d64 * b.trailing_zeros() as u64
        }
        OpMethod::ButterflyPlusMatmul => {
            let (kp, four_t) = fact.lifted()?;
            d64 * (kp as u64 + four_t as u64 - 1)
        }
        OpMethod::Optimized => {
            let (kp, _) = fact.lifted()?;
            d64 * (kp as u64 + fact.t as u64 + 2)
        }
        OpMethod::Full => {
            let inner = if fact.is_power_of_two() {
                OpMethod::FullPowerOf2
            } else {
                OpMethod::Optimized
            };
            return Ok(OpCount {
                method,
                ..count_ops(d, inner)?
            });
        }
    };
    Ok(OpCount {
        additions_subtractions: ops,
        method,
    })
}

/// Model dimensions whose down-projection inputs are tabulated.
#[derive(Clone, Copy, Debug)]
pub struct ModelDim {
    pub family: &'static str,
    pub size: &'static str,
    pub d: usize,
}

pub const BLOCK_TABLE_MODELS: [ModelDim; 5] = [
    ModelDim {
        family: "Llama3",
        size: "1B/3B",
        d: 8192,
    },
    ModelDim {
        family: "Llama3",
        size: "8B",
        d: 14336,
    },
    ModelDim {
        family: "Qwen3",
        size: "1.7B",
        d: 6144,
    },
    ModelDim {
        family: "Qwen3",
        size: "4B",
        d: 9728,
    },
    ModelDim {
        family: "Qwen3",
        size: "8B",
        d: 12288,
    },
];

pub const NONPO2_TABLE_MODELS: [ModelDim; 5] = [
    ModelDim {
        family: "Llama3",
        size: "8B",
        d: 14336,
    },
    ModelDim {
        family: "Qwen3",
        size: "0.6B",
        d: 3072,
    },
    ModelDim {
        family: "Qwen3",
        size: "1.7B",
        d: 6144,
    },
    ModelDim {
        family: "Qwen3",
        size: "4B",
        d: 9728,
    },
    ModelDim {
        family: "Qwen3",
        size: "8B",
        d: 12288,
    },
];

pub const TABLE_BLOCK_SIZES: [usize; 3] = [32, 128, 512];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BlockCell {
    pub block: usize,
    pub ops: u64,
    /// Percentage of the full-vector count, rounded to the nearest integer.
    pub percent_of_full: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BlockRow {
    pub model: String,
    pub d: usize,
    pub k_log2: u32,
    pub t: usize,
    pub blocks: Vec<BlockCell>,
    pub full: u64,
}

pub fn block_row(model: &str, d: usize, block_sizes: &[usize]) -> Result<BlockRow> {
    let fact = DimensionFactorization::of(d)?;
    let full = count_ops(d, OpMethod::Full)?.additions_subtractions;
    let blocks = block_sizes
        .iter()
        .map(|&b| {
            let ops = count_ops(d, OpMethod::Block(b))?.additions_subtractions;
            Ok(BlockCell {
                block: b,
                ops,
                percent_of_full: (100.0 * ops as f64 / full as f64).round() as u64,
            })
        })
        .collect::<Result<_>>()?;
    Ok(BlockRow {
        model: model.to_string(),
        d,
        k_log2: fact.log2_k(),
        t: fact.t,
        blocks,
        full,
    })
}

pub fn block_table() -> Vec<BlockRow> {
    BLOCK_TABLE_MODELS
        .iter()
        .map(|m| {
            block_row(&format!("{} {}", m.family, m.size), m.d, &TABLE_BLOCK_SIZES)
                .expect("tabulated dimensions are valid")
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NonPo2Row {
    pub model: String,
    pub d: usize,
    pub k_prime: u32,
    pub four_t: usize,
    pub matmul: u64,
    pub butterfly_matmul: u64,
    pub optimized: u64,
}

impl NonPo2Row {
    pub fn matmul_ratio(&self) -> f64 {
        self.matmul as f64 / self.optimized as f64
    }

    pub fn butterfly_ratio(&self) -> f64 {
        self.butterfly_matmul as f64 / self.optimized as f64
    }
}

pub fn nonpo2_row(model: &str, d: usize) -> Result<NonPo2Row> {
    let fact = DimensionFactorization::of(d)?;
    let (k_prime, four_t) = fact.lifted()?;
    Ok(NonPo2Row {
        model: model.to_string(),
        d,
        k_prime,
        four_t,
        matmul: count_ops(d, OpMethod::DenseMatmul)?.additions_subtractions,
        butterfly_matmul: count_ops(d, OpMethod::ButterflyPlusMatmul)?.additions_subtractions,
        optimized: count_ops(d, OpMethod::Optimized)?.additions_subtractions,
    })
}

pub fn nonpo2_table() -> Vec<NonPo2Row> {
    NONPO2_TABLE_MODELS
        .iter()
        .map(|m| {
            nonpo2_row(&format!("{}-{}", m.family, m.size), m.d)
                .expect("tabulated dimensions are valid")
        })
        .collect()
}

/// `205.51M`, `258.05K`, or the plain integer below one thousand.
pub fn abbreviate(ops: u64) -> String {
    let v = ops as f64;
    if v >= 1e6 {
        format!("{:.2}M", v / 1e6)
    } else if v >= 1e3 {
        format!("{:.2}K", v / 1e3)
    } else {
        ops.to_string()
    }
}

pub fn format_block_table(rows: &[BlockRow]) -> String {
    let mut out = String::new();
    let sizes: Vec<String> = rows
        .first()
        .map(|r| r.blocks.iter().map(|c| c.block.to_string()).collect())
        .unwrap_or_default();
    out.push_str(&format!(
        "{:<14} {:>6} {:>6} {:>4} | {} | {:>8}\n",
        "model",
        "d",
        "k",
        "t",
        sizes
            .iter()
            .map(|s| format!("{s:>14}"))
            .collect::<Vec<_>>()
            .join(" "),
        "full"
    ));
    for r in rows {
        let cells: Vec<String> = r
            .blocks
            .iter()
            .map(|c| format!("{:>14}", format!("{} ({}%)", c.ops, c.percent_of_full)))
            .collect();
        out.push_str(&format!(
            "{:<14} {:>6} {:>6} {:>4} | {} | {:>8}\n",
            r.model,
            r.d,
            format!("2^{}", r.k_log2),
            r.t,
            cells.join(" "),
            r.full
        ));
    }
    out
}

pub fn format_nonpo2_table(rows: &[NonPo2Row]) -> String {
    let mut out = format!(
        "{:<12} {:>6} {:>10} | {:>18} {:>18} {:>10}\n",
        "model", "d", "2^k'x4t", "matmul", "butterfly+matmul", "ours"
    );
    for r in rows {
        out.push_str(&format!(
            "{:<12} {:>6} {:>10} | {:>18} {:>18} {:>10}\n",
            r.model,
            r.d,
            format!("2^{}x{}", r.k_prime, r.four_t),
            format!("{} ({:.1}x)", abbreviate(r.matmul), r.matmul_ratio()),
            format!(
                "{} ({:.1}x)",
                abbreviate(r.butterfly_matmul),
                r.butterfly_ratio()
            ),
            abbreviate(r.optimized),
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factorization() {
        let f = DimensionFactorization::of(14336).unwrap();
        assert_eq!((f.k, f.t, f.k_prime), (2048, 7, Some(9)));
        let f = DimensionFactorization::of(8192).unwrap();
        assert_eq!((f.k, f.t, f.k_prime), (8192, 1, None));
        let f = DimensionFactorization::of(6).unwrap();
        assert_eq!((f.k, f.t, f.k_prime), (2, 3, None));
        assert!(f.lifted().is_err());
        assert_eq!(DimensionFactorization::of(28).unwrap().k_prime, Some(0));
    }

    #[test]
    fn closed_forms() {
        let ops = |d, m| count_ops(d, m).unwrap().additions_subtractions;
        assert_eq!(ops(8192, OpMethod::Full), 106_496);
        assert_eq!(ops(8192, OpMethod::Block(32)), 40_960);
        assert_eq!(ops(8192, OpMethod::Block(512)), 73_728);
        assert_eq!(ops(14336, OpMethod::Optimized), 258_048);
        assert_eq!(ops(14336, OpMethod::ButterflyPlusMatmul), 516_096);
        assert_eq!(ops(14336, OpMethod::DenseMatmul), 205_506_560);
        assert_eq!(ops(9728, OpMethod::Full), 272_384);
        assert_eq!(ops(12288, OpMethod::Full), 184_320);
    }

    #[test]
    fn invalid_methods() {
        assert!(count_ops(14336, OpMethod::FullPowerOf2).is_err());
        assert!(count_ops(8192, OpMethod::Optimized).is_err());
        assert!(count_ops(96, OpMethod::Block(3)).is_err());
        assert!(count_ops(64, OpMethod::Block(128)).is_err());
    }

    #[test]
    fn abbreviations() {
        assert_eq!(abbreviate(205_506_560), "205.51M");
        assert_eq!(abbreviate(516_096), "516.10K");
        assert_eq!(abbreviate(39_936), "39.94K");
        assert_eq!(abbreviate(252), "252");
    }
}
