//! Diagnostics for the i.i.d. Rademacher sign model.

use rayon::prelude::*;
use serde::Serialize;

use crate::data::Matrix;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RademacherDiagnostics {
    /// Fraction of strictly positive entries in each row.
    pub sign_fractions: Vec<f64>,
    pub fraction_min: f64,
    pub fraction_max: f64,
    pub fraction_mean: f64,
    /// Root mean square of the off-diagonal entries of
    /// `G = (1/m) Σ_k S⁽ᵏ⁾ᵀ S⁽ᵏ⁾`.
    pub offdiag_std: f64,
    /// `1/√m`, the value expected under independent fair signs.
    pub baseline: f64,
    pub tokens: usize,
}

/// Sign of each entry, with zero counted as `+1`.
fn signs(set: &Matrix) -> Vec<i8> {
    set.as_slice()
        .iter()
        .map(|&x| if x < 0.0 { -1 } else { 1 })
        .collect()
}

pub fn rademacher_diagnostics(set: &Matrix) -> Result<RademacherDiagnostics> {
    let (m, d) = (set.rows(), set.cols());
    if m < 2 {
        return Err(Error::InvalidParams(format!(
            "need at least 2 tokens, got {m}"
        )));
    }
    let sign_fractions: Vec<f64> = set
        .iter_rows()
        .map(|r| r.iter().filter(|&&x| x > 0.0).count() as f64 / d as f64)
        .collect();
    let s = signs(set);
    // Column-major copy so that each coordinate's signs are contiguous.
    let mut cols = vec![0i8; m * d];
    for k in 0..m {
        for i in 0..d {
            cols[i * m + k] = s[k * d + i];
        }
    }
    let sum_sq: f64 = (0..d)
        .into_par_iter()
        .map(|i| {
            let ci = &cols[i * m..(i + 1) * m];
            (i + 1..d)
                .map(|j| {
                    let cj = &cols[j * m..(j + 1) * m];
                    let dot: i64 = ci.iter().zip(cj).map(|(&a, &b)| (a * b) as i64).sum();
                    let g = dot as f64 / m as f64;
                    g * g
                })
                .sum::<f64>()
        })
        .sum();
    let pairs = d * (d - 1) / 2;
    let offdiag_std = if pairs == 0 {
        0.0
    } else {
        (sum_sq / pairs as f64).sqrt()
    };
    Ok(RademacherDiagnostics {
        fraction_min: sign_fractions.iter().copied().fold(f64::INFINITY, f64::min),
        fraction_max: sign_fractions
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max),
        fraction_mean: sign_fractions.iter().sum::<f64>() / m as f64,
        sign_fractions,
        offdiag_std,
        baseline: 1.0 / (m as f64).sqrt(),
        tokens: m,
    })
}
