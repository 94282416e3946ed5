//! Sylvester and Paley constructions, plus the plain-text file format.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::field::{prime_power, FiniteField};
use crate::data::Matrix;
use crate::error::{Error, Result};

/// Largest order built as a dense sign matrix.
pub const MAX_DENSE_ORDER: usize = 8192;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Construction {
    Sylvester,
    Paley1,
    Paley2,
    File,
}

impl fmt::Display for Construction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Construction::Sylvester => "sylvester",
            Construction::Paley1 => "paley1",
            Construction::Paley2 => "paley2",
            Construction::File => "file",
        })
    }
}

/// A validated Hadamard matrix of order `k`, normalized so that its first
/// row and first column are all `+1`. Entries of the normalized matrix are
/// `sign / √k`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HadamardSpec {
    order: usize,
    construction: Construction,
    signs: Vec<i8>,
}

impl HadamardSpec {
    /// Validates `signs` (row-major `order × order`, entries ±1) and
    /// normalizes the sign convention.
    pub fn from_signs(order: usize, signs: Vec<i8>, construction: Construction) -> Result<Self> {
        if order == 0 || signs.len() != order * order {
            return Err(Error::NotHadamard(format!(
                "expected {} entries for order {order}, got {}",
                order * order,
                signs.len()
            )));
        }
        if signs.iter().any(|&s| s != 1 && s != -1) {
            return Err(Error::NotHadamard("entries must be +1 or -1".into()));
        }
        let mut spec = HadamardSpec {
            order,
            construction,
            signs,
        };
        spec.normalize_signs();
        spec.check_orthogonal()?;
        Ok(spec)
    }

    fn normalize_signs(&mut self) {
        let k = self.order;
        for c in 0..k {
            if self.signs[c] < 0 {
                for r in 0..k {
                    self.signs[r * k + c] = -self.signs[r * k + c];
                }
            }
        }
        for r in 0..k {
            if self.signs[r * k] < 0 {
                for c in 0..k {
                    self.signs[r * k + c] = -self.signs[r * k + c];
                }
            }
        }
    }

    fn check_orthogonal(&self) -> Result<()> {
        let k = self.order;
        for i in 0..k {
            let ri = &self.signs[i * k..(i + 1) * k];
            for j in i + 1..k {
                let rj = &self.signs[j * k..(j + 1) * k];
                let dot: i64 = ri.iter().zip(rj).map(|(&a, &b)| (a * b) as i64).sum();
                if dot != 0 {
                    return Err(Error::NotHadamard(format!(
                        "rows {i} and {j} have inner product {dot}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn construction(&self) -> Construction {
        self.construction
    }

    pub fn sign(&self, row: usize, col: usize) -> i8 {
        self.signs[row * self.order + col]
    }

    pub fn signs(&self) -> &[i8] {
        &self.signs
    }

    pub fn entry(&self, row: usize, col: usize) -> f64 {
        self.sign(row, col) as f64 / (self.order as f64).sqrt()
    }

    /// `Rᵀ`, which is again a normalized Hadamard matrix.
    pub fn transpose(&self) -> HadamardSpec {
        let k = self.order;
        let mut signs = vec![0i8; k * k];
        for r in 0..k {
            for c in 0..k {
                signs[c * k + r] = self.signs[r * k + c];
            }
        }
        HadamardSpec {
            order: k,
            construction: self.construction,
            signs,
        }
    }

    /// The normalized matrix `R` with entries ±1/√k.
    pub fn to_matrix(&self) -> Matrix {
        let scale = 1.0 / (self.order as f64).sqrt();
        Matrix::from_parts(
            self.order,
            self.order,
            self.signs.iter().map(|&s| s as f64 * scale).collect(),
        )
    }

    /// `max |R Rᵀ − I|` computed in floating point.
    pub fn orthogonality_error(&self) -> f64 {
        let r = self.to_matrix();
        let k = self.order;
        let mut worst = 0.0f64;
        for i in 0..k {
            for j in 0..k {
                let dot: f64 = r.row(i).iter().zip(r.row(j)).map(|(a, b)| a * b).sum();
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot - target).abs());
            }
        }
        worst
    }
}

fn sylvester_signs(order: usize) -> Vec<i8> {
    let mut out = Vec::with_capacity(order * order);
    for i in 0..order {
        for j in 0..order {
            out.push(if (i & j).count_ones() % 2 == 0 { 1 } else { -1 });
        }
    }
    out
}

/// Jacobsthal matrix `Q[a][b] = χ(a − b)`.
fn jacobsthal(field: &FiniteField) -> Vec<i8> {
    let q = field.order();
    let mut out = Vec::with_capacity(q * q);
    for a in 0..q {
        for b in 0..q {
            out.push(field.chi(field.sub(a, b)));
        }
    }
    out
}

fn paley1_signs(order: usize) -> Option<Vec<i8>> {
    let q = order.checked_sub(1)?;
    prime_power(q)?;
    if q % 4 != 3 {
        return None;
    }
    let field = FiniteField::new(q)?;
    let jac = jacobsthal(&field);
    let k = q + 1;
    // H = I + S with S = [[0, 1ᵀ], [-1, Q]].
    let mut h = vec![0i8; k * k];
    for r in 0..k {
        for c in 0..k {
            let s = match (r, c) {
                (0, 0) => 0,
                (0, _) => 1,
                (_, 0) => -1,
                _ => jac[(r - 1) * q + (c - 1)],
            };
            h[r * k + c] = if r == c { s + 1 } else { s };
        }
    }
    Some(h)
}

fn paley2_signs(order: usize) -> Option<Vec<i8>> {
    if !order.is_multiple_of(2) {
        return None;
    }
    let q = (order / 2).checked_sub(1)?;
    prime_power(q)?;
    if q % 4 != 1 {
        return None;
    }
    let field = FiniteField::new(q)?;
    let jac = jacobsthal(&field);
    let n = q + 1;
    let c = |r: usize, col: usize| -> i8 {
        match (r, col) {
            (0, 0) => 0,
            (0, _) | (_, 0) => 1,
            _ => jac[(r - 1) * q + (col - 1)],
        }
    };
    let k = 2 * n;
    let mut h = vec![0i8; k * k];
    for r in 0..n {
        for col in 0..n {
            let e = c(r, col);
            // 0 → [[1, -1], [-1, -1]], ±1 → ±[[1, 1], [1, -1]].
            let block: [[i8; 2]; 2] = if e == 0 {
                [[1, -1], [-1, -1]]
            } else {
                [[e, e], [e, -e]]
            };
            for (dr, row) in block.iter().enumerate() {
                for (dc, &v) in row.iter().enumerate() {
                    h[(2 * r + dr) * k + 2 * col + dc] = v;
                }
            }
        }
    }
    Some(h)
}

/// Builds a Hadamard matrix of `order` with the requested construction.
pub fn build_hadamard(order: usize, construction: Construction) -> Result<HadamardSpec> {
    if order > MAX_DENSE_ORDER {
        return Err(Error::TooLarge(format!(
            "dense Hadamard order {order} exceeds {MAX_DENSE_ORDER}"
        )));
    }
    let signs = match construction {
        Construction::Sylvester => order.is_power_of_two().then(|| sylvester_signs(order)),
        Construction::Paley1 => paley1_signs(order),
        Construction::Paley2 => paley2_signs(order),
        Construction::File => {
            return Err(Error::InvalidParams(
                "file-backed matrices are loaded with load_hadamard".into(),
            ))
        }
    };
    match signs {
        Some(s) => HadamardSpec::from_signs(order, s, construction),
        None => Err(Error::NoConstruction {
            order,
            tried: construction.to_string(),
        }),
    }
}

/// Tries Sylvester, then Paley I, then Paley II.
pub fn build_any(order: usize) -> Result<HadamardSpec> {
    let tried = [
        Construction::Sylvester,
        Construction::Paley1,
        Construction::Paley2,
    ];
    for c in tried {
        match build_hadamard(order, c) {
            Ok(h) => return Ok(h),
            Err(Error::NoConstruction { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::NoConstruction {
        order,
        tried: tried.map(|c| c.to_string()).join(", "),
    })
}

/// Parses the text format: a line `order k` followed by `k` lines of `k`
/// whitespace-separated `+1`/`-1` entries.
pub fn parse_hadamard(text: &str) -> Result<HadamardSpec> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    let (line_no, first) = lines.next().ok_or(Error::Parse {
        line: 1,
        msg: "empty file".into(),
    })?;
    let order: usize = first
        .strip_prefix("order")
        .and_then(|rest| rest.trim().parse().ok())
        .ok_or_else(|| Error::Parse {
            line: line_no,
            msg: format!("expected `order k`, got `{first}`"),
        })?;
    if order == 0 || order > MAX_DENSE_ORDER {
        return Err(Error::Parse {
            line: line_no,
            msg: format!("unsupported order {order}"),
        });
    }
    let mut signs = Vec::with_capacity(order * order);
    for r in 0..order {
        let (line_no, line) = lines.next().ok_or(Error::Parse {
            line: line_no + r + 1,
            msg: format!("expected {order} rows, found {r}"),
        })?;
        let before = signs.len();
        for tok in line.split_whitespace() {
            let v = match tok {
                "1" | "+1" => 1,
                "-1" => -1,
                other => {
                    return Err(Error::Parse {
                        line: line_no,
                        msg: format!("entry `{other}` is not +1 or -1"),
                    })
                }
            };
            signs.push(v);
        }
        if signs.len() - before != order {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("expected {order} entries, got {}", signs.len() - before),
            });
        }
    }
    if let Some((line_no, _)) = lines.next() {
        return Err(Error::Parse {
            line: line_no,
            msg: "unexpected extra row".into(),
        });
    }
    HadamardSpec::from_signs(order, signs, Construction::File)
}

pub fn load_hadamard(path: impl AsRef<Path>) -> Result<HadamardSpec> {
    parse_hadamard(&std::fs::read_to_string(path)?)
}

pub fn format_hadamard(spec: &HadamardSpec) -> String {
    let k = spec.order();
    let mut out = format!("order {k}\n");
    for r in 0..k {
        let row: Vec<&str> = (0..k)
            .map(|c| if spec.sign(r, c) > 0 { "+1" } else { "-1" })
            .collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}
