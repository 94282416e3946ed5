//! Coordinate permutations that balance per-block `ℓ₁` mass ahead of a
//! block rotation.
//!
//! A permutation acts on row vectors by gathering: `(XP)_j = X_{π(j)}`,
//! so block `j` of `XP` holds the coordinates in `B_j`.

pub mod io;
mod oracle;

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{block_count, l1, Matrix};
use crate::error::{dim_err, Error, Result};

pub use oracle::{optimal_oracle, ORACLE_MAX_DIM};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZigzagKey {
    AverageMagnitude,
    Absmax,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Strategy {
    Identity,
    Random {
        seed: u64,
    },
    Absmax,
    Zigzag {
        key: ZigzagKey,
    },
    Massdiff,
    Optimal,
    /// Loaded from a file or derived (for example an inverse).
    Explicit,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::Identity => f.write_str("identity"),
            Strategy::Random { seed } => write!(f, "random({seed})"),
            Strategy::Absmax => f.write_str("absmax"),
            Strategy::Zigzag {
                key: ZigzagKey::AverageMagnitude,
            } => f.write_str("zigzag"),
            Strategy::Zigzag {
                key: ZigzagKey::Absmax,
            } => f.write_str("zigzag(absmax)"),
            Strategy::Massdiff => f.write_str("massdiff"),
            Strategy::Optimal => f.write_str("optimal"),
            Strategy::Explicit => f.write_str("explicit"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Permutation {
    pi: Vec<usize>,
    block_size: usize,
    strategy: Strategy,
}

impl Permutation {
    /// Validates that `pi` is a bijection on `0..d` and `block_size`
    /// divides `d`.
    pub fn from_pi(pi: Vec<usize>, block_size: usize, strategy: Strategy) -> Result<Self> {
        block_count(pi.len(), block_size)?;
        let mut seen = vec![false; pi.len()];
        for &p in &pi {
            if p >= pi.len() || std::mem::replace(&mut seen[p], true) {
                return Err(Error::InvalidParams(format!(
                    "not a permutation of 0..{}: bad entry {p}",
                    pi.len()
                )));
            }
        }
        Ok(Permutation {
            pi,
            block_size,
            strategy,
        })
    }

    fn from_blocks(blocks: Vec<Vec<usize>>, block_size: usize, strategy: Strategy) -> Self {
        debug_assert!(blocks.iter().all(|b| b.len() == block_size));
        Permutation {
            pi: blocks.concat(),
            block_size,
            strategy,
        }
    }

    pub fn identity(d: usize, block_size: usize) -> Result<Self> {
        Self::from_pi((0..d).collect(), block_size, Strategy::Identity)
    }

    pub fn pi(&self) -> &[usize] {
        &self.pi
    }

    pub fn dim(&self) -> usize {
        self.pi.len()
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    /// `B_1, …, B_n`.
    pub fn blocks(&self) -> impl Iterator<Item = &[usize]> {
        self.pi.chunks_exact(self.block_size)
    }

    pub fn is_identity(&self) -> bool {
        self.pi.iter().enumerate().all(|(i, &p)| i == p)
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.pi.len()];
        for (i, &p) in self.pi.iter().enumerate() {
            inv[p] = i;
        }
        Permutation {
            pi: inv,
            block_size: self.block_size,
            strategy: Strategy::Explicit,
        }
    }

    /// `out_j = row_{π(j)}`.
    pub fn apply_row(&self, row: &[f64], out: &mut [f64]) {
        for (o, &p) in out.iter_mut().zip(&self.pi) {
            *o = row[p];
        }
    }
}

/// `(1/m) Σ_k |X_i⁽ᵏ⁾|` per coordinate.
pub fn average_magnitudes(cal: &Matrix) -> Vec<f64> {
    let mut acc = vec![0.0; cal.cols()];
    for row in cal.iter_rows() {
        for (a, x) in acc.iter_mut().zip(row) {
            *a += x.abs();
        }
    }
    let m = cal.rows() as f64;
    acc.iter_mut().for_each(|a| *a /= m);
    acc
}

/// `max_k |X_i⁽ᵏ⁾|` per coordinate.
pub fn max_magnitudes(cal: &Matrix) -> Vec<f64> {
    let mut acc = vec![0.0f64; cal.cols()];
    for row in cal.iter_rows() {
        for (a, x) in acc.iter_mut().zip(row) {
            *a = a.max(x.abs());
        }
    }
    acc
}

/// Indices by descending key, ties by ascending index.
fn sort_desc(keys: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..keys.len()).collect();
    idx.sort_by(|&a, &b| keys[b].total_cmp(&keys[a]).then(a.cmp(&b)));
    idx
}

#[derive(PartialEq)]
struct Load(f64);

impl Eq for Load {}

impl PartialOrd for Load {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Load {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Greedy mass diffusion.
///
/// Coordinates are visited by descending average magnitude and each joins
/// the open block whose average `ℓ₁` mass after insertion is smallest.
/// The candidate's own mass is the same for every block, so this is the
/// currently lightest open block; a min-heap keyed by `(mass, index)`
/// finds it with the lowest index winning ties.
pub fn massdiff(cal: &Matrix, b: usize) -> Result<Permutation> {
    let n = block_count(cal.cols(), b)?;
    let avg = average_magnitudes(cal);
    let mut blocks: Vec<Vec<usize>> = vec![Vec::with_capacity(b); n];
    let mut heap: BinaryHeap<Reverse<(Load, usize)>> =
        (0..n).map(|j| Reverse((Load(0.0), j))).collect();
    for i in sort_desc(&avg) {
        let Reverse((Load(mass), j)) = heap.pop().expect("an open block remains");
        blocks[j].push(i);
        if blocks[j].len() < b {
            heap.push(Reverse((Load(mass + avg[i]), j)));
        }
    }
    Ok(Permutation::from_blocks(blocks, b, Strategy::Massdiff))
}

/// Top `b` coordinates by calibration absmax form block 1, and so on.
pub fn absmax_permutation(cal: &Matrix, b: usize) -> Result<Permutation> {
    block_count(cal.cols(), b)?;
    Permutation::from_pi(sort_desc(&max_magnitudes(cal)), b, Strategy::Absmax)
}

/// Sorted coordinates dealt to blocks in snake order `1…n, n…1, …`.
pub fn zigzag_permutation(cal: &Matrix, b: usize, key: ZigzagKey) -> Result<Permutation> {
    let n = block_count(cal.cols(), b)?;
    let keys = match key {
        ZigzagKey::AverageMagnitude => average_magnitudes(cal),
        ZigzagKey::Absmax => max_magnitudes(cal),
    };
    let mut blocks: Vec<Vec<usize>> = vec![Vec::with_capacity(b); n];
    for (p, i) in sort_desc(&keys).into_iter().enumerate() {
        let (round, pos) = (p / n, p % n);
        let j = if round % 2 == 0 { pos } else { n - 1 - pos };
        blocks[j].push(i);
    }
    Ok(Permutation::from_blocks(
        blocks,
        b,
        Strategy::Zigzag { key },
    ))
}

/// Uniform Fisher–Yates shuffle.
pub fn random_permutation(d: usize, b: usize, seed: u64) -> Result<Permutation> {
    block_count(d, b)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pi: Vec<usize> = (0..d).collect();
    for i in (1..d).rev() {
        pi.swap(i, rng.random_range(0..=i));
    }
    Permutation::from_pi(pi, b, Strategy::Random { seed })
}

pub fn build_permutation(cal: &Matrix, b: usize, strategy: Strategy) -> Result<Permutation> {
    match strategy {
        Strategy::Identity => Permutation::identity(cal.cols(), b),
        Strategy::Random { seed } => random_permutation(cal.cols(), b, seed),
        Strategy::Absmax => absmax_permutation(cal, b),
        Strategy::Zigzag { key } => zigzag_permutation(cal, b, key),
        Strategy::Massdiff => massdiff(cal, b),
        Strategy::Optimal => Ok(optimal_oracle(cal, b)?.0),
        Strategy::Explicit => Err(Error::InvalidParams(
            "explicit permutations are loaded, not built".into(),
        )),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MassObjective {
    /// `(1/m) Σ_k max_j ‖X⁽ᵏ⁾_{B_j}‖₁`.
    pub expected_max_block_l1: f64,
    /// `(1/m) Σ_k ‖X⁽ᵏ⁾_{B_j}‖₁` for each block.
    pub per_block_avg_l1: Vec<f64>,
    /// `max_j` of the per-block averages, the quantity the greedy balances.
    pub max_block_avg_l1: f64,
    /// `(1/n) (1/m) Σ_k ‖X⁽ᵏ⁾‖₁`; no permutation can go below it.
    pub lower_bound: f64,
}

pub fn evaluate_objective(cal: &Matrix, perm: &Permutation) -> Result<MassObjective> {
    let d = cal.cols();
    if perm.dim() != d {
        return dim_err(format!(
            "permutation over {} coordinates, calibration has {d}",
            perm.dim()
        ));
    }
    let b = perm.block_size();
    let n = d / b;
    let m = cal.rows() as f64;
    let per_row: Vec<(f64, Vec<f64>)> = cal
        .as_slice()
        .par_chunks(d)
        .map(|row| {
            let sums: Vec<f64> = perm
                .blocks()
                .map(|blk| blk.iter().map(|&i| row[i].abs()).sum())
                .collect();
            (sums.iter().copied().fold(0.0, f64::max), sums)
        })
        .collect();
    let mut per_block_avg_l1 = vec![0.0; n];
    let mut total = 0.0;
    for (mx, sums) in &per_row {
        total += mx;
        for (a, s) in per_block_avg_l1.iter_mut().zip(sums) {
            *a += s;
        }
    }
    per_block_avg_l1.iter_mut().for_each(|a| *a /= m);
    let lower_bound = cal.iter_rows().map(l1).sum::<f64>() / (m * n as f64);
    Ok(MassObjective {
        expected_max_block_l1: total / m,
        max_block_avg_l1: per_block_avg_l1.iter().copied().fold(0.0, f64::max),
        per_block_avg_l1,
        lower_bound,
    })
}

/// Permutes the columns of every row: `out_j = row_{π(j)}`.
pub fn apply_permutation(set: &Matrix, perm: &Permutation) -> Result<Matrix> {
    if perm.dim() != set.cols() {
        return dim_err(format!(
            "permutation over {} coordinates, data has {}",
            perm.dim(),
            set.cols()
        ));
    }
    Ok(set.map_rows(|row, out| perm.apply_row(row, out)))
}

/// Dense `P` with `P e_i = e_{π(i)}`, for small dimensions.
pub fn permutation_matrix(perm: &Permutation) -> Result<Matrix> {
    let d = perm.dim();
    if d > crate::hadamard::transform::MAX_MATERIALIZED {
        return Err(Error::TooLarge(format!("refusing to materialize {d}x{d}")));
    }
    let mut data = vec![0.0; d * d];
    for (i, &p) in perm.pi().iter().enumerate() {
        data[p * d + i] = 1.0;
    }
    Ok(Matrix::from_parts(d, d, data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate, SyntheticSpec};
    use proptest::prelude::{any, prop_assert, prop_assert_eq, proptest};

    fn single(row: &[f64]) -> Matrix {
        Matrix::from_rows(&[row]).unwrap()
    }

    /// The greedy evaluated literally, re-summing block masses at every step.
    fn massdiff_literal(cal: &Matrix, b: usize) -> Vec<Vec<usize>> {
        let n = cal.cols() / b;
        let m = cal.rows() as f64;
        let avg = average_magnitudes(cal);
        let mut blocks: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut open: Vec<usize> = (0..n).collect();
        for i in sort_desc(&avg) {
            let cost = |j: usize| {
                cal.iter_rows()
                    .map(|x| blocks[j].iter().map(|&c| x[c].abs()).sum::<f64>() + x[i].abs())
                    .sum::<f64>()
                    / m
            };
            let mut best = open[0];
            for &j in &open[1..] {
                if cost(j) < cost(best) {
                    best = j;
                }
            }
            blocks[best].push(i);
            if blocks[best].len() == b {
                open.retain(|&j| j != best);
            }
        }
        blocks
    }

    #[test]
    fn massdiff_hand_trace() {
        let cal = single(&[8.0, 4.0, 2.0, 1.0]);
        let p = massdiff(&cal, 2).unwrap();
        assert_eq!(
            p.blocks().collect::<Vec<_>>(),
            vec![&[0, 3][..], &[1, 2][..]]
        );
        assert_eq!(
            evaluate_objective(&cal, &p).unwrap().expected_max_block_l1,
            9.0
        );
    }

    #[test]
    fn massdiff_is_step_equivalent_to_literal() {
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let data: Vec<f64> = (0..4 * 24)
                .map(|_| rng.random_range(-20i32..20) as f64)
                .collect();
            let cal = Matrix::new(4, 24, data).unwrap();
            for b in [2, 3, 4, 6, 8] {
                let fast: Vec<Vec<usize>> = massdiff(&cal, b)
                    .unwrap()
                    .blocks()
                    .map(<[usize]>::to_vec)
                    .collect();
                assert_eq!(fast, massdiff_literal(&cal, b), "seed {seed}, b {b}");
            }
        }
    }

    #[test]
    fn equal_magnitudes() {
        let cal = single(&[2.0; 8]);
        for p in [
            massdiff(&cal, 4).unwrap(),
            Permutation::identity(8, 4).unwrap(),
        ] {
            assert_eq!(
                evaluate_objective(&cal, &p).unwrap().expected_max_block_l1,
                8.0
            );
        }
    }

    #[test]
    fn absmax_examples() {
        let p = absmax_permutation(&single(&[1.0, 9.0, 3.0, 7.0]), 2).unwrap();
        assert_eq!(p.pi(), &[1, 3, 2, 0]);
        let p = absmax_permutation(&single(&[5.0, 5.0, 1.0, 5.0]), 2).unwrap();
        assert_eq!(p.pi(), &[0, 1, 3, 2]);
    }

    #[test]
    fn zigzag_examples() {
        let p = zigzag_permutation(
            &single(&[4.0, 3.0, 2.0, 1.0]),
            2,
            ZigzagKey::AverageMagnitude,
        )
        .unwrap();
        assert_eq!(
            p.blocks().collect::<Vec<_>>(),
            vec![&[0, 3][..], &[1, 2][..]]
        );
        let p = zigzag_permutation(&single(&[1.0, 3.0, 2.0]), 3, ZigzagKey::Absmax).unwrap();
        assert_eq!(p.pi(), &[1, 2, 0]);
        let cal = single(&[1.5; 12]);
        let p = zigzag_permutation(&cal, 4, ZigzagKey::AverageMagnitude).unwrap();
        let obj = evaluate_objective(&cal, &p).unwrap();
        assert!(obj.per_block_avg_l1.iter().all(|&v| v == 6.0));
    }

    #[test]
    fn random_and_identity() {
        assert_eq!(Permutation::identity(4, 2).unwrap().pi(), &[0, 1, 2, 3]);
        for seed in 0..1000 {
            let p = random_permutation(4, 2, seed).unwrap();
            assert!(Permutation::from_pi(p.pi().to_vec(), 2, Strategy::Explicit).is_ok());
        }
        assert_eq!(
            random_permutation(64, 8, 9).unwrap(),
            random_permutation(64, 8, 9).unwrap()
        );
        assert!(Permutation::from_pi(vec![0, 0, 1, 2], 2, Strategy::Explicit).is_err());
        assert!(massdiff(&single(&[1.0; 6]), 4).is_err());
    }

    #[test]
    fn objective_examples() {
        let cal = single(&[0.0, 0.0, -6.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        for b in [2, 4, 8] {
            let p = Permutation::identity(8, b).unwrap();
            assert_eq!(
                evaluate_objective(&cal, &p).unwrap().expected_max_block_l1,
                6.0
            );
        }
    }

    #[test]
    fn gather_matches_matrix_product() {
        let set = generate(&SyntheticSpec::gaussian(0.0, 1.0, 3), 5, 64).unwrap();
        let p = random_permutation(64, 8, 4).unwrap();
        let gathered = apply_permutation(&set, &p).unwrap();
        let dense = set.matmul(&permutation_matrix(&p).unwrap()).unwrap();
        assert_eq!(gathered, dense);
        let back = apply_permutation(&gathered, &p.inverse()).unwrap();
        assert_eq!(back, set);
        let id = Permutation::identity(64, 8).unwrap();
        assert_eq!(apply_permutation(&set, &id).unwrap(), set);
    }

    #[test]
    fn massdiff_beats_baselines_on_heavy_tails() {
        for seed in 0..10u64 {
            let cal = generate(&SyntheticSpec::heavy_tailed(seed), 64, 256).unwrap();
            let md = evaluate_objective(&cal, &massdiff(&cal, 16).unwrap()).unwrap();
            let id = evaluate_objective(&cal, &Permutation::identity(256, 16).unwrap()).unwrap();
            assert!(md.expected_max_block_l1 <= id.expected_max_block_l1);
            assert!(md.expected_max_block_l1 >= md.lower_bound);
        }
    }

    proptest! {
        #[test]
        fn strategies_are_balanced_bijections(seed in any::<u64>(), b_idx in 0usize..4) {
            let b = [1usize, 2, 4, 8][b_idx];
            let cal = generate(&SyntheticSpec::laplacian(0.0, 1.0, seed), 3, 16).unwrap();
            for s in [
                Strategy::Identity,
                Strategy::Random { seed },
                Strategy::Absmax,
                Strategy::Zigzag { key: ZigzagKey::AverageMagnitude },
                Strategy::Zigzag { key: ZigzagKey::Absmax },
                Strategy::Massdiff,
            ] {
                let p = build_permutation(&cal, b, s).unwrap();
                let mut sorted = p.pi().to_vec();
                sorted.sort_unstable();
                prop_assert_eq!(sorted, (0..16).collect::<Vec<_>>());
                prop_assert!(p.blocks().all(|blk| blk.len() == b));
            }
        }
    }
}
