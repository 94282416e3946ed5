//! Exhaustive search over balanced partitions for tiny dimensions.

use super::{average_magnitudes, evaluate_objective, massdiff, sort_desc, Permutation, Strategy};
use crate::data::{block_count, Matrix};
use crate::error::{Error, Result};

pub const ORACLE_MAX_DIM: usize = 16;

struct Search<'a> {
    /// `|X|` column-major by visiting order: `mags[step * m + k]`.
    mags: Vec<f64>,
    order: &'a [usize],
    m: usize,
    n: usize,
    b: usize,
    /// Running `ℓ₁` of every block for every row: `sums[k * n + j]`.
    sums: Vec<f64>,
    fill: Vec<usize>,
    assign: Vec<usize>,
    best: f64,
    best_assign: Option<Vec<usize>>,
}

impl Search<'_> {
    fn bound(&self) -> f64 {
        let total: f64 = self
            .sums
            .chunks_exact(self.n)
            .map(|s| s.iter().copied().fold(0.0, f64::max))
            .sum();
        total / self.m as f64
    }

    /// Blocks are opened in order so each partition is visited once.
    fn go(&mut self, step: usize, opened: usize) {
        if self.bound() >= self.best {
            return;
        }
        if step == self.order.len() {
            self.best = self.bound();
            self.best_assign = Some(self.assign.clone());
            return;
        }
        let limit = (opened + 1).min(self.n);
        for j in 0..limit {
            if self.fill[j] == self.b {
                continue;
            }
            for k in 0..self.m {
                self.sums[k * self.n + j] += self.mags[step * self.m + k];
            }
            self.fill[j] += 1;
            self.assign[step] = j;
            self.go(step + 1, opened.max(j + 1));
            self.fill[j] -= 1;
            for k in 0..self.m {
                self.sums[k * self.n + j] -= self.mags[step * self.m + k];
            }
        }
    }
}

/// Exact minimizer of the expected max-block `ℓ₁` over all partitions of
/// `0..d` into blocks of size `b`, together with its objective.
pub fn optimal_oracle(cal: &Matrix, b: usize) -> Result<(Permutation, f64)> {
    let d = cal.cols();
    let n = block_count(d, b)?;
    if d > ORACLE_MAX_DIM {
        return Err(Error::TooLarge(format!(
            "exhaustive oracle supports d <= {ORACLE_MAX_DIM}, got {d}"
        )));
    }
    let m = cal.rows();
    let order = sort_desc(&average_magnitudes(cal));
    let mut mags = vec![0.0; d * m];
    for (k, row) in cal.iter_rows().enumerate() {
        for (step, &i) in order.iter().enumerate() {
            mags[step * m + k] = row[i].abs();
        }
    }
    let greedy = massdiff(cal, b)?;
    let greedy_obj = evaluate_objective(cal, &greedy)?.expected_max_block_l1;
    let mut search = Search {
        mags,
        order: &order,
        m,
        n,
        b,
        sums: vec![0.0; m * n],
        fill: vec![0; n],
        assign: vec![0; d],
        // Slightly above the greedy value so that an equal partition is
        // still found when floating-point sums differ in the last bit.
        best: greedy_obj * (1.0 + 1e-12) + f64::MIN_POSITIVE,
        best_assign: None,
    };
    search.go(0, 0);
    let Some(assign) = search.best_assign else {
        return Ok((
            Permutation {
                strategy: Strategy::Optimal,
                ..greedy
            },
            greedy_obj,
        ));
    };
    let mut blocks = vec![Vec::with_capacity(b); n];
    for (step, &j) in assign.iter().enumerate() {
        blocks[j].push(order[step]);
    }
    let perm = Permutation::from_blocks(blocks, b, Strategy::Optimal);
    let obj = evaluate_objective(cal, &perm)?.expected_max_block_l1;
    Ok((perm, obj))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// All `d!` orderings, for cross-checking the partition search.
    fn brute_force(cal: &Matrix, b: usize) -> f64 {
        fn rec(cal: &Matrix, b: usize, pi: &mut Vec<usize>, used: &mut [bool], best: &mut f64) {
            let d = cal.cols();
            if pi.len() == d {
                let p = Permutation::from_pi(pi.clone(), b, Strategy::Explicit).unwrap();
                *best = best.min(evaluate_objective(cal, &p).unwrap().expected_max_block_l1);
                return;
            }
            for i in 0..d {
                if !used[i] {
                    used[i] = true;
                    pi.push(i);
                    rec(cal, b, pi, used, best);
                    pi.pop();
                    used[i] = false;
                }
            }
        }
        let mut best = f64::INFINITY;
        rec(
            cal,
            b,
            &mut Vec::new(),
            &mut vec![false; cal.cols()],
            &mut best,
        );
        best
    }

    #[test]
    fn hand_example() {
        let cal = Matrix::from_rows(&[[8.0, 4.0, 2.0, 1.0]]).unwrap();
        let (p, obj) = optimal_oracle(&cal, 2).unwrap();
        assert_eq!(obj, 9.0);
        assert_eq!(
            evaluate_objective(&cal, &p).unwrap().expected_max_block_l1,
            9.0
        );
    }

    #[test]
    fn matches_permutation_brute_force() {
        for seed in 0..12u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let d = [6usize, 8][seed as usize % 2];
            let data: Vec<f64> = (0..3 * d).map(|_| rng.random_range(-5.0..5.0)).collect();
            let cal = Matrix::new(3, d, data).unwrap();
            for b in [2, d / 2] {
                let (_, obj) = optimal_oracle(&cal, b).unwrap();
                let bf = brute_force(&cal, b);
                assert!((obj - bf).abs() <= 1e-12 * bf, "seed {seed}: {obj} vs {bf}");
            }
        }
    }

    #[test]
    fn sandwich() {
        for seed in 0..30u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let data: Vec<f64> = (0..2 * 12).map(|_| rng.random_range(-3.0..3.0)).collect();
            let cal = Matrix::new(2, 12, data).unwrap();
            let (_, opt) = optimal_oracle(&cal, 4).unwrap();
            let md = evaluate_objective(&cal, &massdiff(&cal, 4).unwrap()).unwrap();
            let id = evaluate_objective(&cal, &Permutation::identity(12, 4).unwrap()).unwrap();
            assert!(opt <= md.expected_max_block_l1 * (1.0 + 1e-12));
            assert!(opt <= id.expected_max_block_l1 * (1.0 + 1e-12));
        }
    }

    #[test]
    fn refuses_large_dimensions() {
        assert!(matches!(
            optimal_oracle(&Matrix::zeros(1, 32).unwrap(), 4),
            Err(Error::TooLarge(_))
        ));
    }
}
