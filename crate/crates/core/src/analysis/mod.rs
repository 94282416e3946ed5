//! Mass and energy concentration statistics and checks of the outlier
//! bounds for full-vector and block Hadamard rotations.

pub mod rademacher;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::data::{block_count, l1, linf, sq_l2, Matrix};
use crate::error::{dim_err, Error, Result};
use crate::hadamard::{BlockRotation, HadamardTransform};

pub use rademacher::{rademacher_diagnostics, RademacherDiagnostics};

/// Relative tolerance on bound slacks: satisfied iff
/// `slack ≥ −BOUND_TOLERANCE · ‖X‖∞`.
pub const BOUND_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DeltaStats {
    pub delta: f64,
    pub delta_energy: f64,
    /// `None` for all-zero blocks.
    pub per_block_delta: Vec<Option<f64>>,
    pub per_block_linf: Vec<f64>,
    pub block_size: usize,
    pub zero_blocks: usize,
}

fn undefined(row: &[f64]) -> Result<f64> {
    let m = linf(row);
    if m == 0.0 {
        return Err(Error::UndefinedDelta("row is identically zero".into()));
    }
    Ok(m)
}

pub fn delta_stats(row: &[f64], b: usize) -> Result<DeltaStats> {
    block_count(row.len(), b)?;
    let m = undefined(row)?;
    let d = row.len() as f64;
    let mut per_block_delta = Vec::new();
    let mut per_block_linf = Vec::new();
    for block in row.chunks_exact(b) {
        let bm = linf(block);
        per_block_linf.push(bm);
        per_block_delta.push((bm > 0.0).then(|| l1(block) / (b as f64 * bm)));
    }
    Ok(DeltaStats {
        delta: l1(row) / (d * m),
        delta_energy: sq_l2(row).sqrt() / (d.sqrt() * m),
        zero_blocks: per_block_delta.iter().filter(|x| x.is_none()).count(),
        per_block_delta,
        per_block_linf,
        block_size: b,
    })
}

/// `max_j δ_{j} · ‖X_{j}‖∞ / ‖X‖∞`, the quantity plotted against block size.
pub fn block_concentration(row: &[f64], b: usize) -> Result<f64> {
    block_count(row.len(), b)?;
    let m = undefined(row)?;
    Ok(max_block_l1(row, b) / (b as f64 * m))
}

fn max_block_l1(row: &[f64], b: usize) -> f64 {
    row.chunks_exact(b).map(l1).fold(0.0, f64::max)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BoundRow {
    pub pre_range: f64,
    pub post_range: f64,
    pub bound_value: f64,
    pub slack: f64,
    pub satisfied: bool,
    /// `δ < 1/√d`: the rotation is guaranteed to shrink `‖X‖∞`.
    pub sufficient: bool,
}

fn bound_row(row: &[f64], rot: &BlockRotation) -> Result<BoundRow> {
    if row.len() != rot.dim() {
        return dim_err(format!(
            "row has length {}, rotation has dimension {}",
            row.len(),
            rot.dim()
        ));
    }
    let pre_range = undefined(row)?;
    let b = rot.block_size();
    let mut rotated = row.to_vec();
    rot.apply_in_place(&mut rotated)?;
    let post_range = linf(&rotated);
    // max_j δ_{j} √b ‖X_{j}‖∞ = max_j ‖X_{j}‖₁ / √b
    let bound_value = max_block_l1(row, b) / (b as f64).sqrt();
    let slack = bound_value - post_range;
    let d = row.len() as f64;
    Ok(BoundRow {
        pre_range,
        post_range,
        bound_value,
        slack,
        satisfied: slack >= -BOUND_TOLERANCE * pre_range,
        sufficient: l1(row) / (d * pre_range) < 1.0 / d.sqrt(),
    })
}

/// `‖XR‖∞ ≤ δ √d ‖X‖∞` for a full-vector rotation.
pub fn check_prop1(row: &[f64], rotation: &HadamardTransform) -> Result<BoundRow> {
    bound_row(row, &BlockRotation::new(rotation.clone(), 1)?)
}

/// `‖XR̃‖∞ ≤ max_j δ_{j} √b ‖X_{j}‖∞` for a block rotation.
pub fn check_prop2(row: &[f64], rot: &BlockRotation) -> Result<BoundRow> {
    bound_row(row, rot)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundReport {
    pub block_size: usize,
    pub rows: Vec<BoundRow>,
    pub violations: usize,
    pub sufficient_rows: usize,
    /// Rows where `δ < 1/√d` yet `‖XR̃‖∞ ≥ ‖X‖∞`.
    pub sufficient_failures: usize,
    pub concentration_mean: f64,
    pub concentration_std: f64,
}

/// Mean and population standard deviation.
pub(crate) fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Runs the block bound on every row of `set`.
pub fn check_bounds(set: &Matrix, rot: &BlockRotation) -> Result<BoundReport> {
    let b = rot.block_size();
    let rows: Vec<BoundRow> = set
        .as_slice()
        .par_chunks(set.cols())
        .map(|row| bound_row(row, rot))
        .collect::<Result<_>>()?;
    let conc: Vec<f64> = set
        .iter_rows()
        .map(|r| block_concentration(r, b))
        .collect::<Result<_>>()?;
    let (concentration_mean, concentration_std) = mean_std(&conc);
    Ok(BoundReport {
        block_size: b,
        violations: rows.iter().filter(|r| !r.satisfied).count(),
        sufficient_rows: rows.iter().filter(|r| r.sufficient).count(),
        sufficient_failures: rows
            .iter()
            .filter(|r| r.sufficient && r.post_range >= r.pre_range)
            .count(),
        rows,
        concentration_mean,
        concentration_std,
    })
}

/// The energy-concentration analogue `max_j δ′_{j} √b ‖X_{j}‖∞ = max_j ‖X_{j}‖₂`.
pub fn energy_bound(row: &[f64], b: usize) -> Result<f64> {
    block_count(row.len(), b)?;
    Ok(row
        .chunks_exact(b)
        .map(|blk| sq_l2(blk).sqrt())
        .fold(0.0, f64::max))
}

/// `𝒵(b; X) = max_j √b δ_{j} ‖X_{j}‖∞ = max_j ‖X_{j}‖₁ / √b`.
pub fn z_value(row: &[f64], b: usize) -> Result<f64> {
    block_count(row.len(), b)?;
    undefined(row)?;
    Ok(max_block_l1(row, b) / (b as f64).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Corollary3 {
    pub b_prime: usize,
    pub k: usize,
    pub z_b: f64,
    pub z_b_prime: f64,
    /// `√k · 𝒵(b′)`.
    pub bound_value: f64,
    pub satisfied: bool,
}

/// `𝒵(k b′; X) ≤ √k 𝒵(b′; X)`.
pub fn check_corollary3(row: &[f64], b_prime: usize, k: usize) -> Result<Corollary3> {
    let b = b_prime
        .checked_mul(k)
        .filter(|&b| b > 0)
        .ok_or_else(|| Error::InvalidParams(format!("invalid factor pair ({b_prime}, {k})")))?;
    let z_b = z_value(row, b)?;
    let z_b_prime = z_value(row, b_prime)?;
    let bound_value = (k as f64).sqrt() * z_b_prime;
    Ok(Corollary3 {
        b_prime,
        k,
        z_b,
        z_b_prime,
        bound_value,
        satisfied: bound_value - z_b >= -BOUND_TOLERANCE * linf(row),
    })
}

/// Every `(b′, k)` with `k b′` dividing `d`.
pub fn factor_pairs(d: usize) -> Vec<(usize, usize)> {
    let divisors: Vec<usize> = (1..=d).filter(|x| d.is_multiple_of(*x)).collect();
    let mut pairs = Vec::new();
    for &b in &divisors {
        for &bp in divisors.iter().filter(|&&bp| b % bp == 0) {
            pairs.push((bp, b / bp));
        }
    }
    pairs
}

pub fn corollary3_sweep(row: &[f64]) -> Result<Vec<Corollary3>> {
    factor_pairs(row.len())
        .into_iter()
        .map(|(bp, k)| check_corollary3(row, bp, k))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Prop4Report {
    pub d: usize,
    pub block_size: usize,
    pub epsilon: f64,
    pub trials: usize,
    /// `√((2/b) log(2d/ε) ‖X‖₂²)`.
    pub bound_value: f64,
    pub exceed_rate: f64,
    /// `√((2/b) log(2d/ε) max_j ‖X_{j}‖₂²)`.
    pub block_bound_value: f64,
    pub block_exceed_rate: f64,
    /// `ε + 3 √(ε(1 − ε)/trials)`.
    pub tolerance: f64,
    pub within_tolerance: bool,
}

pub const PROP4_MIN_TRIALS: usize = 1000;

/// Draws `trials` Rademacher sign vectors `S`, rotates `X = S ⊙ Y` and
/// measures how often `‖XR̃‖∞` exceeds the high-probability bound.
pub fn check_prop4(
    magnitudes: &[f64],
    rot: &BlockRotation,
    epsilon: f64,
    trials: usize,
    seed: u64,
) -> Result<Prop4Report> {
    if trials < PROP4_MIN_TRIALS {
        return Err(Error::InvalidParams(format!(
            "need at least {PROP4_MIN_TRIALS} trials, got {trials}"
        )));
    }
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::InvalidParams(format!(
            "epsilon {epsilon} outside (0, 1]"
        )));
    }
    let d = rot.dim();
    if magnitudes.len() != d {
        return dim_err(format!(
            "magnitude vector has length {}, rotation has dimension {d}",
            magnitudes.len()
        ));
    }
    let y: Vec<f64> = magnitudes.iter().map(|v| v.abs()).collect();
    if linf(&y) == 0.0 {
        return Err(Error::UndefinedDelta("magnitude vector is zero".into()));
    }
    let b = rot.block_size();
    let factor = (2.0 / b as f64) * (2.0 * d as f64 / epsilon).ln();
    let bound_value = (factor * sq_l2(&y)).sqrt();
    let max_block = y.chunks_exact(b).map(sq_l2).fold(0.0, f64::max);
    let block_bound_value = (factor * max_block).sqrt();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = vec![0.0; d];
    let (mut over, mut over_block) = (0usize, 0usize);
    for _ in 0..trials {
        for (xi, &yi) in x.iter_mut().zip(&y) {
            *xi = if rng.random::<bool>() { yi } else { -yi };
        }
        rot.apply_in_place(&mut x)?;
        let post = linf(&x);
        over += (post > bound_value) as usize;
        over_block += (post > block_bound_value) as usize;
    }
    let tolerance = epsilon + 3.0 * (epsilon * (1.0 - epsilon) / trials as f64).sqrt();
    let exceed_rate = over as f64 / trials as f64;
    let block_exceed_rate = over_block as f64 / trials as f64;
    Ok(Prop4Report {
        d,
        block_size: b,
        epsilon,
        trials,
        bound_value,
        exceed_rate,
        block_bound_value,
        block_exceed_rate,
        tolerance,
        within_tolerance: exceed_rate <= tolerance && block_exceed_rate <= tolerance,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Figure5Row {
    pub block_size: usize,
    pub mean: f64,
    pub std: f64,
    pub inv_sqrt_b: f64,
    pub inv_b: f64,
    pub rows_used: usize,
    pub zero_rows_skipped: usize,
}

/// Per block size, mean and standard deviation over rows of
/// `max_j δ_{j} ‖X_{j}‖∞ / ‖X‖∞`, with the `1/√b` and `1/b` envelopes.
pub fn figure5_statistic(set: &Matrix, block_sizes: &[usize]) -> Result<Vec<Figure5Row>> {
    block_sizes
        .iter()
        .map(|&b| {
            block_count(set.cols(), b)?;
            let stats: Vec<f64> = set
                .iter_rows()
                .filter(|r| linf(r) > 0.0)
                .map(|r| max_block_l1(r, b) / (b as f64 * linf(r)))
                .collect();
            let (mean, std) = mean_std(&stats);
            Ok(Figure5Row {
                block_size: b,
                mean,
                std,
                inv_sqrt_b: 1.0 / (b as f64).sqrt(),
                inv_b: 1.0 / b as f64,
                rows_used: stats.len(),
                zero_rows_skipped: set.rows() - stats.len(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate, SyntheticSpec};
    use crate::hadamard::{build_hadamard, Construction};
    use proptest::prelude::*;

    fn spike(d: usize, at: usize, a: f64) -> Vec<f64> {
        let mut v = vec![0.0; d];
        v[at] = a;
        v
    }

    #[test]
    fn delta_endpoints() {
        let s = delta_stats(&[2.0, -2.0, 2.0, 2.0], 2).unwrap();
        assert_eq!((s.delta, s.delta_energy), (1.0, 1.0));
        let s = delta_stats(&spike(16, 3, 5.0), 4).unwrap();
        assert_eq!(s.delta, 1.0 / 16.0);
        assert_eq!(s.zero_blocks, 3);
        assert_eq!(s.per_block_delta[0], Some(0.25));
        let s = delta_stats(&[3.0, 1.0, 0.0, 2.0], 2).unwrap();
        assert_eq!(s.per_block_delta, vec![Some(4.0 / 6.0), Some(0.5)]);
        assert_eq!(s.per_block_linf, vec![3.0, 2.0]);
        assert!(matches!(
            delta_stats(&[0.0; 4], 2),
            Err(Error::UndefinedDelta(_))
        ));
    }

    #[test]
    fn prop1_tight_cases() {
        for d in [4usize, 16, 256] {
            let t = HadamardTransform::sylvester(d).unwrap();
            let r = check_prop1(&spike(d, d / 3, 7.0), &t).unwrap();
            assert!(r.satisfied && r.slack.abs() < 1e-12);
            assert!((r.post_range - 7.0 / (d as f64).sqrt()).abs() < 1e-12);
            let r = check_prop1(&vec![1.5; d], &t).unwrap();
            assert!(r.satisfied && r.slack.abs() < 1e-9);
            assert!((r.post_range - 1.5 * (d as f64).sqrt()).abs() < 1e-9);
        }
    }

    #[test]
    fn prop2_spikes_per_block() {
        let row = [0.0, 3.0, 0.0, 0.0, 0.0, 0.0, -3.0, 0.0];
        let rot = BlockRotation::for_blocks(8, 4).unwrap();
        let r = check_prop2(&row, &rot).unwrap();
        assert_eq!(r.bound_value, 1.5);
        let dense = rot.dense().unwrap();
        let oracle = (0..8)
            .map(|j| (0..8).map(|i| row[i] * dense.get(i, j)).sum::<f64>().abs())
            .fold(0.0, f64::max);
        assert_eq!(r.post_range, oracle);
        assert!(r.satisfied);
    }

    #[test]
    fn prop2_with_full_block_matches_prop1_bitwise() {
        let set = generate(&SyntheticSpec::laplacian(0.0, 1.0, 4), 50, 64).unwrap();
        let t = HadamardTransform::sylvester(64).unwrap();
        let rot = BlockRotation::new(t.clone(), 1).unwrap();
        for row in set.iter_rows() {
            let a = check_prop1(row, &t).unwrap();
            let b = check_prop2(row, &rot).unwrap();
            assert_eq!(a.satisfied, b.satisfied);
            assert_eq!(a.slack.to_bits(), b.slack.to_bits());
        }
    }

    #[test]
    fn nonpo2_full_vector_bound() {
        let set = generate(&SyntheticSpec::gaussian(0.0, 1.0, 2), 200, 28).unwrap();
        let t = HadamardTransform::from_spec(&build_hadamard(28, Construction::Paley1).unwrap())
            .unwrap();
        for row in set.iter_rows() {
            assert!(check_prop1(row, &t).unwrap().satisfied);
        }
    }

    #[test]
    fn corollary3_examples() {
        let row = spike(8, 5, 2.0);
        let c = check_corollary3(&row, 2, 2).unwrap();
        assert!((c.z_b - 1.0).abs() < 1e-15);
        assert!((c.bound_value - 2.0).abs() < 1e-15);
        assert!(c.satisfied);
        let row = [1.0, -2.0, 0.5, 4.0];
        let c = check_corollary3(&row, 2, 1).unwrap();
        assert_eq!(c.z_b, c.bound_value);
        assert!(factor_pairs(8).contains(&(2, 4)));
        assert_eq!(factor_pairs(8).len(), 10);
    }

    #[test]
    fn energy_bound_never_certifies() {
        let set = generate(&SyntheticSpec::gaussian(0.0, 1.0, 8), 100, 64).unwrap();
        for row in set.iter_rows() {
            let s = delta_stats(row, 64).unwrap();
            if s.delta_energy > 1.0 / 8.0 {
                assert!(energy_bound(row, 64).unwrap() >= linf(row));
            }
        }
    }

    #[test]
    fn prop4_constant_magnitudes() {
        let rot = BlockRotation::for_blocks(64, 8).unwrap();
        let r = check_prop4(&[1.0; 64], &rot, 0.05, 10_000, 3).unwrap();
        assert!(r.within_tolerance, "{r:?}");
        assert!(r.block_bound_value <= r.bound_value);
        let vacuous = check_prop4(&[1.0; 64], &rot, 1.0, 1000, 3).unwrap();
        assert!(vacuous.exceed_rate >= 0.0);
        assert!(check_prop4(&[1.0; 64], &rot, 0.05, 10, 3).is_err());
        assert!(check_prop4(&[0.0; 64], &rot, 0.05, 1000, 3).is_err());
    }

    #[test]
    fn prop4_bound_decreases_with_block_size() {
        let y: Vec<f64> = (0..64).map(|i| 1.0 + (i % 7) as f64).collect();
        let mut last = f64::INFINITY;
        for b in [8, 16, 32, 64] {
            let rot = BlockRotation::for_blocks(64, b).unwrap();
            let r = check_prop4(&y, &rot, 0.05, 1000, 1).unwrap();
            assert!(r.bound_value < last);
            last = r.bound_value;
        }
    }

    #[test]
    fn figure5_extremes() {
        let spikes = Matrix::from_rows(&[spike(64, 10, 3.0), spike(64, 63, -1.0)]).unwrap();
        let flat = Matrix::from_rows(&[vec![2.0; 64]]).unwrap();
        for row in figure5_statistic(&spikes, &[4, 16, 64]).unwrap() {
            assert_eq!(row.mean, row.inv_b);
            assert_eq!(row.std, 0.0);
        }
        for row in figure5_statistic(&flat, &[4, 64]).unwrap() {
            assert_eq!(row.mean, 1.0);
        }
        let zeros = Matrix::zeros(3, 8).unwrap();
        assert_eq!(
            figure5_statistic(&zeros, &[4]).unwrap()[0].zero_rows_skipped,
            3
        );
    }

    #[test]
    fn figure5_gaussian_shape() {
        let set = generate(&SyntheticSpec::gaussian(0.0, 1.0, 12), 64, 4096).unwrap();
        let rows = figure5_statistic(&set, &[16, 64, 256, 1024, 4096]).unwrap();
        for w in rows.windows(2) {
            assert!(w[1].mean < w[0].mean);
        }
        for r in &rows {
            assert!(r.mean > r.inv_b && r.mean < 1.0);
        }
    }

    proptest! {
        #[test]
        fn deterministic_bounds_hold(
            row in prop::collection::vec(-100.0f64..100.0, 64),
            b_idx in 0usize..4,
        ) {
            prop_assume!(linf(&row) > 0.0);
            let b = [4usize, 8, 32, 64][b_idx];
            let r = check_prop2(&row, &BlockRotation::for_blocks(64, b).unwrap()).unwrap();
            prop_assert!(r.satisfied);
            if r.sufficient {
                prop_assert!(r.post_range < r.pre_range);
            }
            for c in corollary3_sweep(&row).unwrap() {
                prop_assert!(c.satisfied);
            }
            let s = delta_stats(&row, b).unwrap();
            prop_assert!(s.delta >= 1.0 / 64.0 - 1e-15 && s.delta <= 1.0 + 1e-15);
            prop_assert!(s.delta_energy >= 1.0 / 8.0 - 1e-15 && s.delta_energy <= 1.0 + 1e-15);
            for dj in s.per_block_delta.iter().flatten() {
                prop_assert!(*dj >= 1.0 / b as f64 - 1e-15 && *dj <= 1.0 + 1e-15);
            }
        }
    }
}
