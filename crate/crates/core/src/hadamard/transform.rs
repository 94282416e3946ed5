//! Fast normalized Hadamard transforms and block rotations.
//!
//! All transforms act on row vectors: `apply` computes `x · R`.

use rayon::prelude::*;

use super::construct::{build_any, HadamardSpec};
use super::opcount::DimensionFactorization;
use crate::data::{block_count, ActivationSet, Matrix};
use crate::error::{dim_err, Error, Result};

/// Receives add/subtract counts from instrumented kernels.
pub trait Tally {
    fn add(&mut self, ops: u64);
}

/// Discards counts.
pub struct NoTally;

impl Tally for NoTally {
    #[inline]
    fn add(&mut self, _: u64) {}
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct OpCounter {
    pub ops: u64,
}

impl Tally for OpCounter {
    #[inline]
    fn add(&mut self, ops: u64) {
        self.ops += ops;
    }
}

/// Radix-2 stages over `x` with butterfly spans `first_span, 2·first_span, …`.
fn butterflies(x: &mut [f64], first_span: usize, tally: &mut impl Tally) {
    let n = x.len();
    let mut h = first_span;
    while h < n {
        for i in (0..n).step_by(2 * h) {
            let (lo, hi) = x[i..i + 2 * h].split_at_mut(h);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let (u, v) = (*a, *b);
                *a = u + v;
                *b = u - v;
            }
        }
        tally.add(n as u64);
        h *= 2;
    }
}

fn scale(x: &mut [f64], s: f64) {
    x.iter_mut().for_each(|v| *v *= s);
}

/// Normalized Walsh–Hadamard transform in place.
pub fn fwht_in_place(x: &mut [f64]) -> Result<()> {
    fwht_counted(x, &mut NoTally)
}

pub fn fwht_counted(x: &mut [f64], tally: &mut impl Tally) -> Result<()> {
    if x.is_empty() || !x.len().is_power_of_two() {
        return dim_err(format!("fwht needs a power-of-2 length, got {}", x.len()));
    }
    butterflies(x, 1, tally);
    scale(x, 1.0 / (x.len() as f64).sqrt());
    Ok(())
}

pub fn fwht(row: &[f64]) -> Result<Vec<f64>> {
    let mut out = row.to_vec();
    fwht_in_place(&mut out)?;
    Ok(out)
}

/// Precomputed schedule for `x · H` with `H` of order `4t`.
///
/// Each adjacent group of four inputs contributes `±(x0 ± x1 ± x2 ± x3)`
/// to every output. The eight sign patterns with leading `+` are built from
/// the pairwise sums and differences, then every output adds up one value
/// per group.
#[derive(Clone, Debug)]
pub struct GroupedPlan {
    order: usize,
    groups: usize,
    /// `codes[v * groups + g]`: pattern index in bits 0..3, negation in bit 3.
    codes: Vec<u8>,
    base: HadamardSpec,
}

const NEG: u8 = 8;

impl GroupedPlan {
    pub fn new(base: &HadamardSpec) -> Result<Self> {
        let order = base.order();
        if !order.is_multiple_of(4) {
            return Err(Error::InvalidParams(format!(
                "grouped kernel needs an order divisible by 4, got {order}"
            )));
        }
        let groups = order / 4;
        let mut codes = vec![0u8; order * groups];
        for v in 0..order {
            for g in 0..groups {
                let s: [i8; 4] = std::array::from_fn(|r| base.sign(4 * g + r, v));
                let rel = |r: usize| ((s[0] * s[r]) < 0) as u8;
                let mut code = (rel(1) << 2) | (rel(2) << 1) | rel(3);
                if s[0] < 0 {
                    code |= NEG;
                }
                codes[v * groups + g] = code;
            }
        }
        debug_assert!((0..order).all(|v| codes[v * groups] & NEG == 0));
        Ok(GroupedPlan {
            order,
            groups,
            codes,
            base: base.clone(),
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn base(&self) -> &HadamardSpec {
        &self.base
    }

    /// Unnormalized `x · H`, written into `out`. `sums` is scratch of
    /// length `2 · order`.
    fn apply(&self, x: &[f64], out: &mut [f64], sums: &mut [f64], tally: &mut impl Tally) {
        for (g, quad) in x.chunks_exact(4).enumerate() {
            let a = quad[0] + quad[1];
            let b = quad[0] - quad[1];
            let c = quad[2] + quad[3];
            let e = quad[2] - quad[3];
            let s = &mut sums[8 * g..8 * g + 8];
            s[0] = a + c;
            s[1] = a + e;
            s[2] = a - e;
            s[3] = a - c;
            s[4] = b + c;
            s[5] = b + e;
            s[6] = b - e;
            s[7] = b - c;
        }
        tally.add(12 * self.groups as u64);
        for (v, y) in out.iter_mut().enumerate() {
            let codes = &self.codes[v * self.groups..(v + 1) * self.groups];
            let mut acc = sums[codes[0] as usize];
            for (g, &code) in codes.iter().enumerate().skip(1) {
                let val = sums[8 * g + (code & 7) as usize];
                if code & NEG == 0 {
                    acc += val;
                } else {
                    acc -= val;
                }
            }
            *y = acc;
        }
        tally.add((self.order * (self.groups - 1)) as u64);
    }
}

#[derive(Clone, Debug)]
enum Kernel {
    Walsh,
    /// `H_{2^stages} ⊗ H_base`: radix-2 stages, then grouped base blocks.
    Lifted {
        stages: u32,
        plan: GroupedPlan,
    },
    Dense(HadamardSpec),
}

/// Computation schedule for an instrumented rotation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Schedule {
    /// Butterflies for power-of-2 factors, grouped kernel for the base.
    Fast,
    /// Butterflies for power-of-2 factors, dense product for the base.
    ButterflyPlusMatmul,
    /// Dense product with the full matrix.
    Dense,
}

/// A normalized `d × d` Hadamard rotation applied without materializing
/// the matrix.
#[derive(Clone, Debug)]
pub struct HadamardTransform {
    d: usize,
    kernel: Kernel,
}

/// Largest order for which [`HadamardTransform::dense`] materializes.
pub const MAX_MATERIALIZED: usize = 4096;

impl HadamardTransform {
    pub fn sylvester(d: usize) -> Result<Self> {
        if d == 0 || !d.is_power_of_two() {
            return dim_err(format!("sylvester transform needs a power of 2, got {d}"));
        }
        Ok(HadamardTransform {
            d,
            kernel: Kernel::Walsh,
        })
    }

    /// Sylvester for powers of 2, otherwise `H_{2^{k′}} ⊗ H_{4t}` with a
    /// bundled construction of order `4t`.
    pub fn for_dimension(d: usize) -> Result<Self> {
        let fact = DimensionFactorization::of(d)?;
        if fact.is_power_of_two() {
            return Self::sylvester(d);
        }
        let (stages, four_t) = fact.lifted()?;
        Self::lifted(stages, &build_any(four_t)?)
    }

    /// `H_{2^stages} ⊗ base`.
    pub fn lifted(stages: u32, base: &HadamardSpec) -> Result<Self> {
        let d = base
            .order()
            .checked_mul(1usize << stages)
            .ok_or_else(|| Error::TooLarge(format!("2^{stages} x {}", base.order())))?;
        Ok(HadamardTransform {
            d,
            kernel: Kernel::Lifted {
                stages,
                plan: GroupedPlan::new(base)?,
            },
        })
    }

    /// The transform for a single validated matrix.
    pub fn from_spec(spec: &HadamardSpec) -> Result<Self> {
        if spec.order().is_power_of_two()
            && (0..spec.order()).all(|i| {
                (0..spec.order())
                    .all(|j| spec.sign(i, j) == if (i & j).count_ones() % 2 == 0 { 1 } else { -1 })
            })
        {
            return Self::sylvester(spec.order());
        }
        if spec.order().is_multiple_of(4) {
            return Self::lifted(0, spec);
        }
        Ok(HadamardTransform {
            d: spec.order(),
            kernel: Kernel::Dense(spec.clone()),
        })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// `Rᵀ` as a transform of the same structure.
    pub fn transpose(&self) -> Self {
        let kernel = match &self.kernel {
            Kernel::Walsh => Kernel::Walsh,
            Kernel::Lifted { stages, plan } => Kernel::Lifted {
                stages: *stages,
                plan: GroupedPlan::new(&plan.base.transpose()).expect("order unchanged"),
            },
            Kernel::Dense(spec) => Kernel::Dense(spec.transpose()),
        };
        HadamardTransform { d: self.d, kernel }
    }

    /// Unnormalized sign of entry `(i, j)`.
    pub fn sign(&self, i: usize, j: usize) -> i8 {
        let walsh = |a: usize, b: usize| {
            if (a & b).count_ones().is_multiple_of(2) {
                1
            } else {
                -1
            }
        };
        match &self.kernel {
            Kernel::Walsh => walsh(i, j),
            Kernel::Lifted { plan, .. } => {
                let n = plan.order;
                walsh(i / n, j / n) * plan.base.sign(i % n, j % n)
            }
            Kernel::Dense(spec) => spec.sign(i, j),
        }
    }

    pub fn apply(&self, row: &[f64]) -> Result<Vec<f64>> {
        let mut out = row.to_vec();
        self.apply_in_place(&mut out)?;
        Ok(out)
    }

    pub fn apply_in_place(&self, row: &mut [f64]) -> Result<()> {
        self.apply_counted(row, Schedule::Fast, &mut NoTally)
    }

    /// Applies the rotation with the given schedule, reporting every
    /// addition and subtraction to `tally`.
    pub fn apply_counted(
        &self,
        row: &mut [f64],
        schedule: Schedule,
        tally: &mut impl Tally,
    ) -> Result<()> {
        if row.len() != self.d {
            return dim_err(format!(
                "row has length {}, transform has order {}",
                row.len(),
                self.d
            ));
        }
        match (schedule, &self.kernel) {
            (Schedule::Dense, _) | (_, Kernel::Dense(_)) => self.dense_unnormalized(row, tally),
            (_, Kernel::Walsh) => butterflies(row, 1, tally),
            (Schedule::Fast, Kernel::Lifted { plan, .. }) => {
                let n = plan.order;
                butterflies(row, n, tally);
                let mut sums = vec![0.0; 2 * n];
                let mut out = vec![0.0; n];
                for block in row.chunks_exact_mut(n) {
                    plan.apply(block, &mut out, &mut sums, tally);
                    block.copy_from_slice(&out);
                }
            }
            (Schedule::ButterflyPlusMatmul, Kernel::Lifted { plan, .. }) => {
                let n = plan.order;
                butterflies(row, n, tally);
                let mut out = vec![0.0; n];
                for block in row.chunks_exact_mut(n) {
                    signed_product(block, &mut out, |u, v| plan.base.sign(u, v), tally);
                    block.copy_from_slice(&out);
                }
            }
        }
        scale(row, 1.0 / (self.d as f64).sqrt());
        Ok(())
    }

    fn dense_unnormalized(&self, row: &mut [f64], tally: &mut impl Tally) {
        let mut out = vec![0.0; self.d];
        signed_product(row, &mut out, |u, v| self.sign(u, v), tally);
        row.copy_from_slice(&out);
    }

    /// Brute-force `x · R` from the entry signs, for use as an oracle.
    pub fn reference_apply(&self, row: &[f64]) -> Result<Vec<f64>> {
        let mut out = row.to_vec();
        self.apply_counted(&mut out, Schedule::Dense, &mut NoTally)?;
        Ok(out)
    }

    /// The dense normalized matrix (orders up to [`MAX_MATERIALIZED`]).
    pub fn dense(&self) -> Result<Matrix> {
        if self.d > MAX_MATERIALIZED {
            return Err(Error::TooLarge(format!(
                "refusing to materialize a {0}x{0} rotation",
                self.d
            )));
        }
        let s = 1.0 / (self.d as f64).sqrt();
        let mut data = Vec::with_capacity(self.d * self.d);
        for i in 0..self.d {
            data.extend((0..self.d).map(|j| self.sign(i, j) as f64 * s));
        }
        Ok(Matrix::from_parts(self.d, self.d, data))
    }
}

/// `out_v = Σ_u x_u · sign(u, v)`, costing `len − 1` operations per output.
fn signed_product(
    x: &[f64],
    out: &mut [f64],
    sign: impl Fn(usize, usize) -> i8,
    tally: &mut impl Tally,
) {
    let n = x.len();
    for (v, y) in out.iter_mut().enumerate() {
        let mut acc = x[0] * sign(0, v) as f64;
        for (u, &xu) in x.iter().enumerate().skip(1) {
            if sign(u, v) > 0 {
                acc += xu;
            } else {
                acc -= xu;
            }
        }
        *y = acc;
    }
    tally.add((n * (n - 1)) as u64);
}

/// `x · R_d` for `R_d = H_{2^{k′}} ⊗ H_{4t}` with a bundled base matrix.
pub fn rotate_nonpo2(row: &[f64], fact: &DimensionFactorization) -> Result<Vec<f64>> {
    if row.len() != fact.d {
        return dim_err(format!(
            "row has length {}, factorization is for d = {}",
            row.len(),
            fact.d
        ));
    }
    let (stages, four_t) = fact.lifted()?;
    HadamardTransform::lifted(stages, &build_any(four_t)?)?.apply(row)
}

/// `R̃ = I_n ⊗ R`, one transform of order `b` per block.
#[derive(Clone, Debug)]
pub struct BlockRotation {
    transform: HadamardTransform,
    n: usize,
}

impl BlockRotation {
    pub fn new(transform: HadamardTransform, n: usize) -> Result<Self> {
        if n == 0 {
            return dim_err("block rotation needs at least one block");
        }
        Ok(BlockRotation { transform, n })
    }

    /// Block size `b` with Sylvester blocks when `b` is a power of 2.
    pub fn for_blocks(d: usize, b: usize) -> Result<Self> {
        let n = block_count(d, b)?;
        Self::new(HadamardTransform::for_dimension(b)?, n)
    }

    pub fn block_size(&self) -> usize {
        self.transform.dim()
    }

    pub fn blocks(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.n * self.transform.dim()
    }

    pub fn transform(&self) -> &HadamardTransform {
        &self.transform
    }

    pub fn transpose(&self) -> Self {
        BlockRotation {
            transform: self.transform.transpose(),
            n: self.n,
        }
    }

    pub fn apply_in_place(&self, row: &mut [f64]) -> Result<()> {
        self.apply_counted(row, Schedule::Fast, &mut NoTally)
    }

    pub fn apply_counted(
        &self,
        row: &mut [f64],
        schedule: Schedule,
        tally: &mut impl Tally,
    ) -> Result<()> {
        if row.len() != self.dim() {
            return dim_err(format!(
                "row has length {}, rotation has dimension {}",
                row.len(),
                self.dim()
            ));
        }
        for block in row.chunks_exact_mut(self.block_size()) {
            self.transform.apply_counted(block, schedule, tally)?;
        }
        Ok(())
    }

    /// Dense `I_n ⊗ R` for small dimensions.
    pub fn dense(&self) -> Result<Matrix> {
        let d = self.dim();
        if d > MAX_MATERIALIZED {
            return Err(Error::TooLarge(format!("refusing to materialize {d}x{d}")));
        }
        let r = self.transform.dense()?;
        let b = self.block_size();
        let mut data = vec![0.0; d * d];
        for j in 0..self.n {
            for u in 0..b {
                for v in 0..b {
                    data[(j * b + u) * d + j * b + v] = r.get(u, v);
                }
            }
        }
        Ok(Matrix::from_parts(d, d, data))
    }
}

/// Rotates every row of `set` by `R̃`.
pub fn rotate_block(set: &ActivationSet, rot: &BlockRotation) -> Result<ActivationSet> {
    if set.cols() != rot.dim() {
        return dim_err(format!(
            "activation dimension {} does not match rotation dimension {}",
            set.cols(),
            rot.dim()
        ));
    }
    let mut data = set.as_slice().to_vec();
    data.par_chunks_mut(set.cols())
        .try_for_each(|row| rot.apply_in_place(row))?;
    Ok(Matrix::from_parts(set.rows(), set.cols(), data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hadamard::opcount::{count_ops, OpMethod};
    use crate::hadamard::{build_hadamard, Construction};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_row(d: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    fn dense_oracle(row: &[f64], r: &Matrix) -> Vec<f64> {
        (0..r.cols())
            .map(|j| row.iter().enumerate().map(|(i, x)| x * r.get(i, j)).sum())
            .collect()
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        let scale = b.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * scale)
    }

    #[test]
    fn fwht_small_examples() {
        assert_eq!(fwht(&[1.0, 0.0, 0.0, 0.0]).unwrap(), vec![0.5; 4]);
        assert_eq!(fwht(&[1.0; 4]).unwrap(), vec![2.0, 0.0, 0.0, 0.0]);
        assert!(fwht(&[1.0; 6]).is_err());
    }

    #[test]
    fn fwht_matches_dense_1024() {
        let row = random_row(1024, 3);
        let r = build_hadamard(1024, Construction::Sylvester)
            .unwrap()
            .to_matrix();
        assert!(close(&fwht(&row).unwrap(), &dense_oracle(&row, &r), 1e-9));
    }

    #[test]
    fn nonpo2_28_matches_paley() {
        let row = random_row(28, 5);
        let fact = DimensionFactorization::of(28).unwrap();
        let r = build_hadamard(28, Construction::Paley1)
            .unwrap()
            .to_matrix();
        assert!(close(
            &rotate_nonpo2(&row, &fact).unwrap(),
            &dense_oracle(&row, &r),
            1e-9
        ));
    }

    #[test]
    fn nonpo2_56_basis_vector() {
        let mut e = vec![0.0; 56];
        e[0] = 1.0;
        let t = HadamardTransform::for_dimension(56).unwrap();
        let out = t.apply(&e).unwrap();
        let r = t.dense().unwrap();
        assert!(close(&out, &dense_oracle(&e, &r), 1e-12));
        for y in &out {
            assert!((y.abs() - 1.0 / 56f64.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn lifted_dense_is_orthogonal() {
        for d in [12usize, 24, 40, 48, 76, 152] {
            let r = HadamardTransform::for_dimension(d)
                .unwrap()
                .dense()
                .unwrap();
            let g = r.matmul(&r.transpose()).unwrap();
            for i in 0..d {
                for j in 0..d {
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((g.get(i, j) - want).abs() < 1e-10, "d = {d}");
                }
            }
        }
    }

    #[test]
    fn block_rotation_example() {
        let set = Matrix::from_rows(&[[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0]]).unwrap();
        let rot = BlockRotation::for_blocks(8, 4).unwrap();
        let out = rotate_block(&set, &rot).unwrap();
        assert_eq!(out.row(0), &[0.5, 0.5, 0.5, 0.5, 0.5, -0.5, -0.5, 0.5]);
        let dense = rot.dense().unwrap();
        assert!(close(out.row(0), &dense_oracle(set.row(0), &dense), 1e-15));
    }

    #[test]
    fn transpose_inverts() {
        for d in [16usize, 28, 112] {
            let t = HadamardTransform::for_dimension(d).unwrap();
            let row = random_row(d, d as u64);
            let back = t.transpose().apply(&t.apply(&row).unwrap()).unwrap();
            assert!(close(&back, &row, 1e-12), "d = {d}");
        }
    }

    #[test]
    fn instrumented_counts_match_closed_forms() {
        for d in [28usize, 56, 112, 3072, 14336] {
            let t = HadamardTransform::for_dimension(d).unwrap();
            let mut row = random_row(d, 1);
            let mut fast = OpCounter::default();
            t.apply_counted(&mut row, Schedule::Fast, &mut fast)
                .unwrap();
            assert_eq!(
                fast.ops,
                count_ops(d, OpMethod::Optimized)
                    .unwrap()
                    .additions_subtractions
            );
            let mut bm = OpCounter::default();
            t.apply_counted(&mut row, Schedule::ButterflyPlusMatmul, &mut bm)
                .unwrap();
            assert_eq!(
                bm.ops,
                count_ops(d, OpMethod::ButterflyPlusMatmul)
                    .unwrap()
                    .additions_subtractions
            );
        }
        let t = HadamardTransform::for_dimension(56).unwrap();
        let mut dense = OpCounter::default();
        t.apply_counted(&mut random_row(56, 2), Schedule::Dense, &mut dense)
            .unwrap();
        assert_eq!(dense.ops, 56 * 55);
        let rot = BlockRotation::for_blocks(8192, 128).unwrap();
        let mut c = OpCounter::default();
        rot.apply_counted(&mut random_row(8192, 4), Schedule::Fast, &mut c)
            .unwrap();
        assert_eq!(
            c.ops,
            count_ops(8192, OpMethod::Block(128))
                .unwrap()
                .additions_subtractions
        );
    }

    #[test]
    fn twenty_eight_point_count() {
        let t = HadamardTransform::for_dimension(28).unwrap();
        let mut c = OpCounter::default();
        t.apply_counted(&mut random_row(28, 9), Schedule::Fast, &mut c)
            .unwrap();
        assert_eq!(c.ops, 252);
    }

    #[test]
    fn dimension_mismatch() {
        let rot = BlockRotation::for_blocks(16, 4).unwrap();
        let set = Matrix::zeros(2, 12).unwrap();
        assert!(matches!(rotate_block(&set, &rot), Err(Error::Dimension(_))));
    }

    proptest! {
        #[test]
        fn fwht_is_an_involution(p in 0u32..9, seed in any::<u64>()) {
            let row = random_row(1 << p, seed);
            let twice = fwht(&fwht(&row).unwrap()).unwrap();
            prop_assert!(close(&twice, &row, 1e-12));
        }

        #[test]
        fn rotations_preserve_energy(idx in 0usize..6, seed in any::<u64>()) {
            let (d, b): (usize, usize) = [(64, 8), (64, 64), (96, 32), (112, 28), (24, 12), (40, 20)][idx];
            let rot = if b.is_power_of_two() {
                BlockRotation::for_blocks(d, b).unwrap()
            } else {
                BlockRotation::new(HadamardTransform::for_dimension(b).unwrap(), d / b).unwrap()
            };
            let row = random_row(d, seed);
            let mut out = row.clone();
            rot.apply_in_place(&mut out).unwrap();
            let e0: f64 = row.iter().map(|x| x * x).sum();
            let e1: f64 = out.iter().map(|x| x * x).sum();
            prop_assert!((e0 - e1).abs() <= 1e-10 * e0);
        }

        #[test]
        fn full_block_equals_full_transform(idx in 0usize..4, seed in any::<u64>()) {
            let d = [32usize, 28, 56, 96][idx];
            let row = random_row(d, seed);
            let t = HadamardTransform::for_dimension(d).unwrap();
            let rot = BlockRotation::new(t.clone(), 1).unwrap();
            let mut via_block = row.clone();
            rot.apply_in_place(&mut via_block).unwrap();
            let direct = if d.is_power_of_two() {
                fwht(&row).unwrap()
            } else {
                rotate_nonpo2(&row, &DimensionFactorization::of(d).unwrap()).unwrap()
            };
            prop_assert!(close(&via_block, &direct, 1e-12));
        }

        #[test]
        fn fast_matches_reference(idx in 0usize..5, seed in any::<u64>()) {
            let d = [12usize, 20, 48, 152, 304][idx];
            let t = HadamardTransform::for_dimension(d).unwrap();
            let row = random_row(d, seed);
            prop_assert!(close(&t.apply(&row).unwrap(), &t.reference_apply(&row).unwrap(), 1e-12));
        }
    }
}
