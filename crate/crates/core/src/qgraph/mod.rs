//! A toy SwiGLU feed-forward block with merged permutations, merged
//! residual rotations and an online block rotation ahead of the down
//! projection.

pub mod io;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, Normal};
use serde::{Deserialize, Serialize};

use crate::analysis::{check_bounds, BoundReport};
use crate::data::{linf, Matrix};
use crate::error::{dim_err, Error, Result};
use crate::hadamard::{rotate_block, BlockRotation, HadamardTransform};
use crate::permutation::{apply_permutation, build_permutation, Permutation, Strategy};
use crate::quant::{fake_quantize, QuantizerConfig};
use crate::seed;

/// `y = (Swish(x · gate) ⊙ (x · up)) · down`.
#[derive(Clone, Debug, PartialEq)]
pub struct FfnWeights {
    gate: Matrix,
    up: Matrix,
    down: Matrix,
}

impl FfnWeights {
    pub fn new(gate: Matrix, up: Matrix, down: Matrix) -> Result<Self> {
        let (dm, dff) = (gate.rows(), gate.cols());
        if up.rows() != dm || up.cols() != dff || down.rows() != dff || down.cols() != dm {
            return dim_err(format!(
                "inconsistent FFN shapes: gate {}x{}, up {}x{}, down {}x{}",
                gate.rows(),
                gate.cols(),
                up.rows(),
                up.cols(),
                down.rows(),
                down.cols()
            ));
        }
        Ok(FfnWeights { gate, up, down })
    }

    /// Gaussian weights with variance `1/fan_in`.
    pub fn random(d_model: usize, d_ff: usize, seed: u64) -> Result<Self> {
        let draw = |rows: usize, cols: usize, stream: u64| -> Result<Matrix> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(seed, stream));
            let normal = Normal::new(0.0, 1.0 / (rows as f64).sqrt())
                .map_err(|e| Error::InvalidParams(e.to_string()))?;
            Matrix::new(
                rows,
                cols,
                (0..rows * cols).map(|_| normal.sample(&mut rng)).collect(),
            )
        };
        Self::new(
            draw(d_model, d_ff, 0)?,
            draw(d_model, d_ff, 1)?,
            draw(d_ff, d_model, 2)?,
        )
    }

    pub fn gate(&self) -> &Matrix {
        &self.gate
    }

    pub fn up(&self) -> &Matrix {
        &self.up
    }

    pub fn down(&self) -> &Matrix {
        &self.down
    }

    pub fn d_model(&self) -> usize {
        self.gate.rows()
    }

    pub fn d_ff(&self) -> usize {
        self.gate.cols()
    }
}

pub fn swish(x: f64) -> f64 {
    x / (1.0 + (-x).exp())
}

/// `Φ(A, B) = Swish(A) ⊙ B`, the permutation-equivariant region.
pub fn swiglu(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.rows() != b.rows() || a.cols() != b.cols() {
        return dim_err("swiglu operands differ in shape");
    }
    let data = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(&g, &u)| swish(g) * u)
        .collect();
    Ok(Matrix::from_parts(a.rows(), a.cols(), data))
}

fn check_input(x: &Matrix, w: &FfnWeights) -> Result<()> {
    if x.cols() != w.d_model() {
        return dim_err(format!(
            "input width {} does not match d_model = {}",
            x.cols(),
            w.d_model()
        ));
    }
    Ok(())
}

/// Inputs of the down projection, `Swish(x · gate) ⊙ (x · up)`.
pub fn down_inputs(x: &Matrix, w: &FfnWeights) -> Result<Matrix> {
    check_input(x, w)?;
    swiglu(&x.matmul(&w.gate)?, &x.matmul(&w.up)?)
}

pub fn ffn_forward(x: &Matrix, w: &FfnWeights) -> Result<Matrix> {
    down_inputs(x, w)?.matmul(&w.down)
}

fn permute_rows(m: &Matrix, perm: &Permutation) -> Matrix {
    let mut data = Vec::with_capacity(m.rows() * m.cols());
    for &p in perm.pi() {
        data.extend_from_slice(m.row(p));
    }
    Matrix::from_parts(m.rows(), m.cols(), data)
}

/// `gate · P`, `up · P` and `Pᵀ · down`.
pub fn merge_permutation(w: &FfnWeights, p: &Permutation) -> Result<FfnWeights> {
    if p.dim() != w.d_ff() {
        return dim_err(format!(
            "permutation over {} coordinates, d_ff = {}",
            p.dim(),
            w.d_ff()
        ));
    }
    Ok(FfnWeights {
        gate: apply_permutation(&w.gate, p)?,
        up: apply_permutation(&w.up, p)?,
        down: permute_rows(&w.down, p),
    })
}

/// Where a rotation is folded.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MergeSite {
    /// The FFN receives `x · R`; `Rᵀ` is folded into `gate` and `up`.
    R1,
    /// The FFN emits `y · R`; `R` is folded into `down`.
    R2,
    /// Between the Swish product and `down`. Not rotation-equivariant.
    R3,
}

/// `Rᵀ · m`, computed as `(mᵀ · R)ᵀ`.
fn rotate_rows_side(m: &Matrix, rot: &BlockRotation) -> Result<Matrix> {
    Ok(rotate_block(&m.transpose(), rot)?.transpose())
}

pub fn merge_rotation(w: &FfnWeights, rot: &BlockRotation, site: MergeSite) -> Result<FfnWeights> {
    if rot.dim() != w.d_model() {
        return dim_err(format!(
            "rotation dimension {} does not match d_model = {}",
            rot.dim(),
            w.d_model()
        ));
    }
    match site {
        MergeSite::R1 => Ok(FfnWeights {
            gate: rotate_rows_side(&w.gate, rot)?,
            up: rotate_rows_side(&w.up, rot)?,
            down: w.down.clone(),
        }),
        MergeSite::R2 => Ok(FfnWeights {
            down: rotate_block(&w.down, rot)?,
            ..w.clone()
        }),
        MergeSite::R3 => Err(Error::NotRotationEquivariant(
            "the Swish product between up/gate and down does not commute with rotations".into(),
        )),
    }
}

/// `R̃ᵀ · down`, so that an online `R̃` on the down inputs is undone.
fn fold_online_inverse(w: &FfnWeights, rot: &BlockRotation) -> Result<FfnWeights> {
    Ok(FfnWeights {
        down: rotate_rows_side(&w.down, rot)?,
        ..w.clone()
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ResidualRotation {
    None,
    MergedFullVector,
    MergedBlock { block_size: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OnlineRotation {
    None,
    OnlineBlock { block_size: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphConfig {
    pub r1_r2: ResidualRotation,
    pub r3: OnlineRotation,
    /// Strategy for the down-projection input permutation, calibrated on
    /// the pipeline's own inputs.
    pub permutation: Strategy,
    /// Block size used for permutation calibration when `r3` is `None`.
    #[serde(default)]
    pub permutation_block: Option<usize>,
    pub weight_quant: Option<QuantizerConfig>,
    pub act_quant: Option<QuantizerConfig>,
}

impl Default for GraphConfig {
    fn default() -> Self {
        GraphConfig {
            r1_r2: ResidualRotation::None,
            r3: OnlineRotation::None,
            permutation: Strategy::Identity,
            permutation_block: None,
            weight_quant: None,
            act_quant: None,
        }
    }
}

impl GraphConfig {
    /// Online block rotation with the given permutation strategy, INT`bits`
    /// per-channel weights and per-token activations.
    pub fn quantized(block_size: usize, permutation: Strategy, bits: u8) -> Self {
        GraphConfig {
            r1_r2: ResidualRotation::None,
            r3: OnlineRotation::OnlineBlock { block_size },
            permutation,
            permutation_block: None,
            weight_quant: Some(QuantizerConfig::int_symmetric(bits).per_channel()),
            act_quant: Some(QuantizerConfig::int_symmetric(bits)),
        }
    }

    fn block_size(&self) -> Option<usize> {
        match self.r3 {
            OnlineRotation::OnlineBlock { block_size } => Some(block_size),
            OnlineRotation::None => self.permutation_block,
        }
    }
}

/// One node of the deployed inference graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum GraphOp {
    QuantizeActivations,
    MatMul { weight: &'static str },
    Swish,
    Multiply,
    OnlineBlockRotation { block_size: usize },
}

/// The operation sequence executed at inference time. Merged permutations
/// and merged rotations add no nodes.
pub fn deployed_graph(cfg: &GraphConfig) -> Vec<GraphOp> {
    let mut ops = Vec::new();
    let q = cfg.act_quant.is_some();
    if q {
        ops.push(GraphOp::QuantizeActivations);
    }
    ops.extend([
        GraphOp::MatMul { weight: "gate" },
        GraphOp::MatMul { weight: "up" },
        GraphOp::Swish,
        GraphOp::Multiply,
    ]);
    if let OnlineRotation::OnlineBlock { block_size } = cfg.r3 {
        ops.push(GraphOp::OnlineBlockRotation { block_size });
    }
    if q {
        ops.push(GraphOp::QuantizeActivations);
    }
    ops.push(GraphOp::MatMul { weight: "down" });
    ops
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StageStats {
    pub stage: &'static str,
    pub mean_range: f64,
    pub max_range: f64,
}

fn stage(name: &'static str, m: &Matrix) -> StageStats {
    let ranges: Vec<f64> = m.iter_rows().map(linf).collect();
    StageStats {
        stage: name,
        mean_range: ranges.iter().sum::<f64>() / ranges.len() as f64,
        max_range: ranges.iter().copied().fold(0.0, f64::max),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PipelineReport {
    pub stages: Vec<StageStats>,
    /// Block bound at the input of the online rotation.
    pub bound: Option<BoundReport>,
    /// Mean squared deviation from the full-precision reference.
    pub output_mse: f64,
    /// `‖y − y_ref‖_F / ‖y_ref‖_F`.
    pub relative_error: f64,
    pub permutation: String,
    pub graph: Vec<GraphOp>,
}

#[derive(Debug)]
pub struct PipelineOutput {
    pub y: Matrix,
    pub reference: Matrix,
    pub report: PipelineReport,
}

fn residual_rotation(cfg: &GraphConfig, d_model: usize) -> Result<Option<BlockRotation>> {
    match cfg.r1_r2 {
        ResidualRotation::None => Ok(None),
        ResidualRotation::MergedFullVector => Ok(Some(BlockRotation::new(
            HadamardTransform::for_dimension(d_model)?,
            1,
        )?)),
        ResidualRotation::MergedBlock { block_size } => {
            Ok(Some(BlockRotation::for_blocks(d_model, block_size)?))
        }
    }
}

/// Full-precision weights with every offline transform folded in, and the
/// rotations still applied at run time.
pub struct Deployment {
    pub weights: FfnWeights,
    /// Residual rotation; inputs arrive as `x · R` and outputs leave as `y · R`.
    pub r1: Option<BlockRotation>,
    /// Online rotation of the down-projection inputs.
    pub r3: Option<BlockRotation>,
}

pub fn deploy(w: &FfnWeights, cfg: &GraphConfig, perm: &Permutation) -> Result<Deployment> {
    let r1 = residual_rotation(cfg, w.d_model()).map_err(|e| e.in_stage("r1_r2"))?;
    let mut merged = w.clone();
    if let Some(rot) = &r1 {
        merged = merge_rotation(&merged, rot, MergeSite::R1)
            .and_then(|m| merge_rotation(&m, rot, MergeSite::R2))
            .map_err(|e| e.in_stage("r1_r2"))?;
    }
    if !perm.is_identity() {
        merged = merge_permutation(&merged, perm).map_err(|e| e.in_stage("permutation"))?;
    }
    let r3 = match cfg.r3 {
        OnlineRotation::None => None,
        OnlineRotation::OnlineBlock { block_size } => {
            let rot =
                BlockRotation::for_blocks(w.d_ff(), block_size).map_err(|e| e.in_stage("r3"))?;
            merged = fold_online_inverse(&merged, &rot).map_err(|e| e.in_stage("r3"))?;
            Some(rot)
        }
    };
    Ok(Deployment {
        weights: merged,
        r1,
        r3,
    })
}

/// The permutation `run_pipeline` calibrates for `cfg` on inputs `x`.
pub fn calibrate_permutation(x: &Matrix, w: &FfnWeights, cfg: &GraphConfig) -> Result<Permutation> {
    match (cfg.permutation, cfg.block_size()) {
        (Strategy::Identity, b) => Permutation::identity(w.d_ff(), b.unwrap_or(w.d_ff()))
            .map_err(|e| e.in_stage("permutation")),
        (strategy, Some(b)) => {
            let cal = down_inputs(x, w).map_err(|e| e.in_stage("calibration"))?;
            build_permutation(&cal, b, strategy).map_err(|e| e.in_stage("permutation"))
        }
        (_, None) => Err(Error::InvalidParams(
            "a non-identity permutation needs a block size".into(),
        )
        .in_stage("permutation")),
    }
}

/// Calibrates the configured permutation on the down-projection inputs of
/// `x`, then runs [`run_pipeline_with`].
pub fn run_pipeline(x: &Matrix, w: &FfnWeights, cfg: &GraphConfig) -> Result<PipelineOutput> {
    let perm = calibrate_permutation(x, w, cfg)?;
    run_pipeline_with(x, w, cfg, &perm)
}

/// Runs the deployed graph with `perm` merged into the weights.
pub fn run_pipeline_with(
    x: &Matrix,
    w: &FfnWeights,
    cfg: &GraphConfig,
    perm: &Permutation,
) -> Result<PipelineOutput> {
    check_input(x, w).map_err(|e| e.in_stage("input"))?;
    let reference = ffn_forward(x, w).map_err(|e| e.in_stage("reference"))?;

    let Deployment {
        weights: merged,
        r1,
        r3,
    } = deploy(w, cfg, perm)?;
    let mut x_in = x.clone();
    if let Some(rot) = &r1 {
        x_in = rotate_block(x, rot).map_err(|e| e.in_stage("r1_r2"))?;
    }
    let merged = match &cfg.weight_quant {
        Some(wq) => {
            let q = |m: &Matrix| fake_quantize(m, wq).map_err(|e| e.in_stage("weight_quant"));
            FfnWeights {
                gate: q(&merged.gate)?,
                up: q(&merged.up)?,
                down: q(&merged.down)?,
            }
        }
        None => merged,
    };

    let act = |m: Matrix, name: &'static str| -> Result<Matrix> {
        match &cfg.act_quant {
            Some(aq) => fake_quantize(&m, aq).map_err(|e| e.in_stage(name)),
            None => Ok(m),
        }
    };
    let mut stages = vec![stage("input", &x_in)];
    let a = act(x_in, "input_quant")?;
    let h = down_inputs(&a, &merged).map_err(|e| e.in_stage("gate_up"))?;
    stages.push(stage("down_input", &h));
    let (h, bound) = match &r3 {
        Some(rot) => {
            let bound = check_bounds(&h, rot).ok();
            let rotated = rotate_block(&h, rot).map_err(|e| e.in_stage("r3"))?;
            stages.push(stage("down_input_rotated", &rotated));
            (rotated, bound)
        }
        None => (h, None),
    };
    let h = act(h, "down_input_quant")?;
    let mut y = h.matmul(&merged.down).map_err(|e| e.in_stage("down"))?;
    if let Some(rot) = &r1 {
        y = rotate_block(&y, &rot.transpose()).map_err(|e| e.in_stage("r1_r2"))?;
    }
    stages.push(stage("output", &y));

    let (mut se, mut norm) = (0.0, 0.0);
    for (a, b) in y.as_slice().iter().zip(reference.as_slice()) {
        se += (a - b) * (a - b);
        norm += b * b;
    }
    let report = PipelineReport {
        stages,
        bound,
        output_mse: se / y.as_slice().len() as f64,
        relative_error: if norm > 0.0 {
            (se / norm).sqrt()
        } else {
            se.sqrt()
        },
        permutation: perm.strategy().to_string(),
        graph: deployed_graph(cfg),
    };
    Ok(PipelineOutput {
        y,
        reference,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate, SyntheticSpec};
    use crate::permutation::{massdiff, random_permutation};

    fn max_rel(a: &Matrix, b: &Matrix) -> f64 {
        let scale = b.as_slice().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        a.as_slice()
            .iter()
            .zip(b.as_slice())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
            / scale
    }

    fn inputs(m: usize, d: usize, seed: u64) -> Matrix {
        generate(&SyntheticSpec::gaussian(0.0, 1.0, seed), m, d).unwrap()
    }

    #[test]
    fn zero_input_gives_zero_output() {
        let w = FfnWeights::random(16, 32, 1).unwrap();
        let y = ffn_forward(&Matrix::zeros(3, 16).unwrap(), &w).unwrap();
        assert!(y.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn hand_checked_two_by_two() {
        let gate = Matrix::from_rows(&[[50.0, 0.0], [0.0, 50.0]]).unwrap();
        let up = Matrix::from_rows(&[[1.0, 0.0], [0.0, 2.0]]).unwrap();
        let down = Matrix::from_rows(&[[1.0, 1.0], [0.0, 1.0]]).unwrap();
        let w = FfnWeights::new(gate, up, down).unwrap();
        let x = Matrix::from_rows(&[[1.0, 1.0]]).unwrap();
        // h = (Swish(50)·1, Swish(50)·2) ≈ (50, 100); y = (h0, h0 + h1)
        let s = 50.0 / (1.0 + (-50f64).exp());
        let y = ffn_forward(&x, &w).unwrap();
        assert!((y.get(0, 0) - s).abs() < 1e-12);
        assert!((y.get(0, 1) - 3.0 * s).abs() < 1e-12);
    }

    #[test]
    fn bilinear_in_up() {
        let w = FfnWeights::random(8, 16, 2).unwrap();
        let doubled = FfnWeights::new(
            w.gate().clone(),
            w.up()
                .map_rows(|r, o| o.iter_mut().zip(r).for_each(|(a, b)| *a = 2.0 * b)),
            w.down().clone(),
        )
        .unwrap();
        let x = inputs(4, 8, 3);
        let y1 = ffn_forward(&x, &w).unwrap();
        let y2 = ffn_forward(&x, &doubled).unwrap();
        for (a, b) in y1.as_slice().iter().zip(y2.as_slice()) {
            assert!((2.0 * a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn swiglu_is_permutation_equivariant() {
        let a = inputs(5, 32, 4);
        let b = inputs(5, 32, 5);
        let p = random_permutation(32, 4, 6).unwrap();
        let lhs = swiglu(
            &apply_permutation(&a, &p).unwrap(),
            &apply_permutation(&b, &p).unwrap(),
        )
        .unwrap();
        let rhs = apply_permutation(&swiglu(&a, &b).unwrap(), &p).unwrap();
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn merged_permutation_preserves_function() {
        let w = FfnWeights::random(16, 32, 7).unwrap();
        let x = inputs(32, 16, 8);
        let p = random_permutation(32, 8, 9).unwrap();
        let merged = merge_permutation(&w, &p).unwrap();
        assert!(
            max_rel(
                &ffn_forward(&x, &merged).unwrap(),
                &ffn_forward(&x, &w).unwrap()
            ) <= 1e-6
        );
        let explicit = apply_permutation(&down_inputs(&x, &w).unwrap(), &p).unwrap();
        assert_eq!(down_inputs(&x, &merged).unwrap(), explicit);
        let id = Permutation::identity(32, 8).unwrap();
        assert_eq!(merge_permutation(&w, &id).unwrap(), w);
        assert_eq!(merge_permutation(&merged, &p.inverse()).unwrap(), w);
    }

    #[test]
    fn merged_rotations_preserve_function() {
        let w = FfnWeights::random(16, 32, 10).unwrap();
        let x = inputs(16, 16, 11);
        let y = ffn_forward(&x, &w).unwrap();
        for rot in [
            BlockRotation::for_blocks(16, 16).unwrap(),
            BlockRotation::for_blocks(16, 4).unwrap(),
        ] {
            let m1 = merge_rotation(&w, &rot, MergeSite::R1).unwrap();
            let xr = rotate_block(&x, &rot).unwrap();
            assert!(max_rel(&ffn_forward(&xr, &m1).unwrap(), &y) <= 1e-6);
            let m2 = merge_rotation(&w, &rot, MergeSite::R2).unwrap();
            let yr = rotate_block(&y, &rot).unwrap();
            assert!(max_rel(&ffn_forward(&x, &m2).unwrap(), &yr) <= 1e-6);
            let back = merge_rotation(&m1, &rot.transpose(), MergeSite::R1).unwrap();
            assert!(max_rel(&ffn_forward(&x, &back).unwrap(), &y) <= 1e-6);
        }
    }

    #[test]
    fn r3_merge_is_rejected() {
        let w = FfnWeights::random(16, 32, 1).unwrap();
        let rot = BlockRotation::for_blocks(16, 16).unwrap();
        let err = merge_rotation(&w, &rot, MergeSite::R3).unwrap_err();
        assert!(matches!(err, Error::NotRotationEquivariant(_)));
        assert!(err.to_string().contains("region not rotation-equivariant"));
    }

    #[test]
    fn default_pipeline_is_plain_forward() {
        let w = FfnWeights::random(16, 64, 3).unwrap();
        let x = inputs(8, 16, 4);
        let out = run_pipeline(&x, &w, &GraphConfig::default()).unwrap();
        assert_eq!(out.y, ffn_forward(&x, &w).unwrap());
        assert_eq!(out.report.output_mse, 0.0);
    }

    #[test]
    fn full_precision_with_permutation_and_rotation() {
        let w = FfnWeights::random(64, 256, 5).unwrap();
        let x = generate(&SyntheticSpec::heavy_tailed(6), 32, 64).unwrap();
        let cfg = GraphConfig {
            r1_r2: ResidualRotation::MergedFullVector,
            r3: OnlineRotation::OnlineBlock { block_size: 16 },
            permutation: Strategy::Massdiff,
            ..GraphConfig::default()
        };
        let out = run_pipeline(&x, &w, &cfg).unwrap();
        assert!(max_rel(&out.y, &out.reference) <= 1e-5);
        assert_eq!(out.report.bound.as_ref().unwrap().violations, 0);
        assert_eq!(out.report.permutation, "massdiff");
    }

    #[test]
    fn merged_permutation_keeps_graph_shape() {
        let base = GraphConfig::quantized(16, Strategy::Identity, 4);
        let mixed = GraphConfig::quantized(16, Strategy::Massdiff, 4);
        assert_eq!(deployed_graph(&base), deployed_graph(&mixed));
    }

    #[test]
    fn quantized_codes_follow_the_permutation() {
        let w = FfnWeights::random(16, 32, 12).unwrap();
        let x = inputs(8, 16, 13);
        let cal = down_inputs(&x, &w).unwrap();
        let p = massdiff(&cal, 8).unwrap();
        let aq = QuantizerConfig::int_symmetric(4);
        let merged_h = down_inputs(&x, &merge_permutation(&w, &p).unwrap()).unwrap();
        let explicit_h = apply_permutation(&cal, &p).unwrap();
        let a = crate::quant::quantize(&merged_h, &aq).unwrap();
        let b = crate::quant::quantize(&explicit_h, &aq).unwrap();
        assert_eq!(a.codes(), b.codes());
    }

    #[test]
    fn stage_errors_are_named() {
        let w = FfnWeights::random(16, 32, 1).unwrap();
        let x = inputs(4, 16, 2);
        let cfg = GraphConfig {
            r3: OnlineRotation::OnlineBlock { block_size: 5 },
            ..GraphConfig::default()
        };
        let err = run_pipeline(&x, &w, &cfg).unwrap_err();
        assert!(
            matches!(
                err,
                Error::Stage {
                    stage: "permutation",
                    ..
                }
            ),
            "{err}"
        );
        let id = Permutation::identity(32, 8).unwrap();
        let err = run_pipeline_with(&x, &w, &cfg, &id).unwrap_err();
        assert!(matches!(err, Error::Stage { stage: "r3", .. }), "{err}");
    }
}
