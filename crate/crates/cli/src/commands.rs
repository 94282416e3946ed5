use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Serialize;
use serde_json::json;

use mixquant_core::analysis::{
    check_bounds, check_corollary3, check_prop4, factor_pairs, figure5_statistic,
    rademacher_diagnostics, BoundReport,
};
use mixquant_core::data::{
    generate, load_activations, save_activations, Distribution, SyntheticSpec,
};
use mixquant_core::hadamard::opcount::{
    block_row, block_table, format_block_table, format_nonpo2_table, nonpo2_row, nonpo2_table,
    BlockRow, NonPo2Row,
};
use mixquant_core::hadamard::{rotate_block, BlockRotation, HadamardTransform};
use mixquant_core::permutation::io::save_permutation;
use mixquant_core::permutation::{
    build_permutation, evaluate_objective, Permutation, Strategy, ZigzagKey,
};
use mixquant_core::qgraph::io::{load_ffn, save_deployed, save_ffn};
use mixquant_core::qgraph::{calibrate_permutation, run_pipeline_with, FfnWeights, GraphConfig};
use mixquant_core::quant::{dequantize, save_quantized, Granularity, QuantizerConfig, ScaleSearch};
use mixquant_core::{seed, Error, Matrix};

use crate::manifest::Run;
use crate::{
    CalibrateArgs, CompareArgs, DistArg, Fig5Args, FormatArg, GenArgs, GenFfnArgs, GranularityArg,
    ImportArgs, OpcountArgs, PipelineArgs, QuantFormatArg, QuantizeArgs, RademacherArgs,
    RotateArgs, StrategyArg, TableArg, VerifyArgs,
};

pub enum Outcome {
    Clean,
    Violations(usize),
}

fn load(path: &Path, run: &mut Run) -> Result<Matrix> {
    run.input(path);
    load_activations(path).with_context(|| format!("reading {}", path.display()))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")
        .with_context(|| format!("writing {}", path.display()))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))
}

pub fn gen(a: GenArgs) -> Result<Outcome> {
    let mut run = Run::start("gen", &a)?;
    let data_seed = seed::derive(a.seed, 0);
    let mut spec = match a.dist {
        DistArg::Gaussian => SyntheticSpec::gaussian(a.loc, a.scale, data_seed),
        DistArg::Laplacian => SyntheticSpec::laplacian(a.loc, a.scale, data_seed),
        DistArg::StudentT => SyntheticSpec::new(
            Distribution::StudentT {
                location: a.loc,
                scale: a.scale,
                dof: a.dof,
            },
            data_seed,
        ),
        DistArg::SparseOutlier => {
            SyntheticSpec::sparse_outlier(a.count, a.magnitude, a.background, data_seed)
        }
        DistArg::HeavyTailed => SyntheticSpec::heavy_tailed(data_seed),
    };
    if let Some(s) = a.channel_spread {
        spec = spec.with_channel_spread(s);
    }
    run.seeds(json!({ "root": a.seed, "data": data_seed }));
    let set = generate(&spec, a.rows, a.cols)?;
    save_activations(&set, &a.out)?;
    run.output(&a.out);
    run.finish(&a.out)?;
    Ok(Outcome::Clean)
}

pub fn import(a: ImportArgs) -> Result<Outcome> {
    let mut run = Run::start("import", &a)?;
    run.input(&a.csv);
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(a.header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(&a.csv)
        .with_context(|| format!("reading {}", a.csv.display()))?;
    let mut data = Vec::new();
    let mut width = None;
    let mut rows = 0usize;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::Parse {
                line,
                msg: e.to_string(),
            }
        })?;
        let line = record.position().map_or(rows + 1, |p| p.line() as usize);
        match width {
            None => width = Some(record.len()),
            Some(w) if w != record.len() => {
                return Err(Error::Parse {
                    line,
                    msg: format!("expected {w} fields, found {}", record.len()),
                }
                .into())
            }
            Some(_) => {}
        }
        for (col, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                line,
                msg: format!("field {} is not a number: `{field}`", col + 1),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line,
                    msg: format!("field {} is not finite", col + 1),
                }
                .into());
            }
            data.push(v);
        }
        rows += 1;
    }
    let Some(cols) = width else {
        bail!("{} contains no rows", a.csv.display());
    };
    let set = Matrix::new(rows, cols, data)?;
    save_activations(&set, &a.out)?;
    run.output(&a.out);
    run.finish(&a.out)?;
    println!("imported {rows} x {cols}");
    Ok(Outcome::Clean)
}

fn block_csv(rows: &[BlockRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "model",
        "d",
        "k_log2",
        "t",
        "block_size",
        "ops",
        "percent_of_full",
        "full_ops",
    ])?;
    for r in rows {
        for c in &r.blocks {
            w.write_record([
                r.model.clone(),
                r.d.to_string(),
                r.k_log2.to_string(),
                r.t.to_string(),
                c.block.to_string(),
                c.ops.to_string(),
                c.percent_of_full.to_string(),
                r.full.to_string(),
            ])?;
        }
        w.write_record([
            r.model.clone(),
            r.d.to_string(),
            r.k_log2.to_string(),
            r.t.to_string(),
            "full".to_string(),
            r.full.to_string(),
            "100".to_string(),
            r.full.to_string(),
        ])?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

fn nonpo2_csv(rows: &[NonPo2Row]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "model",
        "d",
        "k_prime",
        "four_t",
        "matmul",
        "butterfly_matmul",
        "ours",
        "matmul_ratio",
        "butterfly_ratio",
    ])?;
    for r in rows {
        w.write_record([
            r.model.clone(),
            r.d.to_string(),
            r.k_prime.to_string(),
            r.four_t.to_string(),
            r.matmul.to_string(),
            r.butterfly_matmul.to_string(),
            r.optimized.to_string(),
            format!("{:.1}", r.matmul_ratio()),
            format!("{:.1}", r.butterfly_ratio()),
        ])?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

pub fn opcount(a: OpcountArgs) -> Result<Outcome> {
    let run = Run::start("opcount", &a)?;
    let csv = a.format == FormatArg::Csv;
    let text = match a.d {
        Some(d) => {
            let label = format!("d={d}");
            let sizes: Vec<usize> = a.b.into_iter().collect();
            let row = block_row(&label, d, &sizes)?;
            let mut out = if csv {
                block_csv(std::slice::from_ref(&row))?
            } else {
                format_block_table(std::slice::from_ref(&row))
            };
            if (a.full || a.b.is_none()) && !d.is_power_of_two() {
                let np = nonpo2_row(&label, d)?;
                out.push_str(&if csv {
                    nonpo2_csv(&[np])?
                } else {
                    format_nonpo2_table(&[np])
                });
            }
            out
        }
        None => {
            let mut out = String::new();
            if matches!(a.table, TableArg::Block | TableArg::All) {
                let t = block_table();
                out.push_str(&if csv {
                    block_csv(&t)?
                } else {
                    format_block_table(&t)
                });
            }
            if matches!(a.table, TableArg::All) && !csv {
                out.push('\n');
            }
            if matches!(a.table, TableArg::Nonpo2 | TableArg::All) {
                let t = nonpo2_table();
                out.push_str(&if csv {
                    nonpo2_csv(&t)?
                } else {
                    format_nonpo2_table(&t)
                });
            }
            out
        }
    };
    match &a.out {
        Some(path) => {
            fs::write(path, &text)?;
            let mut run = run;
            run.output(path);
            run.finish(path)?;
        }
        None => print!("{text}"),
    }
    Ok(Outcome::Clean)
}

fn strategy(arg: StrategyArg, root: u64) -> Strategy {
    match arg {
        StrategyArg::Identity => Strategy::Identity,
        StrategyArg::Random => Strategy::Random {
            seed: seed::derive(root, 0),
        },
        StrategyArg::Absmax => Strategy::Absmax,
        StrategyArg::Zigzag => Strategy::Zigzag {
            key: ZigzagKey::AverageMagnitude,
        },
        StrategyArg::ZigzagAbsmax => Strategy::Zigzag {
            key: ZigzagKey::Absmax,
        },
        StrategyArg::Massdiff => Strategy::Massdiff,
        StrategyArg::Optimal => Strategy::Optimal,
    }
}

pub fn calibrate(a: CalibrateArgs) -> Result<Outcome> {
    let mut run = Run::start("calibrate", &a)?;
    let cal = load(&a.input, &mut run)?;
    let s = strategy(a.strategy, a.seed);
    if let Strategy::Random { seed } = s {
        run.seeds(json!({ "root": a.seed, "permutation": seed }));
    }
    let perm = build_permutation(&cal, a.block_size, s)?;
    let objective = evaluate_objective(&cal, &perm)?;
    let baseline = evaluate_objective(&cal, &Permutation::identity(cal.cols(), a.block_size)?)?;
    save_permutation(&perm, &a.out)?;
    run.output(&a.out);
    let report = json!({
        "strategy": perm.strategy().to_string(),
        "block_size": a.block_size,
        "objective": objective,
        "identity_objective": baseline.expected_max_block_l1,
        "improvement": 1.0 - objective.expected_max_block_l1 / baseline.expected_max_block_l1,
    });
    println!("{}", serde_json::to_string_pretty(&report)?);
    run.finish(&a.out)?;
    Ok(Outcome::Clean)
}

#[derive(Serialize)]
struct VerifySummary {
    prop: u8,
    d: usize,
    block_size: Option<usize>,
    rows_checked: usize,
    zero_rows_skipped: usize,
    checks: usize,
    violations: usize,
    sufficient_rows: usize,
    sufficient_failures: usize,
    min_slack: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    trials: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_exceed_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tolerance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    cells_above_tolerance: Option<usize>,
}

fn bound_csv(path: &Path, rows: &[usize], rep: &BoundReport) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record([
        "row",
        "pre_range",
        "post_range",
        "bound_value",
        "slack",
        "satisfied",
        "sufficient",
    ])?;
    for (&i, r) in rows.iter().zip(&rep.rows) {
        w.write_record([
            i.to_string(),
            r.pre_range.to_string(),
            r.post_range.to_string(),
            r.bound_value.to_string(),
            r.slack.to_string(),
            r.satisfied.to_string(),
            r.sufficient.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn verify(a: VerifyArgs) -> Result<Outcome> {
    let mut run = Run::start("verify", &a)?;
    let set = load(&a.input, &mut run)?;
    let d = set.cols();
    if a.prop == 2 && a.b.is_none() {
        bail!("prop 2 needs --b");
    }
    if a.prop == 4 && (a.b.is_none() || a.epsilon.is_none() || a.trials.is_none()) {
        bail!("prop 4 needs --b, --epsilon and --trials");
    }
    if a.prop != 4 && (a.epsilon.is_some() || a.trials.is_some()) {
        bail!("--epsilon and --trials only apply to prop 4");
    }
    let nonzero: Vec<usize> = (0..set.rows())
        .filter(|&i| set.row(i).iter().any(|&v| v != 0.0))
        .collect();
    let kept = Matrix::new(
        nonzero.len(),
        d,
        nonzero
            .iter()
            .flat_map(|&i| set.row(i).iter().copied())
            .collect(),
    )?;
    let mut summary = VerifySummary {
        prop: a.prop,
        d,
        block_size: a.b,
        rows_checked: nonzero.len(),
        zero_rows_skipped: set.rows() - nonzero.len(),
        checks: 0,
        violations: 0,
        sufficient_rows: 0,
        sufficient_failures: 0,
        min_slack: f64::INFINITY,
        epsilon: None,
        trials: None,
        max_exceed_rate: None,
        tolerance: None,
        cells_above_tolerance: None,
    };
    match a.prop {
        1 | 2 => {
            let rot = match a.b {
                Some(b) if a.prop == 2 => BlockRotation::for_blocks(d, b)?,
                _ => BlockRotation::new(HadamardTransform::for_dimension(d)?, 1)?,
            };
            summary.block_size = Some(rot.block_size());
            let rep = check_bounds(&kept, &rot)?;
            summary.checks = rep.rows.len();
            summary.violations = rep.violations;
            summary.sufficient_rows = rep.sufficient_rows;
            summary.sufficient_failures = rep.sufficient_failures;
            summary.min_slack = rep
                .rows
                .iter()
                .map(|r| r.slack)
                .fold(f64::INFINITY, f64::min);
            if let Some(path) = &a.csv {
                bound_csv(path, &nonzero, &rep)?;
            }
        }
        3 => {
            let pairs: Vec<(usize, usize)> = factor_pairs(d)
                .into_iter()
                .filter(|&(bp, k)| a.b.is_none_or(|b| bp * k == b))
                .collect();
            if pairs.is_empty() {
                bail!("no factor pairs for d = {d} and b = {:?}", a.b);
            }
            let mut w = a.csv.as_deref().map(csv_writer).transpose()?;
            if let Some(w) = &mut w {
                w.write_record([
                    "row",
                    "b_prime",
                    "k",
                    "z_b",
                    "z_b_prime",
                    "bound_value",
                    "satisfied",
                ])?;
            }
            for (&i, row) in nonzero.iter().zip(kept.iter_rows()) {
                for &(bp, k) in &pairs {
                    let c = check_corollary3(row, bp, k)?;
                    summary.checks += 1;
                    summary.violations += !c.satisfied as usize;
                    summary.min_slack = summary.min_slack.min(c.bound_value - c.z_b);
                    if let Some(w) = &mut w {
                        w.write_record([
                            i.to_string(),
                            bp.to_string(),
                            k.to_string(),
                            c.z_b.to_string(),
                            c.z_b_prime.to_string(),
                            c.bound_value.to_string(),
                            c.satisfied.to_string(),
                        ])?;
                    }
                }
            }
            if let Some(mut w) = w {
                w.flush()?;
            }
        }
        _ => {
            let (b, eps, trials) = (a.b.unwrap(), a.epsilon.unwrap(), a.trials.unwrap());
            let rot = BlockRotation::for_blocks(d, b)?;
            let mut w = a.csv.as_deref().map(csv_writer).transpose()?;
            if let Some(w) = &mut w {
                w.write_record([
                    "row",
                    "epsilon",
                    "trials",
                    "bound_value",
                    "exceed_rate",
                    "block_bound_value",
                    "block_exceed_rate",
                    "tolerance",
                    "within_tolerance",
                ])?;
            }
            let mut seeds = Vec::new();
            let (mut worst, mut above, mut tol) = (0.0f64, 0usize, 0.0);
            for (&i, row) in nonzero.iter().zip(kept.iter_rows()).take(a.max_rows) {
                let s = seed::derive(a.seed, i as u64);
                seeds.push(s);
                let r = check_prop4(row, &rot, eps, trials, s)?;
                summary.checks += 1;
                worst = worst.max(r.exceed_rate).max(r.block_exceed_rate);
                above += !r.within_tolerance as usize;
                tol = r.tolerance;
                if let Some(w) = &mut w {
                    w.write_record([
                        i.to_string(),
                        eps.to_string(),
                        trials.to_string(),
                        r.bound_value.to_string(),
                        r.exceed_rate.to_string(),
                        r.block_bound_value.to_string(),
                        r.block_exceed_rate.to_string(),
                        r.tolerance.to_string(),
                        r.within_tolerance.to_string(),
                    ])?;
                }
            }
            if let Some(mut w) = w {
                w.flush()?;
            }
            run.seeds(json!({ "root": a.seed, "per_row": seeds }));
            summary.epsilon = Some(eps);
            summary.trials = Some(trials);
            summary.max_exceed_rate = Some(worst);
            summary.tolerance = Some(tol);
            summary.cells_above_tolerance = Some(above);
            summary.min_slack = f64::NAN;
        }
    }
    if !summary.min_slack.is_finite() {
        summary.min_slack = f64::NAN;
    }
    let text = serde_json::to_string_pretty(&summary)?;
    match &a.summary {
        Some(path) => fs::write(path, text + "\n")?,
        None => println!("{text}"),
    }
    if let Some(p) = &a.csv {
        run.output(p);
    }
    if let Some(p) = &a.summary {
        run.output(p);
    }
    if let Some(anchor) = a.summary.as_ref().or(a.csv.as_ref()) {
        run.finish(anchor)?;
    }
    let failures = summary.violations + summary.sufficient_failures;
    Ok(if failures > 0 {
        Outcome::Violations(failures)
    } else {
        Outcome::Clean
    })
}

pub fn gen_ffn(a: GenFfnArgs) -> Result<Outcome> {
    let mut run = Run::start("gen-ffn", &a)?;
    run.seeds(json!({
        "root": a.seed,
        "gate": seed::derive(a.seed, 0),
        "up": seed::derive(a.seed, 1),
        "down": seed::derive(a.seed, 2),
    }));
    let w = FfnWeights::random(a.d_model, a.d_ff, a.seed)?;
    save_ffn(&w, &a.out)?;
    run.output(&a.out);
    run.finish(&a.out)?;
    Ok(Outcome::Clean)
}

fn load_weights(dir: &Path, run: &mut Run) -> Result<FfnWeights> {
    run.input(dir);
    load_ffn(dir).with_context(|| format!("reading weights from {}", dir.display()))
}

pub fn pipeline(a: PipelineArgs) -> Result<Outcome> {
    let mut run = Run::start("pipeline", &a)?;
    let w = load_weights(&a.weights, &mut run)?;
    let x = load(&a.input, &mut run)?;
    let cfg: GraphConfig = match &a.config {
        Some(p) => {
            run.input(p);
            serde_json::from_str(&fs::read_to_string(p)?)
                .with_context(|| format!("parsing config {}", p.display()))?
        }
        None => GraphConfig::default(),
    };
    if x.cols() != w.d_model() {
        bail!(
            "input has {} columns but the weights expect d_model = {}",
            x.cols(),
            w.d_model()
        );
    }
    run.seeds(json!({ "config": serde_json::to_value(&cfg)? }));
    fs::create_dir_all(&a.out)?;
    let perm = calibrate_permutation(&x, &w, &cfg)?;
    let out = run_pipeline_with(&x, &w, &cfg, &perm)?;
    let y_path = a.out.join("y.mixq");
    save_activations(&out.y, &y_path)?;
    let report_path = a.out.join("report.json");
    write_json(&report_path, &out.report)?;
    let stages_path = a.out.join("stages.csv");
    let mut sw = csv_writer(&stages_path)?;
    sw.write_record(["stage", "mean_range", "max_range"])?;
    for s in &out.report.stages {
        sw.write_record([
            s.stage.to_string(),
            s.mean_range.to_string(),
            s.max_range.to_string(),
        ])?;
    }
    sw.flush()?;
    let perm_path = a.out.join("permutation.json");
    save_permutation(&perm, &perm_path)?;
    for p in [&y_path, &report_path, &stages_path, &perm_path] {
        run.output(p);
    }
    if a.deploy {
        let dir = a.out.join("deployed");
        save_deployed(&w, &cfg, &perm, &dir)?;
        run.output(&dir);
    }
    println!(
        "output mse {:.6e}, relative error {:.6e}, bound violations {}",
        out.report.output_mse,
        out.report.relative_error,
        out.report.bound.as_ref().map_or(0, |b| b.violations)
    );
    run.finish(&a.out)?;
    Ok(Outcome::Clean)
}

pub fn compare(a: CompareArgs) -> Result<Outcome> {
    let mut run = Run::start("compare", &a)?;
    let w = load_weights(&a.weights, &mut run)?;
    let x = load(&a.input, &mut run)?;
    let mut wr = csv_writer(&a.out)?;
    wr.write_record([
        "strategy",
        "block_size",
        "bits",
        "output_mse",
        "relative_error",
        "bound_violations",
    ])?;
    for &s in &a.strategies {
        let cfg = GraphConfig::quantized(a.block_size, strategy(s, a.seed), a.bits);
        let perm = calibrate_permutation(&x, &w, &cfg)?;
        let out = run_pipeline_with(&x, &w, &cfg, &perm)?;
        wr.write_record([
            perm.strategy().to_string(),
            a.block_size.to_string(),
            a.bits.to_string(),
            out.report.output_mse.to_string(),
            out.report.relative_error.to_string(),
            out.report
                .bound
                .as_ref()
                .map_or(0, |b| b.violations)
                .to_string(),
        ])?;
    }
    wr.flush()?;
    run.seeds(json!({ "root": a.seed, "random_permutation": seed::derive(a.seed, 0) }));
    run.output(&a.out);
    run.finish(&a.out)?;
    print!("{}", fs::read_to_string(&a.out)?);
    Ok(Outcome::Clean)
}

pub fn fig5(a: Fig5Args) -> Result<Outcome> {
    let mut run = Run::start("fig5", &a)?;
    let set = load(&a.input, &mut run)?;
    let sizes = if a.block_sizes.is_empty() {
        (0..usize::BITS)
            .map(|k| 1usize << k)
            .take_while(|&b| b <= set.cols())
            .filter(|&b| set.cols() % b == 0)
            .collect()
    } else {
        a.block_sizes.clone()
    };
    let rows = figure5_statistic(&set, &sizes)?;
    let mut w = csv_writer(&a.out)?;
    w.write_record([
        "block_size",
        "mean",
        "std",
        "inv_sqrt_b",
        "inv_b",
        "rows_used",
        "zero_rows_skipped",
    ])?;
    for r in &rows {
        w.write_record([
            r.block_size.to_string(),
            r.mean.to_string(),
            r.std.to_string(),
            r.inv_sqrt_b.to_string(),
            r.inv_b.to_string(),
            r.rows_used.to_string(),
            r.zero_rows_skipped.to_string(),
        ])?;
    }
    w.flush()?;
    run.output(&a.out);
    run.finish(&a.out)?;
    Ok(Outcome::Clean)
}

pub fn rotate(a: RotateArgs) -> Result<Outcome> {
    let mut run = Run::start("rotate", &a)?;
    let set = load(&a.input, &mut run)?;
    let rot = match a.block_size {
        Some(b) => BlockRotation::for_blocks(set.cols(), b)?,
        None => BlockRotation::new(HadamardTransform::for_dimension(set.cols())?, 1)?,
    };
    save_activations(&rotate_block(&set, &rot)?, &a.out)?;
    run.output(&a.out);
    run.finish(&a.out)?;
    Ok(Outcome::Clean)
}

pub fn quant_config(a: &QuantizeArgs) -> Result<QuantizerConfig> {
    let base = match a.format {
        QuantFormatArg::IntSym => QuantizerConfig::int_symmetric(a.bits),
        QuantFormatArg::IntAsym => QuantizerConfig::int_asymmetric(a.bits),
        QuantFormatArg::Fp4 => QuantizerConfig::fp4(),
        QuantFormatArg::Mxfp4 => QuantizerConfig::mxfp4(),
    };
    let granularity = match (a.granularity, a.group_size) {
        (GranularityArg::Token, None) => Granularity::PerToken,
        (GranularityArg::Channel, None) => Granularity::PerChannel,
        (GranularityArg::Group, Some(size)) => Granularity::PerGroup { size },
        (GranularityArg::Group, None) => bail!("--granularity group needs --group-size"),
        (_, Some(_)) => bail!("--group-size only applies to --granularity group"),
    };
    let mut cfg = match a.format {
        // MXFP4 fixes its own group structure.
        QuantFormatArg::Mxfp4 => base,
        _ => base.with_granularity(granularity),
    };
    if a.mse {
        cfg = cfg.with_scale_search(ScaleSearch::mse());
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn quantize(a: QuantizeArgs) -> Result<Outcome> {
    let mut run = Run::start("quantize", &a)?;
    let set = load(&a.input, &mut run)?;
    let cfg = quant_config(&a)?;
    let q = mixquant_core::quant::quantize(&set, &cfg)?;
    let back = dequantize(&q);
    let (mut se, mut max_err) = (0.0, 0.0f64);
    for (x, y) in set.as_slice().iter().zip(back.as_slice()) {
        se += (x - y) * (x - y);
        max_err = max_err.max((x - y).abs());
    }
    save_quantized(&q, &a.out)?;
    run.output(&a.out);
    println!(
        "{}",
        serde_json::to_string_pretty(&json!({
            "config": cfg,
            "mse": se / set.as_slice().len() as f64,
            "max_abs_error": max_err,
            "units": q.scales().len(),
            "clamped_units": q.clamped().len(),
        }))?
    );
    run.finish(&a.out)?;
    Ok(Outcome::Clean)
}

pub fn rademacher(a: RademacherArgs) -> Result<Outcome> {
    let mut run = Run::start("rademacher", &a)?;
    let set = load(&a.input, &mut run)?;
    let r = rademacher_diagnostics(&set)?;
    let summary = json!({
        "tokens": r.tokens,
        "fraction_min": r.fraction_min,
        "fraction_max": r.fraction_max,
        "fraction_mean": r.fraction_mean,
        "offdiag_std": r.offdiag_std,
        "baseline": r.baseline,
    });
    if let Some(path) = &a.out {
        write_json(path, &r)?;
        run.output(path);
        run.finish(path)?;
    }
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(Outcome::Clean)
}
