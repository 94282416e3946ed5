//! On-disk FFN weights and deployed graphs.
//!
//! A weight directory holds `gate.mixq`, `up.mixq` and `down.mixq` as f32
//! matrices, indexed by `weights.json`. A deployed directory additionally holds `manifest.json`, the
//! permutation and, when weights are quantized, `*.mixqq` code files.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{deploy, deployed_graph, FfnWeights, GraphConfig, GraphOp};
use crate::data::io::{load_activations, save_activations};
use crate::error::{Error, Result};
use crate::permutation::io::save_permutation;
use crate::permutation::Permutation;
use crate::quant::io::save_quantized;
use crate::quant::quantize;

const NAMES: [&str; 3] = ["gate", "up", "down"];

/// Names the three matrix files of a weight directory.
#[derive(Serialize, Deserialize)]
struct WeightIndex {
    d_model: usize,
    d_ff: usize,
    gate: String,
    up: String,
    down: String,
}

pub const WEIGHT_INDEX: &str = "weights.json";

pub fn save_ffn(w: &FfnWeights, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    for (name, m) in NAMES.iter().zip([&w.gate, &w.up, &w.down]) {
        save_activations(m, dir.join(format!("{name}.mixq")))?;
    }
    let index = WeightIndex {
        d_model: w.d_model(),
        d_ff: w.d_ff(),
        gate: "gate.mixq".into(),
        up: "up.mixq".into(),
        down: "down.mixq".into(),
    };
    fs::write(
        dir.join(WEIGHT_INDEX),
        serde_json::to_string_pretty(&index)? + "\n",
    )?;
    Ok(())
}

pub fn load_ffn(dir: impl AsRef<Path>) -> Result<FfnWeights> {
    let dir = dir.as_ref();
    let index: WeightIndex = serde_json::from_str(&fs::read_to_string(dir.join(WEIGHT_INDEX))?)?;
    let w = FfnWeights::new(
        load_activations(dir.join(&index.gate))?,
        load_activations(dir.join(&index.up))?,
        load_activations(dir.join(&index.down))?,
    )?;
    if (w.d_model(), w.d_ff()) != (index.d_model, index.d_ff) {
        return Err(Error::Dimension(format!(
            "{WEIGHT_INDEX} declares {}x{}, matrices are {}x{}",
            index.d_model,
            index.d_ff,
            w.d_model(),
            w.d_ff()
        )));
    }
    Ok(w)
}

#[derive(Serialize)]
struct Manifest<'a> {
    d_model: usize,
    d_ff: usize,
    config: &'a GraphConfig,
    graph: Vec<GraphOp>,
    permutation_file: &'static str,
    weight_files: Vec<String>,
}

/// Writes the merged weights for `cfg` and `perm` along with a manifest.
pub fn save_deployed(
    w: &FfnWeights,
    cfg: &GraphConfig,
    perm: &Permutation,
    dir: impl AsRef<Path>,
) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let dep = deploy(w, cfg, perm)?;
    let weights = [&dep.weights.gate, &dep.weights.up, &dep.weights.down];
    let mut weight_files = Vec::new();
    for (name, m) in NAMES.iter().zip(weights) {
        let file = match &cfg.weight_quant {
            Some(q) => {
                let file = format!("{name}.mixqq");
                save_quantized(&quantize(m, q)?, dir.join(&file))?;
                file
            }
            None => {
                let file = format!("{name}.mixq");
                save_activations(m, dir.join(&file))?;
                file
            }
        };
        weight_files.push(file);
    }
    save_permutation(perm, dir.join("permutation.json"))?;
    let manifest = Manifest {
        d_model: w.d_model(),
        d_ff: w.d_ff(),
        config: cfg,
        graph: deployed_graph(cfg),
        permutation_file: "permutation.json",
        weight_files,
    };
    fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(())
}
