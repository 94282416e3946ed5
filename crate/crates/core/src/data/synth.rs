//! Seeded synthetic activations and per-token distribution fits.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, Normal, StudentT};
use serde::{Deserialize, Serialize};

use super::Matrix;
use crate::error::{Error, Result};
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Distribution {
    Gaussian {
        mean: f64,
        std: f64,
    },
    Laplacian {
        location: f64,
        scale: f64,
    },
    StudentT {
        location: f64,
        scale: f64,
        dof: f64,
    },
    /// `count` fixed outlier channels of the given magnitude (random sign per
    /// entry) over a Gaussian floor with standard deviation `background`
    /// (zero gives exact zeros).
    SparseOutlier {
        count: usize,
        magnitude: f64,
        background: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub distribution: Distribution,
    /// Log-normal spread of a per-channel scale shared by all rows.
    /// Zero means every channel has unit scale.
    #[serde(default)]
    pub channel_spread: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(distribution: Distribution, seed: u64) -> Self {
        SyntheticSpec {
            distribution,
            channel_spread: 0.0,
            seed,
        }
    }

    pub fn gaussian(mean: f64, std: f64, seed: u64) -> Self {
        Self::new(Distribution::Gaussian { mean, std }, seed)
    }

    pub fn laplacian(location: f64, scale: f64, seed: u64) -> Self {
        Self::new(Distribution::Laplacian { location, scale }, seed)
    }

    pub fn sparse_outlier(count: usize, magnitude: f64, background: f64, seed: u64) -> Self {
        Self::new(
            Distribution::SparseOutlier {
                count,
                magnitude,
                background,
            },
            seed,
        )
    }

    /// Student-t (3 dof) tokens over log-normally scaled channels: a few
    /// channels carry persistently large magnitudes, as in LLM activations.
    pub fn heavy_tailed(seed: u64) -> Self {
        SyntheticSpec {
            distribution: Distribution::StudentT {
                location: 0.0,
                scale: 1.0,
                dof: 3.0,
            },
            channel_spread: 1.0,
            seed,
        }
    }

    pub fn with_channel_spread(mut self, spread: f64) -> Self {
        self.channel_spread = spread;
        self
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParams(msg));
        if !(self.channel_spread >= 0.0 && self.channel_spread.is_finite()) {
            return bad(format!(
                "channel_spread must be >= 0, got {}",
                self.channel_spread
            ));
        }
        match self.distribution {
            Distribution::Gaussian { mean, std } => {
                if !(std > 0.0 && std.is_finite() && mean.is_finite()) {
                    return bad(format!(
                        "gaussian needs finite mean and std > 0, got std={std}"
                    ));
                }
            }
            Distribution::Laplacian { location, scale } => {
                if !(scale > 0.0 && scale.is_finite() && location.is_finite()) {
                    return bad(format!("laplacian needs scale > 0, got {scale}"));
                }
            }
            Distribution::StudentT {
                location,
                scale,
                dof,
            } => {
                if !(scale > 0.0 && scale.is_finite() && location.is_finite()) {
                    return bad(format!("student_t needs scale > 0, got {scale}"));
                }
                if !(dof > 2.0 && dof.is_finite()) {
                    return bad(format!("student_t needs dof > 2, got {dof}"));
                }
            }
            Distribution::SparseOutlier {
                count,
                magnitude,
                background,
            } => {
                if count >= d {
                    return bad(format!("outlier count {count} must be < d = {d}"));
                }
                if !(magnitude > 0.0 && magnitude.is_finite()) {
                    return bad(format!("outlier magnitude must be > 0, got {magnitude}"));
                }
                if !(background >= 0.0 && background.is_finite()) {
                    return bad(format!("background must be >= 0, got {background}"));
                }
            }
        }
        Ok(())
    }
}

fn laplace(rng: &mut impl Rng, location: f64, scale: f64) -> f64 {
    // Inverse CDF on u ∈ (-1/2, 1/2).
    let u: f64 = rng.random::<f64>() - 0.5;
    let tail = (1.0 - 2.0 * u.abs()).max(f64::MIN_POSITIVE);
    location - scale * u.signum() * tail.ln()
}

/// Draws an `m × d` set. Values are rounded to `f32` precision so that the
/// result survives a MIXQ round trip bit-exactly.
pub fn generate(spec: &SyntheticSpec, m: usize, d: usize) -> Result<Matrix> {
    if m == 0 || d == 0 {
        return Err(Error::Dimension(format!("cannot generate a {m}x{d} set")));
    }
    spec.validate(d)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let channel_scale: Vec<f64> = if spec.channel_spread > 0.0 {
        let mut crng = ChaCha8Rng::seed_from_u64(seed::derive(spec.seed, 1));
        let normal = Normal::new(0.0, spec.channel_spread).expect("validated spread");
        (0..d).map(|_| normal.sample(&mut crng).exp()).collect()
    } else {
        vec![1.0; d]
    };

    let mut data = Vec::with_capacity(m * d);
    match spec.distribution {
        Distribution::Gaussian { mean, std } => {
            let normal = Normal::new(0.0, std).expect("validated std");
            for _ in 0..m {
                for s in &channel_scale {
                    data.push(mean + s * normal.sample(&mut rng));
                }
            }
        }
        Distribution::Laplacian { location, scale } => {
            for _ in 0..m {
                for s in &channel_scale {
                    data.push(location + s * laplace(&mut rng, 0.0, scale));
                }
            }
        }
        Distribution::StudentT {
            location,
            scale,
            dof,
        } => {
            let t = StudentT::new(dof).expect("validated dof");
            for _ in 0..m {
                for s in &channel_scale {
                    data.push(location + s * scale * t.sample(&mut rng));
                }
            }
        }
        Distribution::SparseOutlier {
            count,
            magnitude,
            background,
        } => {
            let mut is_outlier = vec![false; d];
            let mut crng = ChaCha8Rng::seed_from_u64(seed::derive(spec.seed, 2));
            for i in index::sample(&mut crng, d, count) {
                is_outlier[i] = true;
            }
            let normal = (background > 0.0).then(|| Normal::new(0.0, background).unwrap());
            for _ in 0..m {
                for (c, s) in channel_scale.iter().enumerate() {
                    let v = if is_outlier[c] {
                        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                        sign * magnitude
                    } else {
                        match &normal {
                            Some(n) => n.sample(&mut rng),
                            None => 0.0,
                        }
                    };
                    data.push(s * v);
                }
            }
        }
    }
    for v in &mut data {
        *v = *v as f32 as f64;
    }
    Matrix::new(m, d, data)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitFamily {
    Gaussian,
    Laplacian,
}

/// Fits one distribution per row: Gaussian by sample mean and (n−1)
/// standard deviation, Laplacian by median and mean absolute deviation from
/// the median. The returned spec for row `i` carries seed `i`.
pub fn fit_per_token(set: &Matrix, family: FitFamily) -> Result<Vec<SyntheticSpec>> {
    set.iter_rows()
        .enumerate()
        .map(|(i, row)| {
            let distribution = match family {
                FitFamily::Gaussian => {
                    let n = row.len() as f64;
                    let mean = row.iter().sum::<f64>() / n;
                    let var = if row.len() > 1 {
                        row.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
                    } else {
                        0.0
                    };
                    if var.is_nan() || var <= 0.0 {
                        return Err(Error::DegenerateFit { row: i });
                    }
                    Distribution::Gaussian {
                        mean,
                        std: var.sqrt(),
                    }
                }
                FitFamily::Laplacian => {
                    let location = median(row);
                    let scale =
                        row.iter().map(|x| (x - location).abs()).sum::<f64>() / row.len() as f64;
                    if scale.is_nan() || scale <= 0.0 {
                        return Err(Error::DegenerateFit { row: i });
                    }
                    Distribution::Laplacian { location, scale }
                }
            };
            Ok(SyntheticSpec::new(distribution, i as u64))
        })
        .collect()
}

fn median(row: &[f64]) -> f64 {
    let mut v = row.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Draws one `d`-dimensional row from each fitted spec.
pub fn sample_fitted(specs: &[SyntheticSpec], d: usize, seed: u64) -> Result<Matrix> {
    let mut data = Vec::with_capacity(specs.len() * d);
    for (i, spec) in specs.iter().enumerate() {
        let mut s = spec.clone();
        s.seed = seed::derive(seed, i as u64);
        data.extend(generate(&s, 1, d)?.into_vec());
    }
    Matrix::new(specs.len(), d, data)
}
