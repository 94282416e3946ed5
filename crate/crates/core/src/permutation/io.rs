//! Permutation files.
//!
//! JSON: `{"d": 8, "b": 4, "strategy": "massdiff", "pi": [...]}` with an
//! optional `"seed"` for random permutations and `"zigzag_key"` for zigzag.
//!
//! Binary: magic `b"MIXP"`, version `u32` = 1, `d` `u32`, `b` `u32`, then
//! `d` little-endian `u32` entries of `π`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Permutation, Strategy, ZigzagKey};
use crate::error::{Error, Result};

pub const PERM_MAGIC: [u8; 4] = *b"MIXP";
pub const PERM_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct PermutationFile {
    d: usize,
    b: usize,
    strategy: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    zigzag_key: Option<ZigzagKey>,
    pi: Vec<usize>,
}

pub fn permutation_to_json(perm: &Permutation) -> Result<String> {
    let (name, seed, zigzag_key) = match perm.strategy() {
        Strategy::Identity => ("identity", None, None),
        Strategy::Random { seed } => ("random", Some(seed), None),
        Strategy::Absmax => ("absmax", None, None),
        Strategy::Zigzag { key } => ("zigzag", None, Some(key)),
        Strategy::Massdiff => ("massdiff", None, None),
        Strategy::Optimal => ("optimal", None, None),
        Strategy::Explicit => ("explicit", None, None),
    };
    Ok(serde_json::to_string_pretty(&PermutationFile {
        d: perm.dim(),
        b: perm.block_size(),
        strategy: name.to_string(),
        seed,
        zigzag_key,
        pi: perm.pi().to_vec(),
    })?)
}

pub fn permutation_from_json(text: &str) -> Result<Permutation> {
    let f: PermutationFile = serde_json::from_str(text)?;
    if f.pi.len() != f.d {
        return Err(Error::Dimension(format!(
            "declared d = {} but pi has {} entries",
            f.d,
            f.pi.len()
        )));
    }
    let strategy = match (f.strategy.as_str(), f.seed) {
        ("identity", _) => Strategy::Identity,
        ("random", Some(seed)) => Strategy::Random { seed },
        ("random", None) => {
            return Err(Error::InvalidParams("random strategy needs a seed".into()))
        }
        ("absmax", _) => Strategy::Absmax,
        ("zigzag", _) => Strategy::Zigzag {
            key: f.zigzag_key.unwrap_or(ZigzagKey::AverageMagnitude),
        },
        ("massdiff", _) => Strategy::Massdiff,
        ("optimal", _) => Strategy::Optimal,
        ("explicit", _) => Strategy::Explicit,
        (other, _) => return Err(Error::InvalidParams(format!("unknown strategy `{other}`"))),
    };
    Permutation::from_pi(f.pi, f.b, strategy)
}

pub fn encode_permutation(perm: &Permutation) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 4 * perm.dim());
    out.extend_from_slice(&PERM_MAGIC);
    out.extend_from_slice(&PERM_VERSION.to_le_bytes());
    out.extend_from_slice(&(perm.dim() as u32).to_le_bytes());
    out.extend_from_slice(&(perm.block_size() as u32).to_le_bytes());
    for &p in perm.pi() {
        out.extend_from_slice(&(p as u32).to_le_bytes());
    }
    out
}

pub fn decode_permutation(bytes: &[u8]) -> Result<Permutation> {
    if bytes.len() < 4 || bytes[..4] != PERM_MAGIC {
        return Err(Error::BadMagic);
    }
    if bytes.len() < 16 {
        return Err(Error::TruncatedPayload {
            expected: 16,
            found: bytes.len() as u64,
        });
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 * i..4 * i + 4].try_into().unwrap());
    if word(1) != PERM_VERSION {
        return Err(Error::VersionMismatch {
            found: word(1),
            expected: PERM_VERSION,
        });
    }
    let (d, b) = (word(2) as usize, word(3) as usize);
    let expected = 16 + 4 * d as u64;
    match (bytes.len() as u64).cmp(&expected) {
        std::cmp::Ordering::Less => {
            return Err(Error::TruncatedPayload {
                expected,
                found: bytes.len() as u64,
            })
        }
        std::cmp::Ordering::Greater => {
            return Err(Error::TrailingBytes(bytes.len() as u64 - expected))
        }
        std::cmp::Ordering::Equal => {}
    }
    let pi = (0..d).map(|i| word(4 + i) as usize).collect();
    Permutation::from_pi(pi, b, Strategy::Explicit)
}

/// Writes JSON when the path ends in `.json`, binary otherwise.
pub fn save_permutation(perm: &Permutation, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if path.extension().is_some_and(|e| e == "json") {
        fs::write(path, permutation_to_json(perm)?)?;
    } else {
        fs::write(path, encode_permutation(perm))?;
    }
    Ok(())
}

pub fn load_permutation(path: impl AsRef<Path>) -> Result<Permutation> {
    let bytes = fs::read(path)?;
    if bytes.starts_with(&PERM_MAGIC) {
        decode_permutation(&bytes)
    } else {
        let text = String::from_utf8(bytes).map_err(|_| {
            Error::InvalidParams("permutation file is neither MIXP nor JSON".into())
        })?;
        permutation_from_json(&text)
    }
}
