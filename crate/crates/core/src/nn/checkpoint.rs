//! Checkpoint files: `<stem>.json` manifest plus `<stem>.bin` holding every
//! tensor as little-endian f32, concatenated in manifest order.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::Parameters;
use crate::error::{Error, Result};

pub const FORMAT: &str = "samp-checkpoint-v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub model: String,
    pub seed: u64,
    pub hyperparameters: serde_json::Value,
    pub tensors: Vec<TensorSpec>,
    pub payload_floats: usize,
}

fn paths(stem: &Path) -> (PathBuf, PathBuf) {
    (stem.with_extension("json"), stem.with_extension("bin"))
}

pub fn encode_payload<P: Parameters + ?Sized>(params: &P) -> Vec<u8> {
    let tensors = params.tensors();
    let n: usize = tensors.iter().map(|t| t.2.len()).sum();
    let mut out = Vec::with_capacity(n * 4);
    for (_, _, data) in tensors {
        for &x in data {
            out.extend_from_slice(&(x as f32).to_le_bytes());
        }
    }
    out
}

pub fn manifest_for<P: Parameters + ?Sized>(
    params: &P,
    model: &str,
    seed: u64,
    hyperparameters: serde_json::Value,
) -> Manifest {
    let tensors = params.tensors();
    Manifest {
        format: FORMAT.into(),
        model: model.into(),
        seed,
        hyperparameters,
        payload_floats: tensors.iter().map(|t| t.2.len()).sum(),
        tensors: tensors
            .into_iter()
            .map(|(name, shape, _)| TensorSpec { name, shape })
            .collect(),
    }
}

/// Writes `<stem>.json` and `<stem>.bin`. Parameters are rounded to f32.
pub fn save<P: Parameters + ?Sized>(
    stem: &Path,
    params: &P,
    model: &str,
    seed: u64,
    hyperparameters: serde_json::Value,
) -> Result<()> {
    let (json, bin) = paths(stem);
    if let Some(dir) = json.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let manifest = manifest_for(params, model, seed, hyperparameters);
    std::fs::write(&json, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&json, e))?;
    std::fs::write(&bin, encode_payload(params)).map_err(|e| Error::io(&bin, e))
}

pub fn read_manifest(stem: &Path) -> Result<Manifest> {
    let (json, _) = paths(stem);
    let text = std::fs::read_to_string(&json).map_err(|e| Error::io(&json, e))?;
    let m: Manifest = serde_json::from_str(&text)?;
    if m.format != FORMAT {
        return Err(Error::Config(format!("unknown checkpoint format `{}`", m.format)));
    }
    Ok(m)
}

/// Loads the payload into parameters whose layout must match the manifest.
pub fn load_into<P: Parameters + ?Sized>(stem: &Path, params: &mut P) -> Result<Manifest> {
    let manifest = read_manifest(stem)?;
    let (_, bin) = paths(stem);
    let bytes = std::fs::read(&bin).map_err(|e| Error::io(&bin, e))?;
    decode_into(&manifest, &bytes, params)?;
    Ok(manifest)
}

pub fn decode_into<P: Parameters + ?Sized>(manifest: &Manifest, bytes: &[u8], params: &mut P) -> Result<()> {
    if bytes.len() != manifest.payload_floats * 4 {
        return Err(Error::LengthMismatch {
            expected: manifest.payload_floats * 4,
            actual: bytes.len(),
        });
    }
    let expected = params.tensors();
    if expected.len() != manifest.tensors.len() {
        return Err(Error::DimMismatch {
            context: "checkpoint tensor count",
            expected: expected.len(),
            actual: manifest.tensors.len(),
        });
    }
    for ((name, shape, _), spec) in expected.iter().zip(&manifest.tensors) {
        if *name != spec.name || *shape != spec.shape {
            return Err(Error::Config(format!(
                "checkpoint tensor `{}` {:?} does not match model tensor `{}` {:?}",
                spec.name, spec.shape, name, shape
            )));
        }
    }
    drop(expected);
    let mut floats = bytes
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])));
    for t in params.tensors_mut() {
        for x in t.iter_mut() {
            *x = floats.next().ok_or(Error::LengthMismatch {
                expected: manifest.payload_floats,
                actual: 0,
            })?;
        }
    }
    Ok(())
}

/// Rounds every parameter to the nearest f32, matching what a checkpoint
/// stores.
pub fn quantize<P: Parameters + ?Sized>(params: &mut P) {
    for t in params.tensors_mut() {
        for x in t.iter_mut() {
            *x = f64::from(*x as f32);
        }
    }
}
