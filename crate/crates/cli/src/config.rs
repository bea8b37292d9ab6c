//! Run configurations: the JSON-serializable settings each command snapshots
//! into its manifest, plus loading and stack resolution.
//!
//! Config files mirror the CLI flags; explicitly supplied flags override file
//! values. A run's `manifest.json` is itself accepted wherever a config file
//! is — the loader unwraps its `config` field — so any run can be reproduced
//! with `--config <run>/manifest.json`.

use std::path::Path as FsPath;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use repgeo::geodesic::GeodesicConfig;
use repgeo::images::replicate_channels;
use repgeo::stack::{preset, StackRep, StackSpec, PRESET_NAMES};
use repgeo::transforms::TransformSpec;
use repgeo::Tensor;

use crate::exit::{invalid, CliResult};

/// Where a synthesis or measurement gets its representation from: a shipped
/// preset name or an inline [`StackSpec`]. Serialized untagged, so configs
/// write either `"smallnet_l2"` or a full spec object.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StackSource {
    Preset(String),
    Inline(StackSpec),
}

impl StackSource {
    /// Resolve to a concrete spec. A string is tried as a preset name first,
    /// then as a path to a spec JSON file.
    pub fn resolve(&self) -> CliResult<StackSpec> {
        match self {
            StackSource::Inline(spec) => Ok(spec.clone()),
            StackSource::Preset(name) => {
                if PRESET_NAMES.contains(&name.as_str()) {
                    return Ok(preset(name)?);
                }
                let path = FsPath::new(name);
                if path.is_file() {
                    let text = std::fs::read_to_string(path)?;
                    return Ok(serde_json::from_str(&text)?);
                }
                Err(invalid(format!(
                    "unknown stack '{name}': not a preset ({}) and not a spec file",
                    PRESET_NAMES.join(", ")
                )))
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransformRunConfig {
    /// Input image path, resolved against the working directory.
    pub input: String,
    pub spec: TransformSpec,
    /// Number of path segments; the run writes `n + 1` frames.
    pub n: usize,
    pub bit_depth: u8,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthRunConfig {
    pub x0: String,
    pub xn: String,
    pub stack: StackSource,
    pub geodesic: GeodesicConfig,
    pub bit_depth: u8,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RfRunConfig {
    pub stack: StackSource,
    /// Input shape `[channels, height, width]` the map is measured at.
    pub in_shape: Vec<usize>,
    /// Spatial column `[row, col]` of the probed response units.
    pub location: [usize; 2],
    pub n_noise: usize,
    pub seed: u64,
    pub bit_depth: u8,
}

/// Parse a config file, accepting either a bare config object or a full run
/// manifest (whose `config` field is then used).
pub fn load_config<T: DeserializeOwned>(path: &FsPath) -> CliResult<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| invalid(format!("cannot read config {}: {e}", path.display())))?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let config = match (value.get("config"), value.get("tool")) {
        (Some(inner), Some(_)) => inner.clone(),
        _ => value,
    };
    Ok(serde_json::from_value(config)?)
}

pub fn validate_bit_depth(bits: u8) -> CliResult<repgeo::io::BitDepth> {
    match bits {
        8 => Ok(repgeo::io::BitDepth::Eight),
        16 => Ok(repgeo::io::BitDepth::Sixteen),
        other => Err(invalid(format!("bit depth must be 8 or 16, got {other}"))),
    }
}

/// Build a stack for the given input shape. Grayscale inputs are replicated
/// to the stack's channel count when the shape is otherwise rejected, so the
/// color presets accept single-channel images; the returned flag says whether
/// frames must be replicated before evaluation.
pub fn build_rep_for(spec: &StackSpec, shape: &[usize]) -> CliResult<(StackRep, bool)> {
    match spec.build(shape) {
        Ok(rep) => Ok((rep, false)),
        Err(first_err) => {
            if shape.first() == Some(&1) && shape.len() == 3 {
                let widened = [3, shape[1], shape[2]];
                if let Ok(rep) = spec.build(&widened) {
                    return Ok((rep, true));
                }
            }
            Err(first_err.into())
        }
    }
}

/// Apply the replication decision of [`build_rep_for`] to one frame.
pub fn widen_frame(x: &Tensor, replicate: bool) -> CliResult<Tensor> {
    if replicate {
        Ok(replicate_channels(x, 3)?)
    } else {
        Ok(x.clone())
    }
}

/// Shared default for PNG output depth.
pub const DEFAULT_BIT_DEPTH: u8 = 8;

/// Evaluate a whole path under a possibly-widened representation.
pub fn path_with_channels(
    path: repgeo::geodesic::Path,
    replicate: bool,
) -> CliResult<repgeo::geodesic::Path> {
    if !replicate {
        return Ok(path);
    }
    let frames = path
        .into_frames()
        .iter()
        .map(|f| replicate_channels(f, 3))
        .collect::<repgeo::Result<Vec<_>>>()?;
    Ok(repgeo::geodesic::Path::from_frames(frames)?)
}

