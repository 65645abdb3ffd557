use std::collections::BTreeSet;
use std::path::Path;

use serde_json::json;

use super::decoder::DecoderHead;
use super::params::Trainable;
use super::ModelState;
use crate::adapter::{AdapterStack, AdapterTap};
use crate::config::RunConfig;
use crate::encoders::BackendDescriptor;
use crate::error::{Error, Result};
use crate::fusion::ProjectionParams;
use crate::nn::{Activation, Affine};
use crate::tensorfile::TensorFile;

pub const CHECKPOINT_VERSION: u32 = 1;

/// Writes every trainable tensor plus config, seed, step and frozen set.
pub fn save_checkpoint(state: &ModelState, path: &Path) -> Result<()> {
    let p = &state.params;
    let meta = json!({
        "checkpoint_version": CHECKPOINT_VERSION,
        "seed": state.seed,
        "step": state.step,
        "frozen": state.frozen,
        "config": state.config,
        "descriptor": state.descriptor,
        "activation": p.projection.activation,
        "adapter_tap": p.adapters.tap,
        "adapter_layers": p.adapters.layer_selection,
        "adapter_channels": p.adapters.layer_channels,
    });
    let mut file = TensorFile::new(meta);
    for (name, _, shape, values) in p.tensors() {
        file.push(name, &shape, values);
    }
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    file.write(path)
}

fn field<T: serde::de::DeserializeOwned>(
    meta: &serde_json::Value,
    key: &str,
    path: &Path,
) -> Result<T> {
    let v = meta.get(key).cloned().ok_or_else(|| Error::Corrupt {
        path: path.to_path_buf(),
        message: format!("checkpoint header lacks {key}"),
    })?;
    serde_json::from_value(v).map_err(|e| Error::Corrupt {
        path: path.to_path_buf(),
        message: format!("checkpoint field {key}: {e}"),
    })
}

/// Reads a checkpoint; any missing or malformed part is an error.
pub fn load_checkpoint(path: &Path) -> Result<ModelState> {
    if !path.is_file() {
        return Err(Error::MissingInput(path.to_path_buf()));
    }
    let file = TensorFile::read(path)?;
    let meta = &file.meta;
    let version: u32 = field(meta, "checkpoint_version", path)?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Version {
            path: path.to_path_buf(),
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let config: RunConfig = field(meta, "config", path)?;
    let descriptor: BackendDescriptor = field(meta, "descriptor", path)?;
    let frozen: BTreeSet<String> = field(meta, "frozen", path)?;
    let activation: Activation = field(meta, "activation", path)?;
    let tap: AdapterTap = field(meta, "adapter_tap", path)?;
    let layers: Vec<usize> = field(meta, "adapter_layers", path)?;
    let channels: Vec<usize> = field(meta, "adapter_channels", path)?;

    let affine = |prefix: &str| -> Result<Affine> {
        Ok(Affine {
            weight: file.matrix(&format!("{prefix}.weight"))?,
            bias: file.vector(&format!("{prefix}.bias"))?,
        })
    };
    let projection = ProjectionParams {
        w_audio: file.matrix("projection.w_audio")?,
        w_visual: file.matrix("projection.w_visual")?,
        mlp_hidden: affine("projection.mlp_hidden")?,
        mlp_out: affine("projection.mlp_out")?,
        activation,
    };
    let maps = layers
        .iter()
        .map(|j| affine(&format!("adapters.layer{j}")))
        .collect::<Result<Vec<_>>>()?;
    let adapters = AdapterStack {
        layer_selection: layers,
        maps,
        tap,
        layer_channels: channels,
    };
    let decoder = DecoderHead {
        u_f: file.matrix("decoder.u_f")?,
        u_x: file.matrix("decoder.u_x")?,
        v: file.matrix("decoder.v")?,
        c: file.vector("decoder.c")?,
        w: file.vector("decoder.w")?,
        b: file.vector("decoder.b")?,
    };
    let params = Trainable {
        projection,
        adapters,
        decoder,
    };
    let expected = params.tensors().len();
    if file.tensors.len() != expected {
        return Err(Error::Corrupt {
            path: path.to_path_buf(),
            message: format!("expected {expected} tensors, found {}", file.tensors.len()),
        });
    }
    Ok(ModelState {
        config,
        descriptor,
        params,
        frozen,
        seed: field(meta, "seed", path)?,
        step: field(meta, "step", path)?,
    })
}
