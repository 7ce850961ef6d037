//! Model files and atomic writes.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use stable_ds_core::data::Normalization;
use stable_ds_core::dynamics::{DynamicsMode, LatentDynamics};
use stable_ds_core::networks::{MlpParams, TransformSpec};
use stable_ds_core::StableDsModel;

use crate::error::{Error, Result};

pub const MODEL_VERSION: &str = "stable-ds-v1";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    version: String,
    state_dim: usize,
    beta: f64,
    mode: DynamicsMode,
    normalization: Normalization,
    m1: MlpParams,
    m2: MlpParams,
    n: MlpParams,
}

pub fn model_to_json(model: &StableDsModel) -> String {
    let file = ModelFile {
        version: MODEL_VERSION.to_string(),
        state_dim: model.state_dim(),
        beta: model.beta(),
        mode: model.mode(),
        normalization: model.normalization.clone(),
        m1: model.transform.m1.clone(),
        m2: model.transform.m2.clone(),
        n: model.latent.n.clone(),
    };
    let mut s = serde_json::to_string_pretty(&file).expect("model serializes");
    s.push('\n');
    s
}

/// Parses and re-validates a model document.
pub fn model_from_json(text: &str, path: &Path) -> Result<StableDsModel> {
    let f: ModelFile = serde_json::from_str(text).map_err(|e| Error::format(path, Some(e.line()), e.to_string()))?;
    let invalid = |m: String| Error::format(path, None, m);
    if f.version != MODEL_VERSION {
        return Err(invalid(format!("unsupported model version `{}`", f.version)));
    }
    let n = &f.normalization;
    let normalization = Normalization::new(n.target.clone(), n.scale.clone(), n.lower.clone(), n.upper.clone())?;
    if normalization != *n {
        return Err(invalid("normalization offset must equal its target".into()));
    }
    let net = |p: MlpParams| MlpParams::new(p.layers);
    let transform = TransformSpec::new(net(f.m1)?, net(f.m2)?)?;
    if transform.state_dim != f.state_dim {
        return Err(invalid(format!("state_dim {} disagrees with the networks ({})", f.state_dim, transform.state_dim)));
    }
    let latent = LatentDynamics::new(net(f.n)?, f.beta, f.mode)?;
    Ok(StableDsModel::new(transform, latent, normalization)?)
}

pub fn save_model(model: &StableDsModel, path: &Path) -> Result<()> {
    write_atomic(path, model_to_json(model).as_bytes())
}

pub fn load_model(path: &Path) -> Result<StableDsModel> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    model_from_json(&text, path)
}

/// Writes through a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path.file_name().ok_or_else(|| Error::Usage(format!("{} is not a file path", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    let write = || -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    };
    write().map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}
