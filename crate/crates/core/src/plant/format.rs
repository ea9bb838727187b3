//! Model definition files (TOML). See `docs/model-format.md`.

use std::path::Path;

use super::model::{Model, ModelSpec};
use crate::error::{Error, Result};

pub fn model_from_toml(text: &str) -> Result<Model> {
    let spec: ModelSpec = toml::from_str(text).map_err(|e| Error::format("model file", e))?;
    Model::from_spec(&spec)
}

pub fn model_to_toml(model: &Model) -> String {
    toml::to_string_pretty(&model.to_spec()).expect("model spec serializes")
}

pub fn load_model(path: &Path) -> Result<Model> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    model_from_toml(&text)
}

pub fn save_model(model: &Model, path: &Path) -> Result<()> {
    std::fs::write(path, model_to_toml(model)).map_err(|e| Error::io(path, e))
}
