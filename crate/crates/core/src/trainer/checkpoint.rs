//! Checkpoint directory: three tensors plus a JSON sidecar.
//!
//! ```text
//! phi_image.ften        C_image x D
//! phi_text.ften         C_text x D
//! log_temperature.ften  [1]
//! checkpoint.json       CheckpointMeta
//! ```
//!
//! Tensors are stored as f32, so a reloaded pair is the f32 rounding of the
//! trained one.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{read_tensor, write_tensor, FeatureTensor};

use super::{ProjectionPair, TrainConfig};

pub const IMAGE_FILE: &str = "phi_image.ften";
pub const TEXT_FILE: &str = "phi_text.ften";
pub const TEMPERATURE_FILE: &str = "log_temperature.ften";
pub const META_FILE: &str = "checkpoint.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub config: TrainConfig,
    pub steps: usize,
    pub seed: u64,
    pub samples: usize,
}

pub fn save_checkpoint(dir: impl AsRef<Path>, pair: &ProjectionPair, meta: &CheckpointMeta) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_tensor(&FeatureTensor::from_matrix(&pair.image)?, dir.join(IMAGE_FILE))?;
    write_tensor(&FeatureTensor::from_matrix(&pair.text)?, dir.join(TEXT_FILE))?;
    write_tensor(
        &FeatureTensor::new(vec![1], vec![pair.log_temperature as f32])?,
        dir.join(TEMPERATURE_FILE),
    )?;
    let meta_path = dir.join(META_FILE);
    fs::write(&meta_path, serde_json::to_string_pretty(meta)?).map_err(|e| Error::io(&meta_path, e))
}

pub fn load_checkpoint(dir: impl AsRef<Path>) -> Result<(ProjectionPair, CheckpointMeta)> {
    let dir = dir.as_ref();
    let image = read_tensor(dir.join(IMAGE_FILE))?.to_matrix()?;
    let text = read_tensor(dir.join(TEXT_FILE))?.to_matrix()?;
    let temp = read_tensor(dir.join(TEMPERATURE_FILE))?;
    if temp.numel() != 1 {
        return Err(Error::ShapeMismatch(format!(
            "log temperature must hold one value, has shape {:?}",
            temp.shape()
        )));
    }
    let meta_path = dir.join(META_FILE);
    let text_json = fs::read_to_string(&meta_path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile {
            path: meta_path.clone(),
        },
        _ => Error::io(&meta_path, e),
    })?;
    let meta: CheckpointMeta = serde_json::from_str(&text_json).map_err(|e| Error::SchemaError(e.to_string()))?;
    let pair = ProjectionPair::new(image, text, temp.data()[0] as f64)?;
    Ok((pair, meta))
}
