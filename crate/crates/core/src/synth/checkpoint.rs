use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::TtsParams;
use crate::error::{Error, Result};

pub const TTS_CHECKPOINT_MAGIC: &str = "EMITTS/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TtsCheckpoint {
    pub format: String,
    pub seed: u64,
    pub steps: usize,
    pub params: TtsParams,
}

impl TtsCheckpoint {
    pub fn new(params: TtsParams, seed: u64, steps: usize) -> Self {
        Self {
            format: TTS_CHECKPOINT_MAGIC.to_string(),
            seed,
            steps,
            params,
        }
    }
}

pub fn save_tts_checkpoint(path: impl AsRef<Path>, ckpt: &TtsCheckpoint) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string(ckpt).map_err(|e| Error::json(path, e))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_tts_checkpoint(path: impl AsRef<Path>) -> Result<TtsCheckpoint> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let ckpt: TtsCheckpoint = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
    if ckpt.format != TTS_CHECKPOINT_MAGIC {
        return Err(Error::format(0, format!(
            "{}: expected format {TTS_CHECKPOINT_MAGIC}, found {:?}",
            path.display(),
            ckpt.format
        )));
    }
    ckpt.params.validate()?;
    Ok(ckpt)
}
