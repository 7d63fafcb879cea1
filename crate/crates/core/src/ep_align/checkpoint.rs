use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EpAlignParams, Modality};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &str = "EPALIGN/1";

/// On-disk EP-Align checkpoint: JSON with the format tag, the training
/// provenance and every tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignCheckpoint {
    pub format: String,
    pub seed: u64,
    pub modalities: Vec<Modality>,
    pub params: EpAlignParams,
}

impl AlignCheckpoint {
    pub fn new(params: EpAlignParams, modalities: Vec<Modality>, seed: u64) -> Self {
        Self {
            format: CHECKPOINT_MAGIC.to_string(),
            seed,
            modalities,
            params,
        }
    }
}

pub fn save_checkpoint(path: &Path, ckpt: &AlignCheckpoint) -> Result<()> {
    let json = serde_json::to_string(ckpt).map_err(|e| Error::json(path, e))?;
    fs::write(path, json).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<AlignCheckpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let ckpt: AlignCheckpoint = serde_json::from_slice(&bytes).map_err(|e| Error::json(path, e))?;
    if ckpt.format != CHECKPOINT_MAGIC {
        return Err(Error::format(
            0,
            format!(
                "{}: expected format {CHECKPOINT_MAGIC}, found {}",
                path.display(),
                ckpt.format
            ),
        ));
    }
    ckpt.params.validate()?;
    Ok(ckpt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ep_align::AlignDims;

    #[test]
    fn round_trip_and_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.json");
        let params = EpAlignParams::init(AlignDims::default(), Modality::Audio, 5).unwrap();
        let ckpt = AlignCheckpoint::new(params, vec![Modality::Audio], 5);
        save_checkpoint(&path, &ckpt).unwrap();
        assert_eq!(load_checkpoint(&path).unwrap(), ckpt);

        let text = fs::read_to_string(&path).unwrap().replace("EPALIGN/1", "EPALIGN/9");
        fs::write(&path, text).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Format { .. })));
    }
}
