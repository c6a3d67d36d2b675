use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::Captioner;
use super::params::SavedParam;
use super::vocab::Vocabulary;
use super::{CaptionerConfig, CaptionerError, TrainConfig};

const FORMAT: &str = "navmap-captioner/1";

/// Everything needed to rebuild a trained model, in one JSON document.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub config: CaptionerConfig,
    pub train: Option<TrainConfig>,
    pub seed: u64,
    pub best_epoch: Option<usize>,
    pub vocab: Vocabulary,
    pub params: Vec<SavedParam>,
}

impl Captioner {
    pub fn to_checkpoint(&self, train: Option<&TrainConfig>, best_epoch: Option<usize>) -> Checkpoint {
        Checkpoint {
            format: FORMAT.into(),
            config: self.config.clone(),
            train: train.cloned(),
            seed: self.seed,
            best_epoch,
            vocab: self.vocab.clone(),
            params: self.params.to_snapshot(),
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self, CaptionerError> {
        if ckpt.format != FORMAT {
            return Err(CaptionerError::Checkpoint(format!("unsupported format `{}`, expected `{FORMAT}`", ckpt.format)));
        }
        let mut model = Captioner::new(ckpt.config.clone(), ckpt.vocab.clone(), ckpt.seed)?;
        model.params.load_snapshot(&ckpt.params).map_err(CaptionerError::Checkpoint)?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>, train: Option<&TrainConfig>, best_epoch: Option<usize>) -> Result<(), CaptionerError> {
        let text = serde_json::to_string(&self.to_checkpoint(train, best_epoch))
            .map_err(|e| CaptionerError::Checkpoint(e.to_string()))?;
        fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CaptionerError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        let ckpt: Checkpoint = serde_json::from_str(&text)
            .map_err(|e| CaptionerError::Checkpoint(format!("{}: {e}", path.display())))?;
        Self::from_checkpoint(&ckpt)
    }
}
