use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{OptimizerConfig, ScheduleConfig};
use crate::denoise::NoiseConfig;
use crate::error::{Error, Result};
use crate::realizer::RealizerConfig;
use crate::tagger::TaggerConfig;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    #[default]
    Tagger,
    Realizer,
}

/// How parallel and pseudo pairs are combined for the realizer.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixMode {
    /// Pretrain on pseudo pairs, then fine-tune on parallel pairs.
    #[default]
    TwoPhase,
    /// One stream of homogeneous batches drawn at `ratio`.
    Joint,
}

/// Order of the realizer's key-fact input for parallel samples.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeyFactOrder {
    #[default]
    Table,
    Text,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MixingConfig {
    pub mode: MixMode,
    /// Probability a joint-mode batch is parallel.
    pub ratio: f64,
}

impl Default for MixingConfig {
    fn default() -> Self {
        MixingConfig {
            mode: MixMode::TwoPhase,
            ratio: 0.5,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub parallel: Option<PathBuf>,
    pub valid: Option<PathBuf>,
    pub pseudo: Option<PathBuf>,
    pub pseudo_valid: Option<PathBuf>,
    pub checkpoint_dir: Option<PathBuf>,
    /// Whether the parallel texts are added to the pseudo pool.
    pub use_parallel_text_for_pseudo: bool,
    pub key_fact_order: KeyFactOrder,
}

/// Everything needed to train one stage.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainPlan {
    pub stage: Stage,
    pub seed: u64,
    pub optimizer: OptimizerConfig,
    pub schedule: ScheduleConfig,
    pub noise: NoiseConfig,
    pub mixing: MixingConfig,
    pub tagger: TaggerConfig,
    pub realizer: RealizerConfig,
    pub data: DataConfig,
}

impl TrainPlan {
    pub fn for_stage(stage: Stage) -> Self {
        TrainPlan {
            stage,
            ..Default::default()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let plan: TrainPlan = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.optimizer.validate()?;
        self.noise.validate()?;
        if !(0.0..=1.0).contains(&self.mixing.ratio) {
            return Err(Error::Config(format!("mixing ratio {} outside [0, 1]", self.mixing.ratio)));
        }
        if self.schedule.max_epochs == 0 {
            return Err(Error::Config("max_epochs must be positive".into()));
        }
        match self.stage {
            Stage::Tagger => {
                if self.data.pseudo.is_some() || self.data.pseudo_valid.is_some() {
                    return Err(Error::Config("a tagger plan cannot use pseudo data".into()));
                }
                self.tagger.validate()
            }
            Stage::Realizer => self.realizer.validate(),
        }
    }

    /// Hex SHA-256 of the plan's canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("plan serializes");
        hex::encode(Sha256::digest(json))
    }
}
