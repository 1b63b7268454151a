//! JSON run configuration shared by the training commands.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{BlurSpec, InkPolarity};
use crate::error::{Error, Result};
use crate::loss::{FocalLossConfig, DEFAULT_GAMMA, DEFAULT_HEAD_WEIGHTS};
use crate::model::ModelSpec;
use crate::train::TrainConfig;

/// Where samples come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    /// Concatenated GNT files, read in order.
    Gnt(Vec<PathBuf>),
    Synth {
        classes: usize,
        per_class: usize,
        side: usize,
        seed: u64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub source: DataSource,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    #[serde(default)]
    pub split_seed: u64,
    /// Ink storage of GNT sources; synthetic glyphs are always dark on light.
    #[serde(default)]
    pub polarity: InkPolarity,
}

/// 3.0M training images out of 3.9M.
fn default_train_fraction() -> f64 {
    3.0 / 3.9
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaMode {
    Uniform,
    /// Inverse class frequency of the training split, mean 1.
    InverseFrequency,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Alpha {
    Mode(AlphaMode),
    Explicit(Vec<f32>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossSettings {
    pub gamma: f32,
    pub alpha: Alpha,
    pub head_weights: Vec<f32>,
}

impl Default for LossSettings {
    fn default() -> Self {
        LossSettings {
            gamma: DEFAULT_GAMMA,
            alpha: Alpha::Mode(AlphaMode::InverseFrequency),
            head_weights: DEFAULT_HEAD_WEIGHTS.to_vec(),
        }
    }
}

impl LossSettings {
    pub fn resolve(&self, class_counts: &[usize]) -> Result<FocalLossConfig> {
        let alpha = match &self.alpha {
            Alpha::Mode(AlphaMode::Uniform) => vec![1.0; class_counts.len()],
            Alpha::Mode(AlphaMode::InverseFrequency) => {
                crate::loss::alpha_from_frequencies(class_counts)?
            }
            Alpha::Explicit(a) => a.clone(),
        };
        let cfg = FocalLossConfig {
            gamma: self.gamma,
            alpha,
            head_weights: self.head_weights.clone(),
        };
        cfg.validate(class_counts.len())?;
        Ok(cfg)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSpec,
    #[serde(default)]
    pub loss: LossSettings,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default = "no_blur")]
    pub blur: BlurSpec,
    pub data: DataConfig,
    pub output_dir: PathBuf,
}

fn no_blur() -> BlurSpec {
    BlurSpec::NONE
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        self.blur.kernel()?;
        if !(self.data.train_fraction > 0.0 && self.data.train_fraction < 1.0) {
            return Err(Error::config(format!(
                "train_fraction must lie in (0, 1), got {}",
                self.data.train_fraction
            )));
        }
        if let DataSource::Gnt(paths) = &self.data.source {
            if paths.is_empty() {
                return Err(Error::config("no GNT files listed"));
            }
        }
        if self.output_dir.as_os_str().is_empty() {
            return Err(Error::config("output_dir is empty"));
        }
        Ok(())
    }
}
