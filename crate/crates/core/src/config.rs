//! Model, training and data configuration.
//!
//! Configuration files are flat `key = value` TOML; every key is optional and
//! falls back to the defaults below. Command-line flags override file values.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Decoder stage whose output feeds the knowledge buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "lowercase")]
pub enum FeedbackNode {
    D0,
    D1,
    D2,
    D3,
    D4,
}

impl FeedbackNode {
    pub const ALL: [FeedbackNode; 5] = [Self::D0, Self::D1, Self::D2, Self::D3, Self::D4];

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    /// Knowledge-guided cross-attention fusion with the feedback loop active.
    Fbl,
    /// Same fusion pipeline with a uniform attention grid in place of the knowledge.
    NoFbl,
    Add,
    Cat,
}

impl FusionMode {
    pub const ALL: [FusionMode; 4] = [Self::Cat, Self::Add, Self::NoFbl, Self::Fbl];

    pub fn uses_knowledge(self) -> bool {
        self == FusionMode::Fbl
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderMode {
    Cnn,
    Trans,
    Both,
}

impl EncoderMode {
    pub const ALL: [EncoderMode; 3] = [Self::Cnn, Self::Trans, Self::Both];

    pub fn uses_cnn(self) -> bool {
        self != EncoderMode::Trans
    }

    pub fn uses_trans(self) -> bool {
        self != EncoderMode::Cnn
    }
}

macro_rules! impl_text_enum {
    ($ty:ty, $( $variant:path => $text:literal ),+ $(,)?) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                let s = match self { $( $variant => $text, )+ };
                f.write_str(s)
            }
        }

        impl FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s.trim().to_ascii_lowercase().as_str() {
                    $( $text => Ok($variant), )+
                    other => Err(Error::Config(format!(
                        "unknown {} `{other}`", stringify!($ty)
                    ))),
                }
            }
        }
    };
}

impl_text_enum!(FeedbackNode,
    FeedbackNode::D0 => "d0",
    FeedbackNode::D1 => "d1",
    FeedbackNode::D2 => "d2",
    FeedbackNode::D3 => "d3",
    FeedbackNode::D4 => "d4",
);
impl_text_enum!(FusionMode,
    FusionMode::Fbl => "fbl",
    FusionMode::NoFbl => "no_fbl",
    FusionMode::Add => "add",
    FusionMode::Cat => "cat",
);
impl_text_enum!(EncoderMode,
    EncoderMode::Cnn => "cnn",
    EncoderMode::Trans => "trans",
    EncoderMode::Both => "both",
);

/// Architecture and loss configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Square input side in pixels; divisible by 32.
    pub input_side: usize,
    /// Channel width of the first stages; divisible by 4.
    pub base_width: usize,
    pub feedback_node: FeedbackNode,
    pub fusion_mode: FusionMode,
    pub encoder_mode: EncoderMode,
    /// Weight of the KL term in the loss.
    pub mu: f64,
    /// Weight of the NSS term in the loss.
    pub eta: f64,
    /// Weight of the CC term in the loss.
    pub xi: f64,
    pub epsilon_kl: f64,
    /// Fixations are the pixels at or above this fraction of the map maximum.
    pub fixation_threshold: f64,
    pub seed: u64,
    /// Residual blocks per CNN stage.
    pub cnn_blocks: usize,
    /// Windowed-attention blocks per transformer stage.
    pub trans_blocks: usize,
    /// Largest attention window; each stage uses the largest divisor of its side not above this.
    pub max_window: usize,
    /// Channels per attention head in the transformer pathway.
    pub head_dim: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            input_side: 224,
            base_width: 64,
            feedback_node: FeedbackNode::D2,
            fusion_mode: FusionMode::Fbl,
            encoder_mode: EncoderMode::Both,
            mu: 1.0,
            eta: 0.1,
            xi: 0.1,
            epsilon_kl: 1e-7,
            fixation_threshold: 0.75,
            seed: 0,
            cnn_blocks: 1,
            trans_blocks: 1,
            max_window: 7,
            head_dim: 32,
        }
    }
}

impl ModelConfig {
    /// Desk-scale configuration with the given resolution and width.
    pub fn with_scale(input_side: usize, base_width: usize) -> Self {
        ModelConfig {
            input_side,
            base_width,
            ..ModelConfig::default()
        }
    }
}

/// Checks every configuration invariant and hands the config back unchanged.
pub fn validate_config(cfg: ModelConfig) -> Result<ModelConfig> {
    let s = cfg.input_side;
    if s == 0 || s % 32 != 0 {
        return Err(Error::Config(format!(
            "input_side {s} must be a positive multiple of 32"
        )));
    }
    let w = cfg.base_width;
    if w == 0 || w % 4 != 0 {
        return Err(Error::Config(format!(
            "base_width {w} must be a positive multiple of 4"
        )));
    }
    for (name, v) in [("mu", cfg.mu), ("eta", cfg.eta), ("xi", cfg.xi)] {
        if !v.is_finite() || v < 0.0 {
            return Err(Error::Config(format!("loss weight {name}={v} must be >= 0")));
        }
    }
    let t = cfg.fixation_threshold;
    if !(t > 0.0 && t <= 1.0) {
        return Err(Error::Config(format!(
            "fixation_threshold {t} must lie in (0, 1]"
        )));
    }
    if !(cfg.epsilon_kl > 0.0 && cfg.epsilon_kl.is_finite()) {
        return Err(Error::Config("epsilon_kl must be positive".into()));
    }
    if cfg.cnn_blocks == 0 || cfg.trans_blocks == 0 {
        return Err(Error::Config("each stage needs at least one block".into()));
    }
    if cfg.max_window == 0 || cfg.head_dim == 0 {
        return Err(Error::Config("max_window and head_dim must be positive".into()));
    }
    Ok(cfg)
}

/// Optimiser and schedule settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub steps: u64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Run validation every this many steps (0 disables periodic validation).
    pub validate_every: u64,
    pub shuffle: bool,
    pub auc_borji_splits: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 2000,
            batch_size: 8,
            learning_rate: 1e-4,
            weight_decay: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            validate_every: 200,
            shuffle: true,
            auc_borji_splits: 100,
        }
    }
}

/// Synthetic scene generator parameters (also used to describe held-out sets).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_train: usize,
    pub n_val: usize,
    pub n_blobs: usize,
    /// Blob radius range as a fraction of the image side.
    pub blob_radius_min: f64,
    pub blob_radius_max: f64,
    pub frames_per_clip: usize,
    pub data_seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_train: 500,
            n_val: 100,
            n_blobs: 3,
            blob_radius_min: 0.06,
            blob_radius_max: 0.12,
            frames_per_clip: 10,
            data_seed: 1,
        }
    }
}

/// Everything a run needs, read from one flat config file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(flatten)]
    pub model: ModelConfig,
    #[serde(flatten)]
    pub train: TrainConfig,
    #[serde(flatten)]
    pub synth: SynthConfig,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("config file: {e}")))?;
        validate_config(cfg.model.clone())?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes to toml")
    }
}
