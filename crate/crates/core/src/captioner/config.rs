use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::CaptionerError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputFlags {
    pub td: bool,
    pub reg: bool,
    pub act: bool,
    pub pano: bool,
}

impl Default for InputFlags {
    fn default() -> Self {
        Self { td: true, reg: false, act: false, pano: false }
    }
}

/// How the fused vector reaches the decoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Conditioning {
    /// One extra token in front of the decoder sequence.
    #[default]
    Prefix,
    /// Decoder blocks cross-attend over the fused vector and the map patches.
    CrossAttention,
}

/// Source of the negatives in the contrastive term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegativeSampling {
    /// Every other instruction in the batch.
    #[default]
    InBatch,
    /// One randomly drawn instruction per example.
    Sampled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CaptionerConfig {
    pub image_size: usize,
    pub patch_size: usize,
    pub hidden_dim: usize,
    pub map_depth: usize,
    pub map_heads: usize,
    pub text_depth: usize,
    pub text_heads: usize,
    pub route_layers: usize,
    pub pano_size: usize,
    pub pano_depth: usize,
    pub pano_mlp_layers: usize,
    pub decoder_depth: usize,
    pub decoder_heads: usize,
    pub ffn_mult: usize,
    /// Longest target instruction in tokens, EOS excluded.
    pub max_len: usize,
    pub max_prompt_len: usize,
    pub contrastive_weight: f64,
    pub temperature: f64,
    pub inputs: InputFlags,
    pub prompt: bool,
    pub contrastive: bool,
    pub conditioning: Conditioning,
    pub negatives: NegativeSampling,
}

impl Default for CaptionerConfig {
    fn default() -> Self {
        Self {
            image_size: 384,
            patch_size: 16,
            hidden_dim: 128,
            map_depth: 1,
            map_heads: 4,
            text_depth: 1,
            text_heads: 4,
            route_layers: 3,
            pano_size: 32,
            pano_depth: 1,
            pano_mlp_layers: 2,
            decoder_depth: 2,
            decoder_heads: 4,
            ffn_mult: 4,
            max_len: 40,
            max_prompt_len: 24,
            contrastive_weight: 0.1,
            temperature: 0.07,
            inputs: InputFlags::default(),
            prompt: false,
            contrastive: false,
            conditioning: Conditioning::Prefix,
            negatives: NegativeSampling::InBatch,
        }
    }
}

impl CaptionerConfig {
    pub fn grid(&self) -> usize {
        self.image_size / self.patch_size
    }

    pub fn num_patches(&self) -> usize {
        self.grid() * self.grid()
    }

    pub fn patch_dim(&self) -> usize {
        self.patch_size * self.patch_size * 3
    }

    pub fn pano_patches(&self) -> usize {
        let n = self.pano_size / self.patch_size;
        n * n
    }

    /// λ actually applied to the contrastive term.
    pub fn effective_contrastive_weight(&self) -> f64 {
        if self.contrastive {
            self.contrastive_weight
        } else {
            0.0
        }
    }

    pub fn variant(&self) -> Result<SystemVariant, CaptionerError> {
        SystemVariant::from_flags(self.inputs, self.prompt, self.contrastive)
    }

    pub fn with_variant(mut self, variant: SystemVariant) -> Self {
        let (inputs, prompt, contrastive) = variant.flags();
        self.inputs = inputs;
        self.prompt = prompt;
        self.contrastive = contrastive;
        self
    }

    pub fn validate(&self) -> Result<(), CaptionerError> {
        let bad = |msg: String| Err(CaptionerError::InvalidConfig(msg));
        if self.patch_size == 0 || self.image_size == 0 || self.image_size % self.patch_size != 0 {
            return bad(format!(
                "image_size {} must be a positive multiple of patch_size {}",
                self.image_size, self.patch_size
            ));
        }
        if self.pano_size == 0 || self.pano_size % self.patch_size != 0 {
            return bad(format!("pano_size {} must be a positive multiple of patch_size {}", self.pano_size, self.patch_size));
        }
        if self.hidden_dim == 0 {
            return bad("hidden_dim must be positive".into());
        }
        for (name, heads) in [
            ("map_heads", self.map_heads),
            ("text_heads", self.text_heads),
            ("decoder_heads", self.decoder_heads),
        ] {
            if heads == 0 || self.hidden_dim % heads != 0 {
                return bad(format!("{name} {heads} must divide hidden_dim {}", self.hidden_dim));
            }
        }
        if self.route_layers == 0 {
            return bad("route_layers must be at least 1".into());
        }
        if self.pano_mlp_layers == 0 {
            return bad("pano_mlp_layers must be at least 1".into());
        }
        if self.decoder_depth == 0 {
            return bad("decoder_depth must be at least 1".into());
        }
        if self.ffn_mult == 0 || self.max_len == 0 {
            return bad("ffn_mult and max_len must be positive".into());
        }
        if !(self.contrastive_weight >= 0.0 && self.contrastive_weight.is_finite()) {
            return bad(format!("contrastive_weight must be finite and >= 0, got {}", self.contrastive_weight));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return bad(format!("temperature must be positive, got {}", self.temperature));
        }
        self.variant()?;
        Ok(())
    }
}

/// The nine input/prompt/contrastive combinations that make up the
/// experiment grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SystemVariant {
    #[serde(rename = "TD")]
    Td,
    #[serde(rename = "TD+P")]
    TdP,
    #[serde(rename = "TD+P+C")]
    TdPC,
    #[serde(rename = "TD+Reg+Act")]
    TdRegAct,
    #[serde(rename = "TD+Reg+Act+P")]
    TdRegActP,
    #[serde(rename = "TD+Reg+Act+P+C")]
    TdRegActPC,
    #[serde(rename = "TD+Reg+Act+Pano")]
    TdRegActPano,
    #[serde(rename = "TD+Reg+Act+Pano+P")]
    TdRegActPanoP,
    #[serde(rename = "TD+Reg+Act+Pano+P+C")]
    TdRegActPanoPC,
}

impl SystemVariant {
    pub const ALL: [SystemVariant; 9] = [
        SystemVariant::Td,
        SystemVariant::TdP,
        SystemVariant::TdPC,
        SystemVariant::TdRegAct,
        SystemVariant::TdRegActP,
        SystemVariant::TdRegActPC,
        SystemVariant::TdRegActPano,
        SystemVariant::TdRegActPanoP,
        SystemVariant::TdRegActPanoPC,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SystemVariant::Td => "TD",
            SystemVariant::TdP => "TD+P",
            SystemVariant::TdPC => "TD+P+C",
            SystemVariant::TdRegAct => "TD+Reg+Act",
            SystemVariant::TdRegActP => "TD+Reg+Act+P",
            SystemVariant::TdRegActPC => "TD+Reg+Act+P+C",
            SystemVariant::TdRegActPano => "TD+Reg+Act+Pano",
            SystemVariant::TdRegActPanoP => "TD+Reg+Act+Pano+P",
            SystemVariant::TdRegActPanoPC => "TD+Reg+Act+Pano+P+C",
        }
    }

    /// (inputs, prompt, contrastive)
    pub fn flags(self) -> (InputFlags, bool, bool) {
        let idx = Self::ALL.iter().position(|&v| v == self).expect("listed");
        let inputs = match idx / 3 {
            0 => InputFlags { td: true, reg: false, act: false, pano: false },
            1 => InputFlags { td: true, reg: true, act: true, pano: false },
            _ => InputFlags { td: true, reg: true, act: true, pano: true },
        };
        (inputs, idx % 3 >= 1, idx % 3 == 2)
    }

    pub fn from_flags(inputs: InputFlags, prompt: bool, contrastive: bool) -> Result<Self, CaptionerError> {
        Self::ALL
            .into_iter()
            .find(|v| v.flags() == (inputs, prompt, contrastive))
            .ok_or_else(|| {
                CaptionerError::InvalidConfig(format!(
                    "inputs {{td: {}, reg: {}, act: {}, pano: {}}} with prompt={prompt} contrastive={contrastive} \
                     is not one of the nine variants: {}",
                    inputs.td,
                    inputs.reg,
                    inputs.act,
                    inputs.pano,
                    Self::ALL.map(|v| v.name()).join(", ")
                ))
            })
    }
}

impl fmt::Display for SystemVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SystemVariant {
    type Err = CaptionerError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.replace(' ', "").to_ascii_lowercase();
        Self::ALL
            .into_iter()
            .find(|v| v.name().to_ascii_lowercase() == key)
            .ok_or_else(|| {
                CaptionerError::InvalidConfig(format!(
                    "unknown variant `{s}`; expected one of {}",
                    Self::ALL.map(|v| v.name()).join(", ")
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub val_batch_size: usize,
    pub weight_decay: f64,
    /// Global gradient-norm clip; `None` disables clipping.
    pub grad_clip: Option<f64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 25,
            learning_rate: 5e-5,
            batch_size: 32,
            val_batch_size: 64,
            weight_decay: 0.0,
            grad_clip: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), CaptionerError> {
        if self.epochs == 0 || self.batch_size == 0 || self.val_batch_size == 0 {
            return Err(CaptionerError::InvalidConfig("epochs and batch sizes must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(CaptionerError::InvalidConfig(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if self.weight_decay < 0.0 || self.grad_clip.is_some_and(|c| c <= 0.0) {
            return Err(CaptionerError::InvalidConfig("weight_decay must be >= 0 and grad_clip > 0".into()));
        }
        Ok(())
    }
}
