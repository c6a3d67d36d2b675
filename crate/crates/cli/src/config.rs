use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use navmap_core::captioner::{CaptionerConfig, DecodeOptions, SystemVariant, TrainConfig};
use navmap_core::dataset::DatasetSpec;
use navmap_core::eval::PermutationOptions;
use navmap_core::map::EpisodeOptions;
use navmap_core::scene::SynthSpec;
use navmap_core::Split;
use serde::{Deserialize, Serialize};

/// Validation failure in the configuration or flags; exits with code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn invalid(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    /// Hand-authored scenes; when set together with `paths_file`, replaces
    /// synthetic generation.
    pub scenes_dir: Option<PathBuf>,
    pub paths_file: Option<PathBuf>,
    pub scenes: usize,
    pub unseen_scenes: usize,
    pub val_seen_every: usize,
    pub synth: SynthSpec,
    pub episode: EpisodeOptions,
}

impl Default for DatasetSection {
    fn default() -> Self {
        let d = DatasetSpec::default();
        Self {
            scenes_dir: None,
            paths_file: None,
            scenes: d.scenes,
            unseen_scenes: d.unseen_scenes,
            val_seen_every: d.val_seen_every,
            synth: d.synth,
            episode: d.episode,
        }
    }
}

impl DatasetSection {
    pub fn spec(&self) -> DatasetSpec {
        DatasetSpec {
            scenes: self.scenes,
            unseen_scenes: self.unseen_scenes,
            val_seen_every: self.val_seen_every,
            synth: self.synth.clone(),
            episode: self.episode.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    PropF1,
    Bleu,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateSection {
    pub metric: Metric,
    /// Per-example scores from an external tool, used instead of `metric`.
    pub imported_scores: Option<PathBuf>,
    pub baseline: Option<String>,
    pub human_scores: Option<PathBuf>,
    pub permutation: PermutationOptions,
}

impl Default for EvaluateSection {
    fn default() -> Self {
        Self {
            metric: Metric::PropF1,
            imported_scores: None,
            baseline: None,
            human_scores: None,
            permutation: PermutationOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServeSection {
    pub addr: SocketAddr,
    pub evaluators: Vec<String>,
    pub items_per_evaluator: usize,
    /// Defaults to every file under `<run_dir>/generations`.
    pub generations: Vec<PathBuf>,
    /// Defaults to `<run_dir>/human/responses.jsonl`.
    pub log: Option<PathBuf>,
}

impl Default for ServeSection {
    fn default() -> Self {
        Self {
            addr: SocketAddr::from(([127, 0, 0, 1], 8080)),
            evaluators: (1..=5).map(|i| format!("evaluator{i}")).collect(),
            items_per_evaluator: 15,
            generations: Vec::new(),
            log: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Required, from the file or `--seed`.
    pub seed: Option<u64>,
    pub run_dir: PathBuf,
    /// Systems trained by `run`; `train`/`generate` default to the first.
    pub variants: Vec<SystemVariant>,
    /// Splits decoded by `generate`.
    pub eval_splits: Vec<Split>,
    pub dataset: DatasetSection,
    pub model: CaptionerConfig,
    pub train: TrainConfig,
    pub decode: DecodeOptions,
    pub evaluate: EvaluateSection,
    pub serve: ServeSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: None,
            run_dir: PathBuf::from("run"),
            variants: vec![SystemVariant::Td],
            eval_splits: vec![Split::ValSeen, Split::ValUnseen],
            dataset: DatasetSection::default(),
            model: CaptionerConfig::default(),
            train: TrainConfig::default(),
            decode: DecodeOptions::default(),
            evaluate: EvaluateSection::default(),
            serve: ServeSection::default(),
        }
    }
}

impl RunConfig {
    /// Relative paths in the file are resolved against the file's directory.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        let mut cfg: RunConfig = toml::from_str(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut cfg.run_dir);
        cfg.dataset.scenes_dir.as_mut().map(fix);
        cfg.dataset.paths_file.as_mut().map(fix);
        cfg.evaluate.imported_scores.as_mut().map(fix);
        cfg.evaluate.human_scores.as_mut().map(fix);
        cfg.serve.generations.iter_mut().for_each(fix);
        cfg.serve.log.as_mut().map(fix);
        Ok(cfg)
    }

    pub fn seed(&self) -> u64 {
        self.seed.expect("validated")
    }

    /// Model config for `variant`, with the flag set checked against the grid.
    pub fn model_for(&self, variant: SystemVariant) -> anyhow::Result<CaptionerConfig> {
        let cfg = self.model.clone().with_variant(variant);
        cfg.validate().map_err(|e| invalid(e.to_string()))?;
        if cfg.image_size != self.dataset.episode.target_size {
            return Err(invalid(format!(
                "model.image_size = {} but dataset.episode.target_size = {}; they must match",
                cfg.image_size, self.dataset.episode.target_size
            )));
        }
        if variant.flags().0.pano && !self.dataset.episode.panoramas {
            return Err(invalid(format!("variant {variant} needs dataset.episode.panoramas = true")));
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.seed.is_none() {
            return Err(invalid("a seed is required: set `seed` in the config file or pass --seed"));
        }
        if self.variants.is_empty() {
            return Err(invalid("`variants` must list at least one system"));
        }
        // the file may also set model.inputs/prompt/contrastive directly
        self.model.variant().map_err(|e| invalid(e.to_string()))?;
        for &v in &self.variants {
            self.model_for(v)?;
        }
        self.train.validate().map_err(|e| invalid(e.to_string()))?;
        if self.dataset.scenes_dir.is_some() != self.dataset.paths_file.is_some() {
            return Err(invalid("dataset.scenes_dir and dataset.paths_file must be given together"));
        }
        if self.decode.beam_width == 0 {
            return Err(invalid("decode.beam_width must be at least 1"));
        }
        Ok(())
    }

    pub fn dataset_dir(&self) -> PathBuf {
        self.run_dir.join("dataset")
    }

    pub fn model_dir(&self, variant: SystemVariant) -> PathBuf {
        self.run_dir.join("models").join(slug(variant))
    }

    pub fn generations_dir(&self) -> PathBuf {
        self.run_dir.join("generations")
    }

    pub fn generations_file(&self, variant: SystemVariant) -> PathBuf {
        self.generations_dir().join(format!("{}.jsonl", slug(variant)))
    }

    pub fn eval_dir(&self) -> PathBuf {
        self.run_dir.join("eval")
    }
}

/// `TD+Reg+Act+P` → `td_reg_act_p`
pub fn slug(v: SystemVariant) -> String {
    v.name().to_lowercase().replace('+', "_")
}
