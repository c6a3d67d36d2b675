use std::path::Path;

use crate::map::SemanticMap;
use crate::prompt::PromptTemplate;
use crate::scene::Episode;

use super::graph::{Mat, SparseRows};
use super::vocab::{tokenize, Vocabulary};
use super::{CaptionerConfig, CaptionerError};

/// Non-black patches of a square image, flattened row-major with RGB
/// interleaved, kept as bytes until a forward pass needs them.
#[derive(Debug, Clone, PartialEq)]
pub struct Patches {
    pub n_patches: usize,
    pub patch_dim: usize,
    pub rows: Vec<usize>,
    pub pixels: Vec<u8>,
}

impl Patches {
    pub fn from_map(map: &SemanticMap, size: usize, patch: usize) -> Result<Self, CaptionerError> {
        if map.width() != size || map.height() != size {
            return Err(CaptionerError::ShapeMismatch(format!(
                "expected a {size}x{size} image, got {}x{}",
                map.width(),
                map.height()
            )));
        }
        let grid = size / patch;
        let patch_dim = patch * patch * 3;
        let mut rows = Vec::new();
        let mut pixels = Vec::new();
        let mut buf = Vec::with_capacity(patch_dim);
        for pr in 0..grid {
            for pc in 0..grid {
                buf.clear();
                for y in 0..patch {
                    for x in 0..patch {
                        buf.extend_from_slice(&map.get(pc * patch + x, pr * patch + y));
                    }
                }
                if buf.iter().any(|&v| v != 0) {
                    rows.push(pr * grid + pc);
                    pixels.extend_from_slice(&buf);
                }
            }
        }
        Ok(Self { n_patches: grid * grid, patch_dim, rows, pixels })
    }

    /// Intensities scaled to [0, 1]; black patches stay implicit zeros.
    pub fn to_sparse(&self) -> SparseRows {
        let data = Mat::from_shape_fn((self.rows.len(), self.patch_dim), |(r, c)| {
            f64::from(self.pixels[r * self.patch_dim + c]) / 255.0
        });
        SparseRows { n_rows: self.n_patches, rows: self.rows.clone(), data }
    }
}

/// One (episode, reference) training or evaluation unit in model form.
#[derive(Debug, Clone)]
pub struct Sample {
    pub episode_id: String,
    pub map: Patches,
    /// Token ids of all region names at each point.
    pub regions: Vec<Vec<usize>>,
    pub actions: Vec<usize>,
    pub panoramas: Option<Vec<Patches>>,
    pub prompt: Vec<usize>,
    pub target: Vec<usize>,
    pub references: Vec<String>,
}

/// Words of the training references, prompts and region names plus the
/// prompt template itself.
pub fn build_vocabulary<'a>(train: impl IntoIterator<Item = &'a Episode>, template: &PromptTemplate) -> Vocabulary {
    let mut texts: Vec<String> = vec![template.render(&[], None)];
    for ep in train {
        texts.extend(ep.references.iter().cloned());
        texts.push(ep.prompt.clone());
        texts.extend(ep.point_regions.iter().flatten().cloned());
    }
    Vocabulary::build(texts.iter().map(String::as_str))
}

fn truncate(mut ids: Vec<usize>, max: usize, what: &str, episode: &str) -> Vec<usize> {
    if ids.len() > max {
        log::warn!("episode {episode}: {what} has {} tokens, truncated to {max}", ids.len());
        ids.truncate(max);
    }
    ids
}

/// Builds the model inputs for `episode` with reference `reference` as the
/// target.
pub fn make_sample(
    episode: &Episode,
    reference: usize,
    map: &SemanticMap,
    panoramas: Option<&[SemanticMap]>,
    vocab: &Vocabulary,
    config: &CaptionerConfig,
) -> Result<Sample, CaptionerError> {
    let map = Patches::from_map(map, config.image_size, config.patch_size)?;
    let panoramas = panoramas
        .map(|imgs| {
            imgs.iter()
                .map(|m| Patches::from_map(m, config.pano_size, config.patch_size))
                .collect::<Result<Vec<_>, _>>()
        })
        .transpose()?;
    let regions = episode
        .point_regions
        .iter()
        .map(|names| names.iter().flat_map(|n| tokenize(n)).map(|w| vocab.id(&w)).collect())
        .collect();
    let text = episode.references.get(reference).ok_or_else(|| {
        CaptionerError::InvalidInput(format!("episode {} has no reference #{reference}", episode.id))
    })?;
    Ok(Sample {
        episode_id: episode.id.clone(),
        map,
        regions,
        actions: episode.actions.iter().map(|a| a.index()).collect(),
        panoramas,
        prompt: truncate(vocab.encode(&episode.prompt), config.max_prompt_len, "prompt", &episode.id),
        target: truncate(vocab.encode(text), config.max_len, "reference", &episode.id),
        references: episode.references.clone(),
    })
}

/// Loads the map (and panoramas when the config uses them) referenced by
/// `episode` relative to `dataset_dir`.
pub fn load_sample(
    episode: &Episode,
    reference: usize,
    dataset_dir: &Path,
    vocab: &Vocabulary,
    config: &CaptionerConfig,
) -> Result<Sample, CaptionerError> {
    let map = SemanticMap::load_png(dataset_dir.join(&episode.map_image_path))?;
    let panoramas = if config.inputs.pano {
        let paths = episode.panorama_paths.as_ref().ok_or_else(|| {
            CaptionerError::InvalidInput(format!(
                "episode {} has no panoramas; rebuild the dataset with panoramas enabled",
                episode.id
            ))
        })?;
        Some(
            paths
                .iter()
                .map(|p| SemanticMap::load_png(dataset_dir.join(p)))
                .collect::<Result<Vec<_>, _>>()?,
        )
    } else {
        None
    };
    make_sample(episode, reference, &map, panoramas.as_deref(), vocab, config)
}

/// One sample per reference of every episode.
pub fn load_samples(
    episodes: &[Episode],
    dataset_dir: &Path,
    vocab: &Vocabulary,
    config: &CaptionerConfig,
) -> Result<Vec<Sample>, CaptionerError> {
    let mut out = Vec::new();
    for ep in episodes {
        for r in 0..ep.references.len() {
            out.push(load_sample(ep, r, dataset_dir, vocab, config)?);
        }
    }
    Ok(out)
}
