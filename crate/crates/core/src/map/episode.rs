use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::palette;
use crate::prompt::{build_prompt_for_path, PromptTemplate, DEFAULT_NEAR_THRESHOLD};
use crate::scene::{Episode, NavPath, Point2, Scene, Split};

use super::geometry::{assign_regions, classify_actions};
use super::raster::{self, mask_map, pad_and_resize_to, path_pixels, rasterize, SemanticMap};
use super::MapError;

/// Side length of the per-point view images, in pixels.
pub const PANORAMA_SIZE: usize = 32;
/// World extent covered by one view image, in meters.
const PANORAMA_WINDOW_M: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpisodeOptions {
    pub resolution: f64,
    pub mask_radius: f64,
    pub pad_size: usize,
    pub target_size: usize,
    pub panoramas: bool,
    pub near_threshold: f64,
    pub prompt: PromptTemplate,
}

impl Default for EpisodeOptions {
    fn default() -> Self {
        Self {
            resolution: raster::DEFAULT_RESOLUTION,
            mask_radius: raster::DEFAULT_MASK_RADIUS,
            pad_size: raster::PAD_SIZE,
            target_size: raster::TARGET_SIZE,
            panoramas: false,
            near_threshold: DEFAULT_NEAR_THRESHOLD,
            prompt: PromptTemplate::default(),
        }
    }
}

/// A small top-down view centered on `point`, cut from the unmasked map.
/// Stands in for the simulator's panoramic capture.
pub fn render_panorama(full: &SemanticMap, point: Point2) -> SemanticMap {
    let (cx, cy) = full.world_to_pixel(point);
    let window = PANORAMA_WINDOW_M / full.resolution;
    let step = window / PANORAMA_SIZE as f64;
    let origin = Point2::new(point.x - PANORAMA_WINDOW_M / 2.0, point.y + PANORAMA_WINDOW_M / 2.0);
    let mut out = SemanticMap::filled(PANORAMA_SIZE, PANORAMA_SIZE, palette::NONNAVIGABLE, full.resolution * step, origin);
    for r in 0..PANORAMA_SIZE {
        let sy = cy - window / 2.0 + (r as f64 + 0.5) * step;
        for c in 0..PANORAMA_SIZE {
            let sx = cx - window / 2.0 + (c as f64 + 0.5) * step;
            if sx >= 0.0 && sy >= 0.0 && (sx as usize) < full.width() && (sy as usize) < full.height() {
                out.set(c, r, full.get(sx as usize, sy as usize));
            }
        }
    }
    out
}

/// Runs filter → rasterize → mask → pad/resize, labels every point, and
/// writes the map (and optional view images) under `out_dir`.
#[allow(clippy::too_many_arguments)]
pub fn build_episode_with_map(
    scene: &Scene,
    path: &NavPath,
    references: &[String],
    id: &str,
    split: Split,
    out_dir: &Path,
    opts: &EpisodeOptions,
) -> Result<(Episode, SemanticMap), MapError> {
    let actions = classify_actions(path)?;
    if references.is_empty() {
        return Err(MapError::InvalidPath(format!("episode `{id}` has no reference instruction")));
    }
    let full = rasterize(scene, path, opts.resolution)?;
    let seeds = path_pixels(&full, path);
    let masked = mask_map(&full, &seeds, opts.mask_radius)?;
    let model_map = pad_and_resize_to(&masked, opts.pad_size, opts.target_size)?;

    let maps_dir = out_dir.join("maps");
    fs::create_dir_all(&maps_dir)?;
    let map_rel = format!("maps/{id}.png");
    model_map.save_png(out_dir.join(&map_rel))?;

    let panorama_paths = if opts.panoramas {
        let pano_dir = out_dir.join("panoramas");
        fs::create_dir_all(&pano_dir)?;
        let mut rels = Vec::with_capacity(path.len());
        for (k, &p) in path.points.iter().enumerate() {
            let rel = format!("panoramas/{id}_{k:02}.png");
            render_panorama(&full, p).save_png(out_dir.join(&rel))?;
            rels.push(rel);
        }
        Some(rels)
    } else {
        None
    };

    let point_regions: Vec<Vec<String>> = path.points.iter().map(|&p| assign_regions(p, &scene.regions)).collect();
    let prompt = build_prompt_for_path(&opts.prompt, scene, path, &point_regions[0], opts.near_threshold);
    let episode = Episode {
        id: id.to_owned(),
        scene_id: scene.id.clone(),
        split,
        path: path.clone(),
        map_image_path: map_rel,
        point_regions,
        actions,
        prompt,
        references: references.to_vec(),
        panorama_paths,
    };
    Ok((episode, model_map))
}

pub fn build_episode(
    scene: &Scene,
    path: &NavPath,
    references: &[String],
    id: &str,
    split: Split,
    out_dir: &Path,
    opts: &EpisodeOptions,
) -> Result<Episode, MapError> {
    build_episode_with_map(scene, path, references, id, split, out_dir, opts).map(|(e, _)| e)
}
