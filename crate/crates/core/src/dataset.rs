//! Corpus assembly: scenes plus paths in, episode JSONL plus PNGs out.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::map::{build_episode_with_map, EpisodeOptions, MapError, SemanticMap};
use crate::palette::Palette;
use crate::scene::{
    generate_synthetic_scene, load_scene, save_scene, write_episodes, Episode, NavPath, Scene, SceneError, Split,
    SynthSpec,
};

pub const EPISODES_FILE: &str = "episodes.jsonl";

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error("{origin}: {message}")]
    Paths { origin: String, message: String },
    #[error("invalid dataset spec: {0}")]
    Spec(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSpec {
    pub scenes: usize,
    /// The last `unseen_scenes` scenes go entirely to val_unseen.
    pub unseen_scenes: usize,
    /// Every n-th path of a seen scene goes to val_seen; 0 disables.
    pub val_seen_every: usize,
    pub synth: SynthSpec,
    pub episode: EpisodeOptions,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self { scenes: 10, unseen_scenes: 2, val_seen_every: 5, synth: SynthSpec::default(), episode: EpisodeOptions::default() }
    }
}

/// Corpus statistics in the shape of the usual per-split table.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitStats {
    pub size: usize,
    pub avg_points: f64,
    /// Distinct regions visited along the path.
    pub avg_regions: f64,
    /// Distinct object categories visible in the model map.
    pub avg_objects: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub episodes: usize,
    pub splits: BTreeMap<String, SplitStats>,
}

impl DatasetSummary {
    pub fn render_table(&self) -> String {
        let mut out = format!("{:<12}{:>6}{:>14}{:>15}{:>15}\n", "split", "size", "avg #points", "avg #regions", "avg #objects");
        for (name, s) in &self.splits {
            out.push_str(&format!(
                "{name:<12}{:>6}{:>14.2}{:>15.2}{:>15.2}\n",
                s.size, s.avg_points, s.avg_regions, s.avg_objects
            ));
        }
        out
    }
}

pub fn distinct_regions(episode: &Episode) -> usize {
    episode.point_regions.iter().flatten().collect::<BTreeSet<_>>().len()
}

pub fn object_types_in_map(map: &SemanticMap) -> usize {
    let pal = Palette::standard();
    let colors: BTreeSet<_> = map.pixels().iter().copied().collect();
    colors.into_iter().filter_map(|c| pal.name(c)).filter(|n| !n.starts_with('[')).count()
}

fn summarize(rows: &[(Episode, usize)]) -> DatasetSummary {
    let mut acc: BTreeMap<String, (usize, f64, f64, f64)> = BTreeMap::new();
    for (e, objects) in rows {
        let a = acc.entry(e.split.as_str().to_owned()).or_default();
        a.0 += 1;
        a.1 += e.path.len() as f64;
        a.2 += distinct_regions(e) as f64;
        a.3 += *objects as f64;
    }
    let splits = acc
        .into_iter()
        .map(|(k, (n, p, r, o))| {
            let n_f = n as f64;
            (k, SplitStats { size: n, avg_points: p / n_f, avg_regions: r / n_f, avg_objects: o / n_f })
        })
        .collect();
    DatasetSummary { episodes: rows.len(), splits }
}

fn write_outputs(out_dir: &Path, episodes: &[Episode]) -> Result<(), DatasetError> {
    let mut w = BufWriter::new(File::create(out_dir.join(EPISODES_FILE))?);
    write_episodes(&mut w, episodes)?;
    w.flush()?;
    Ok(())
}

/// Generates `spec.scenes` synthetic scenes from `seed` and builds every path.
/// Output: `scenes/*.json`, `maps/*.png`, optional `panoramas/`, `episodes.jsonl`.
pub fn build_synthetic_dataset(
    seed: u64,
    spec: &DatasetSpec,
    out_dir: &Path,
) -> Result<(Vec<Episode>, DatasetSummary), DatasetError> {
    if spec.scenes == 0 {
        return Err(DatasetError::Spec("scenes must be at least 1".into()));
    }
    if spec.unseen_scenes >= spec.scenes && spec.scenes > 1 {
        return Err(DatasetError::Spec("at least one scene must remain for training".into()));
    }
    fs::create_dir_all(out_dir.join("scenes"))?;
    let mut rows = Vec::new();
    for i in 0..spec.scenes {
        let scene_seed = seed.wrapping_mul(1_000_003).wrapping_add(i as u64);
        let synth = generate_synthetic_scene(scene_seed, &spec.synth)?;
        let mut scene = synth.scene;
        scene.id = format!("scene_{i:03}");
        save_scene(&scene, out_dir.join("scenes").join(format!("{}.json", scene.id)))?;
        let unseen = spec.scenes > 1 && i >= spec.scenes - spec.unseen_scenes;
        for (j, (path, refs)) in synth.paths.iter().zip(&synth.references).enumerate() {
            let split = if unseen {
                Split::ValUnseen
            } else if spec.val_seen_every > 0 && j % spec.val_seen_every == spec.val_seen_every - 1 {
                Split::ValSeen
            } else {
                Split::Train
            };
            let id = format!("{}_{j:03}", scene.id);
            let (ep, map) = build_episode_with_map(&scene, path, refs, &id, split, out_dir, &spec.episode)?;
            rows.push((ep, object_types_in_map(&map)));
        }
    }
    let summary = summarize(&rows);
    let episodes: Vec<Episode> = rows.into_iter().map(|(e, _)| e).collect();
    write_outputs(out_dir, &episodes)?;
    Ok((episodes, summary))
}

/// One line of a paths file for hand-authored scenes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathRecord {
    pub id: String,
    pub scene_id: String,
    #[serde(default = "default_split")]
    pub split: Split,
    pub path: NavPath,
    pub references: Vec<String>,
}

fn default_split() -> Split {
    Split::Train
}

pub fn read_path_records(path: &Path) -> Result<Vec<PathRecord>, DatasetError> {
    let origin = path.display().to_string();
    let mut out = Vec::new();
    for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line)
            .map_err(|e| DatasetError::Paths { origin: format!("{origin}:{}", i + 1), message: e.to_string() })?;
        out.push(rec);
    }
    Ok(out)
}

/// Builds episodes for hand-authored scenes: every `*.json` in `scenes_dir`
/// is a scene, and `records` reference them by id.
pub fn build_dataset_from_paths(
    scenes_dir: &Path,
    records: &[PathRecord],
    opts: &EpisodeOptions,
    out_dir: &Path,
) -> Result<(Vec<Episode>, DatasetSummary), DatasetError> {
    let mut scenes: BTreeMap<String, Scene> = BTreeMap::new();
    let mut files: Vec<_> = fs::read_dir(scenes_dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    for f in files {
        let s = load_scene(&f)?;
        scenes.insert(s.id.clone(), s);
    }
    fs::create_dir_all(out_dir)?;
    let mut seen = BTreeSet::new();
    let mut rows = Vec::new();
    for r in records {
        if !seen.insert(r.id.as_str()) {
            return Err(DatasetError::Spec(format!("duplicate episode id `{}`", r.id)));
        }
        let scene = scenes.get(&r.scene_id).ok_or_else(|| {
            DatasetError::Spec(format!(
                "episode `{}` refers to scene `{}`, not found in {}",
                r.id,
                r.scene_id,
                scenes_dir.display()
            ))
        })?;
        let (ep, map) = build_episode_with_map(scene, &r.path, &r.references, &r.id, r.split, out_dir, opts)?;
        rows.push((ep, object_types_in_map(&map)));
    }
    let summary = summarize(&rows);
    let episodes: Vec<Episode> = rows.into_iter().map(|(e, _)| e).collect();
    write_outputs(out_dir, &episodes)?;
    Ok((episodes, summary))
}
