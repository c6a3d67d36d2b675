use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::PathBuf;

use navmap_core::eval::Generation;
use navmap_core::{Episode, LatinSquare};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ServiceError;

pub const LABELS: [&str; 26] = [
    "A", "B", "C", "D", "E", "F", "G", "H", "I", "J", "K", "L", "M", "N", "O", "P", "Q", "R", "S", "T", "U", "V", "W",
    "X", "Y", "Z",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    /// Directory holding `episodes.jsonl` plus `maps/` and `panoramas/`.
    pub dataset_dir: PathBuf,
    #[serde(default = "default_episodes_file")]
    pub episodes_file: String,
    /// One or more generations JSONL files; every system must cover the same episodes.
    pub generations: Vec<PathBuf>,
    pub evaluators: Vec<String>,
    #[serde(default = "default_items")]
    pub items_per_evaluator: usize,
    #[serde(default)]
    pub seed: u64,
    pub log: PathBuf,
}

fn default_episodes_file() -> String {
    navmap_core::dataset::EPISODES_FILE.to_owned()
}

fn default_items() -> usize {
    15
}

/// Everything fixed at startup: who sees what, in which order.
#[derive(Debug, Clone)]
pub struct Study {
    pub systems: Vec<String>,
    pub square: LatinSquare,
    pub evaluators: Vec<String>,
    /// evaluator → assigned episode ids in presentation order
    pub items: HashMap<String, Vec<String>>,
    pub episodes: HashMap<String, Episode>,
    texts: HashMap<(String, String), String>,
}

impl Study {
    pub fn new(
        episodes: Vec<Episode>,
        generations: &[Generation],
        evaluators: Vec<String>,
        items_per_evaluator: usize,
        seed: u64,
    ) -> Result<Self, ServiceError> {
        let mut systems: Vec<String> = Vec::new();
        let mut texts = HashMap::new();
        let mut covered: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
        for g in generations {
            if !systems.contains(&g.system_id) {
                systems.push(g.system_id.clone());
            }
            covered.entry(&g.system_id).or_default().insert(&g.episode_id);
            if texts.insert((g.system_id.clone(), g.episode_id.clone()), g.text.clone()).is_some() {
                return Err(ServiceError::Config(format!(
                    "system {} has two generations for episode {}",
                    g.system_id, g.episode_id
                )));
            }
        }
        if systems.is_empty() {
            return Err(ServiceError::Config("no generations configured".into()));
        }
        if systems.len() > LABELS.len() {
            return Err(ServiceError::Config(format!("at most {} systems can be labeled", LABELS.len())));
        }
        if evaluators.is_empty() || items_per_evaluator == 0 {
            return Err(ServiceError::Config("need at least one evaluator and one item each".into()));
        }
        let unique: BTreeSet<&String> = evaluators.iter().collect();
        if unique.len() != evaluators.len() {
            return Err(ServiceError::Config("evaluator ids must be unique".into()));
        }

        let mut pool: Vec<String> = episodes
            .iter()
            .filter(|e| covered.values().all(|set| set.contains(e.id.as_str())))
            .map(|e| e.id.clone())
            .collect();
        if pool.len() < items_per_evaluator {
            return Err(ServiceError::Config(format!(
                "only {} episodes are covered by every system, {} needed per evaluator",
                pool.len(),
                items_per_evaluator
            )));
        }
        let square = LatinSquare::random(systems.len(), seed).expect("non-empty");
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        pool.shuffle(&mut rng);
        // consecutive windows, wrapping when evaluators outnumber disjoint slices
        let items = evaluators
            .iter()
            .enumerate()
            .map(|(i, ev)| {
                let ids = (0..items_per_evaluator).map(|j| pool[(i * items_per_evaluator + j) % pool.len()].clone());
                (ev.clone(), ids.collect())
            })
            .collect();
        let episodes = episodes.into_iter().map(|e| (e.id.clone(), e)).collect();
        Ok(Self { systems, square, evaluators, items, episodes, texts })
    }

    pub fn evaluator_index(&self, evaluator: &str) -> Option<usize> {
        self.evaluators.iter().position(|e| e == evaluator)
    }

    /// System indices in presentation order for one evaluator.
    pub fn order(&self, evaluator_index: usize) -> &[usize] {
        &self.square.rows[evaluator_index % self.square.n()]
    }

    pub fn label_to_system(&self, evaluator_index: usize, label: &str) -> Option<&str> {
        let pos = LABELS[..self.systems.len()].iter().position(|l| *l == label)?;
        Some(&self.systems[self.order(evaluator_index)[pos]])
    }

    pub fn text(&self, system: &str, episode: &str) -> &str {
        &self.texts[&(system.to_owned(), episode.to_owned())]
    }
}
