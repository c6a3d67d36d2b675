use std::collections::HashSet;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use navmap_core::eval::HumanScore;
use serde::{Deserialize, Serialize};

use crate::study::Study;
use crate::ServiceError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorTag {
    Incorrect,
    Hallucination,
    Redundancy,
    Linguistic,
}

/// One logged judgement. The log is the source of truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub evaluator_id: String,
    pub episode_id: String,
    pub system_id: String,
    pub label: String,
    pub score: u8,
    pub error_tags: Vec<ErrorTag>,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
}

impl Response {
    fn key(&self) -> (String, String, String) {
        (self.evaluator_id.clone(), self.episode_id.clone(), self.system_id.clone())
    }
}

#[derive(Debug, Default, Clone, PartialEq)]
pub struct Store {
    pub responses: Vec<Response>,
    keys: HashSet<(String, String, String)>,
}

impl Store {
    pub fn contains(&self, evaluator: &str, episode: &str, system: &str) -> bool {
        self.keys.contains(&(evaluator.to_owned(), episode.to_owned(), system.to_owned()))
    }

    /// False when the key was already scored.
    pub fn apply(&mut self, r: Response) -> bool {
        if !self.keys.insert(r.key()) {
            return false;
        }
        self.responses.push(r);
        true
    }

    pub fn export(&self) -> Vec<HumanScore> {
        self.responses
            .iter()
            .map(|r| HumanScore {
                episode_id: r.episode_id.clone(),
                system_id: r.system_id.clone(),
                evaluator_id: r.evaluator_id.clone(),
                score: f64::from(r.score),
            })
            .collect()
    }
}

/// Rebuilds state from the log. Lines that no longer fit the study, or that
/// repeat an earlier key, are skipped with a warning.
pub fn replay(path: &Path, study: &Study) -> Result<Store, ServiceError> {
    let mut store = Store::default();
    if !path.exists() {
        return Ok(store);
    }
    for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let r: Response = serde_json::from_str(&line)
            .map_err(|e| ServiceError::Log(format!("{}:{}: {e}", path.display(), i + 1)))?;
        let fits = study
            .evaluator_index(&r.evaluator_id)
            .is_some_and(|ev| study.label_to_system(ev, &r.label) == Some(r.system_id.as_str()))
            && study.items[&r.evaluator_id].contains(&r.episode_id)
            && r.score <= 10;
        if !fits {
            log::warn!("{}:{}: response does not match the configured study, skipped", path.display(), i + 1);
            continue;
        }
        if !store.apply(r) {
            log::warn!("{}:{}: repeated response, skipped", path.display(), i + 1);
        }
    }
    Ok(store)
}

pub struct Appender {
    file: File,
}

impl Appender {
    pub fn open(path: &Path) -> Result<Self, ServiceError> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self { file })
    }

    pub fn append(&mut self, r: &Response) -> Result<(), ServiceError> {
        let mut line = serde_json::to_string(r).expect("response serializes");
        line.push('\n');
        self.file.write_all(line.as_bytes())?;
        self.file.sync_data()?;
        Ok(())
    }
}
