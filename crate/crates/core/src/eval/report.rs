use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::bleu::sentence_bleu;
use super::io::{ExampleScore, Generation, HumanScore};
use super::propositions::{proposition_f1, Lexicon};
use super::stats::{kendall_tau_b, permutation_test, stars, PermutationOptions};
use super::EvalError;
use crate::scene::Episode;

/// Per-example quality score of one system's output.
pub trait Scorer {
    fn name(&self) -> &str;
    fn score(&self, system_id: &str, episode: &Episode, candidate: &str) -> Result<f64, EvalError>;
}

pub struct PropositionScorer {
    pub lexicon: Lexicon,
}

impl Scorer for PropositionScorer {
    fn name(&self) -> &str {
        "prop-F1"
    }

    fn score(&self, _: &str, episode: &Episode, candidate: &str) -> Result<f64, EvalError> {
        Ok(proposition_f1(candidate, &episode.references, &self.lexicon))
    }
}

pub struct BleuScorer;

impl Scorer for BleuScorer {
    fn name(&self) -> &str {
        "BLEU"
    }

    fn score(&self, _: &str, episode: &Episode, candidate: &str) -> Result<f64, EvalError> {
        Ok(sentence_bleu(candidate, &episode.references))
    }
}

/// Scores computed elsewhere (for example by a full SPICE installation),
/// looked up by (system, episode).
pub struct ImportedScores {
    pub metric: String,
    scores: HashMap<(String, String), f64>,
}

impl ImportedScores {
    pub fn new(metric: impl Into<String>, rows: &[ExampleScore]) -> Self {
        let scores = rows.iter().map(|r| ((r.system_id.clone(), r.episode_id.clone()), r.score)).collect();
        Self { metric: metric.into(), scores }
    }
}

impl Scorer for ImportedScores {
    fn name(&self) -> &str {
        &self.metric
    }

    fn score(&self, system_id: &str, episode: &Episode, _: &str) -> Result<f64, EvalError> {
        self.scores
            .get(&(system_id.to_owned(), episode.id.clone()))
            .copied()
            .ok_or_else(|| EvalError::MissingScore { system: system_id.to_owned(), episode: episode.id.clone() })
    }
}

/// Symmetric matrix of two-sided p-values; the diagonal is 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PValueMatrix {
    pub systems: Vec<String>,
    pub p: Vec<Vec<f64>>,
}

impl PValueMatrix {
    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.systems.iter().position(|s| s == a)?;
        let j = self.systems.iter().position(|s| s == b)?;
        Some(self.p[i][j])
    }
}

pub fn pairwise_p_values(samples: &[(String, Vec<f64>)], opts: &PermutationOptions) -> Result<PValueMatrix, EvalError> {
    let n = samples.len();
    let mut p = vec![vec![1.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let r = permutation_test(&samples[i].1, &samples[j].1, opts)?;
            p[i][j] = r.p_value;
            p[j][i] = r.p_value;
        }
    }
    Ok(PValueMatrix { systems: samples.iter().map(|(s, _)| s.clone()).collect(), p })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemRow {
    pub system_id: String,
    pub n: usize,
    pub mean: f64,
    pub by_split: BTreeMap<String, f64>,
    pub human_mean: Option<f64>,
    pub human_n: usize,
    /// 1 is the best human mean.
    pub human_rank: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metric: String,
    pub baseline: String,
    pub systems: Vec<SystemRow>,
    pub p_values: PValueMatrix,
    pub split_p_values: BTreeMap<String, PValueMatrix>,
    pub human_p_values: Option<PValueMatrix>,
    /// System-level rank correlation of metric means with human means.
    pub kendall_tau: Option<f64>,
    pub examples: Vec<ExampleScore>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalOptions {
    pub permutation: PermutationOptions,
    /// Defaults to the first system in the generations file.
    pub baseline: Option<String>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn evaluate_systems(
    generations: &[Generation],
    episodes: &[Episode],
    scorer: &dyn Scorer,
    human: Option<&[HumanScore]>,
    opts: &EvalOptions,
) -> Result<EvalReport, EvalError> {
    let by_id: HashMap<&str, &Episode> = episodes.iter().map(|e| (e.id.as_str(), e)).collect();
    let mut order: Vec<String> = Vec::new();
    let mut per_system: HashMap<String, BTreeMap<String, &Generation>> = HashMap::new();
    for g in generations {
        if !by_id.contains_key(g.episode_id.as_str()) {
            return Err(EvalError::EpisodeMismatch(format!(
                "system {} has a generation for unknown episode {}",
                g.system_id, g.episode_id
            )));
        }
        if !per_system.contains_key(&g.system_id) {
            order.push(g.system_id.clone());
        }
        let slot = per_system.entry(g.system_id.clone()).or_default();
        if slot.insert(g.episode_id.clone(), g).is_some() {
            return Err(EvalError::Duplicate(format!("system {} / episode {}", g.system_id, g.episode_id)));
        }
    }
    let first = order.first().ok_or(EvalError::EmptySample)?;
    let reference: BTreeSet<&String> = per_system[first].keys().collect();
    for s in &order {
        let keys: BTreeSet<&String> = per_system[s].keys().collect();
        if keys != reference {
            let missing: Vec<_> = reference.symmetric_difference(&keys).take(5).collect();
            return Err(EvalError::EpisodeMismatch(format!(
                "system {s} and system {first} cover different episodes (e.g. {missing:?})"
            )));
        }
    }
    let baseline = opts.baseline.clone().unwrap_or_else(|| first.clone());
    if !order.contains(&baseline) {
        return Err(EvalError::InvalidOption(format!("baseline system {baseline} has no generations")));
    }

    let mut examples = Vec::new();
    let mut scores: Vec<(String, Vec<f64>)> = Vec::new();
    let mut split_scores: BTreeMap<String, Vec<(String, Vec<f64>)>> = BTreeMap::new();
    for s in &order {
        let mut all = Vec::new();
        let mut splits: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for (eid, g) in &per_system[s] {
            let ep = by_id[eid.as_str()];
            let score = scorer.score(s, ep, &g.text)?;
            let split = ep.split.as_str().to_owned();
            all.push(score);
            splits.entry(split.clone()).or_default().push(score);
            examples.push(ExampleScore { episode_id: eid.clone(), system_id: s.clone(), split, score });
        }
        for (split, v) in splits {
            split_scores.entry(split).or_default().push((s.clone(), v));
        }
        scores.push((s.clone(), all));
    }

    let p_values = pairwise_p_values(&scores, &opts.permutation)?;
    let split_p_values = split_scores
        .iter()
        .map(|(k, v)| Ok((k.clone(), pairwise_p_values(v, &opts.permutation)?)))
        .collect::<Result<BTreeMap<_, _>, EvalError>>()?;

    let mut human_by_system: HashMap<&str, Vec<f64>> = HashMap::new();
    if let Some(rows) = human {
        for r in rows {
            human_by_system.entry(r.system_id.as_str()).or_default().push(r.score);
        }
    }
    let human_means: Vec<Option<f64>> =
        order.iter().map(|s| human_by_system.get(s.as_str()).map(|v| mean(v))).collect();
    let mut ranked: Vec<(usize, f64)> =
        human_means.iter().enumerate().filter_map(|(i, m)| m.map(|m| (i, m))).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
    let rank_of = |i: usize| ranked.iter().position(|&(j, _)| j == i).map(|r| r + 1);

    let systems: Vec<SystemRow> = order
        .iter()
        .enumerate()
        .map(|(i, s)| SystemRow {
            system_id: s.clone(),
            n: scores[i].1.len(),
            mean: mean(&scores[i].1),
            by_split: split_scores
                .iter()
                .filter_map(|(k, v)| v.iter().find(|(sid, _)| sid == s).map(|(_, x)| (k.clone(), mean(x))))
                .collect(),
            human_mean: human_means[i],
            human_n: human_by_system.get(s.as_str()).map_or(0, Vec::len),
            human_rank: rank_of(i),
        })
        .collect();

    let human_samples: Vec<(String, Vec<f64>)> = order
        .iter()
        .filter_map(|s| human_by_system.get(s.as_str()).map(|v| (s.clone(), v.clone())))
        .collect();
    let human_p_values =
        if human_samples.is_empty() { None } else { Some(pairwise_p_values(&human_samples, &opts.permutation)?) };
    let paired: Vec<(f64, f64)> = systems.iter().filter_map(|r| r.human_mean.map(|h| (r.mean, h))).collect();
    let kendall_tau = if paired.len() >= 2 {
        let (x, y): (Vec<f64>, Vec<f64>) = paired.into_iter().unzip();
        match kendall_tau_b(&x, &y) {
            Ok(t) => Some(t),
            Err(e) => {
                log::warn!("no rank correlation with human scores: {e}");
                None
            }
        }
    } else {
        None
    };

    Ok(EvalReport {
        metric: scorer.name().to_owned(),
        baseline,
        systems,
        p_values,
        split_p_values,
        human_p_values,
        kendall_tau,
        examples,
    })
}

impl EvalReport {
    /// Plain-text table: metric per split and overall (×100), human mean
    /// with rank, stars marking significance against the baseline.
    pub fn render_table(&self) -> String {
        let splits: Vec<&String> = self.split_p_values.keys().collect();
        let mut header = vec!["System".to_owned()];
        header.extend(splits.iter().map(|s| format!("{} {}", self.metric, s)));
        header.push(format!("{} all", self.metric));
        let with_human = self.human_p_values.is_some();
        if with_human {
            header.push("Human".into());
        }
        let mut rows = vec![header];
        for r in &self.systems {
            let mut row = vec![r.system_id.clone()];
            let mark = |m: &PValueMatrix| {
                if r.system_id == self.baseline {
                    ""
                } else {
                    m.get(&r.system_id, &self.baseline).map_or("", stars)
                }
            };
            for s in &splits {
                row.push(match r.by_split.get(*s) {
                    Some(v) => format!("{:.2}{}", v * 100.0, mark(&self.split_p_values[*s])),
                    None => "-".into(),
                });
            }
            row.push(format!("{:.2}{}", r.mean * 100.0, mark(&self.p_values)));
            if let Some(hp) = &self.human_p_values {
                row.push(match (r.human_mean, r.human_rank) {
                    (Some(h), Some(k)) => format!("{h:.2}{} ({k})", mark(hp)),
                    _ => "-".into(),
                });
            }
            rows.push(row);
        }
        let widths: Vec<usize> =
            (0..rows[0].len()).map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0)).collect();
        let mut out = String::new();
        for (i, r) in rows.iter().enumerate() {
            let cells: Vec<String> = r.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
            let _ = writeln!(out, "{}", cells.join("  ").trim_end());
            if i == 0 {
                let _ = writeln!(out, "{}", "-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
            }
        }
        let _ = writeln!(out, "baseline: {}; * p<=0.05, ** p<=0.01 (two-sided permutation test)", self.baseline);
        if let Some(t) = self.kendall_tau {
            let _ = writeln!(out, "Kendall tau-b ({} vs human, system level): {t:.3}", self.metric);
        }
        out
    }
}
