use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use navmap_core::captioner::data::load_sample;
use navmap_core::captioner::train::save_metrics_csv;
use navmap_core::captioner::{build_vocabulary, load_samples, Captioner, SystemVariant, Trainer};
use navmap_core::dataset::{
    build_dataset_from_paths, build_synthetic_dataset, read_path_records, DatasetSummary, EPISODES_FILE,
};
use navmap_core::eval::io::{load_example_scores, load_generations, load_human_scores, write_example_scores, write_generations};
use navmap_core::eval::report::{pairwise_p_values, BleuScorer, ImportedScores, PValueMatrix, Scorer};
use navmap_core::eval::stats::stars;
use navmap_core::eval::{evaluate_systems, EvalOptions, EvalReport, Generation, Lexicon, PermutationOptions, PropositionScorer};
use navmap_core::scene::load_episodes;
use navmap_core::{Episode, Split};
use navmap_service::StudyConfig;

use crate::config::{invalid, Metric, RunConfig};
use crate::manifest;

fn load_dataset(cfg: &RunConfig) -> anyhow::Result<Vec<Episode>> {
    let file = cfg.dataset_dir().join(EPISODES_FILE);
    if !file.exists() {
        return Err(invalid(format!("{} not found; run `build-dataset` first", file.display())));
    }
    Ok(load_episodes(&file)?)
}

pub fn build_dataset(cfg: &RunConfig) -> anyhow::Result<DatasetSummary> {
    let out = cfg.dataset_dir();
    if out.exists() {
        // only a directory this tool wrote is replaced
        if !out.join(EPISODES_FILE).exists() && fs::read_dir(&out)?.next().is_some() {
            return Err(invalid(format!("{} exists and is not a dataset directory", out.display())));
        }
        fs::remove_dir_all(&out)?;
    }
    fs::create_dir_all(&out)?;
    let (_, summary) = match (&cfg.dataset.scenes_dir, &cfg.dataset.paths_file) {
        (Some(scenes), Some(paths)) => {
            let records = read_path_records(paths)?;
            build_dataset_from_paths(scenes, &records, &cfg.dataset.episode, &out)?
        }
        _ => build_synthetic_dataset(cfg.seed(), &cfg.dataset.spec(), &out)?,
    };
    let mut text = serde_json::to_string_pretty(&summary)?;
    text.push('\n');
    fs::write(out.join("summary.json"), text)?;
    manifest::record(&cfg.run_dir, cfg.seed(), cfg, "build-dataset", &[&out])?;
    Ok(summary)
}

pub fn train(cfg: &RunConfig, variant: SystemVariant) -> anyhow::Result<PathBuf> {
    let model_cfg = cfg.model_for(variant)?;
    let episodes = load_dataset(cfg)?;
    let train_eps: Vec<Episode> = episodes.iter().filter(|e| e.split == Split::Train).cloned().collect();
    let val_eps: Vec<Episode> = episodes.iter().filter(|e| e.split == Split::ValSeen).cloned().collect();
    if train_eps.is_empty() {
        return Err(invalid("the dataset has no train episodes"));
    }
    let vocab = build_vocabulary(&train_eps, &cfg.dataset.episode.prompt);
    let dir = cfg.dataset_dir();
    let train_samples = load_samples(&train_eps, &dir, &vocab, &model_cfg)?;
    let val_samples = load_samples(&val_eps, &dir, &vocab, &model_cfg)?;
    log::info!(
        "{variant}: {} train / {} val samples, vocabulary {}",
        train_samples.len(),
        val_samples.len(),
        vocab.len()
    );
    let mut train_cfg = cfg.train.clone();
    train_cfg.seed = cfg.seed();
    let model = Captioner::new(model_cfg, vocab, cfg.seed())?;
    let trainer = Trainer::new(model, train_cfg.clone(), train_samples.len())?;
    let outcome = trainer.run(&train_samples, &val_samples, |m| {
        println!(
            "[{variant}] epoch {:>3}  gen {:.4}  con {:.4}  val {}",
            m.epoch,
            m.gen_loss,
            m.con_loss,
            m.val_loss.map_or("-".into(), |v| format!("{v:.4}"))
        );
    })?;

    let out = cfg.model_dir(variant);
    fs::create_dir_all(&out)?;
    let ckpt = out.join("checkpoint.json");
    outcome.model.save(&ckpt, Some(&train_cfg), Some(outcome.best_epoch))?;
    let metrics = out.join("metrics.csv");
    save_metrics_csv(&outcome.metrics, &metrics)?;
    println!("[{variant}] best epoch {}; checkpoint {}", outcome.best_epoch, ckpt.display());
    manifest::record(&cfg.run_dir, cfg.seed(), cfg, "train", &[&ckpt, &metrics])?;
    Ok(ckpt)
}

pub fn generate(
    cfg: &RunConfig,
    variant: SystemVariant,
    checkpoint: Option<&Path>,
    splits: &[Split],
    out: Option<&Path>,
) -> anyhow::Result<PathBuf> {
    let default_ckpt = cfg.model_dir(variant).join("checkpoint.json");
    let ckpt = checkpoint.unwrap_or(&default_ckpt);
    let model = Captioner::load(ckpt).with_context(|| format!("loading {}", ckpt.display()))?;
    let episodes = load_dataset(cfg)?;
    let mut opts = cfg.decode.clone();
    opts.use_prompt |= model.config.prompt;
    let dir = cfg.dataset_dir();
    let mut rows = Vec::new();
    for ep in episodes.iter().filter(|e| splits.contains(&e.split)) {
        let sample = load_sample(ep, 0, &dir, &model.vocab, &model.config)?;
        rows.push(Generation {
            episode_id: ep.id.clone(),
            system_id: variant.name().to_owned(),
            text: model.generate(&sample, &opts)?,
        });
    }
    if rows.is_empty() {
        return Err(invalid(format!("no episodes in splits {splits:?}")));
    }
    let default_out = cfg.generations_file(variant);
    let out = out.unwrap_or(&default_out);
    if let Some(parent) = out.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut w = BufWriter::new(File::create(out)?);
    write_generations(&mut w, &rows)?;
    w.flush()?;
    println!("[{variant}] {} generations → {}", rows.len(), out.display());
    manifest::record(&cfg.run_dir, cfg.seed(), cfg, "generate", &[out])?;
    Ok(out.to_path_buf())
}

fn default_generations(cfg: &RunConfig) -> anyhow::Result<Vec<PathBuf>> {
    let dir = cfg.generations_dir();
    let mut files: Vec<PathBuf> = match fs::read_dir(&dir) {
        Ok(rd) => rd
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect(),
        Err(_) => Vec::new(),
    };
    if files.is_empty() {
        return Err(invalid(format!("no generation files given and none found in {}", dir.display())));
    }
    // grid order, so the baseline defaults to the simplest system
    let rank = |p: &PathBuf| {
        let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        SystemVariant::ALL.iter().position(|&v| crate::config::slug(v) == stem).unwrap_or(usize::MAX)
    };
    files.sort_by_key(|p| (rank(p), p.clone()));
    Ok(files)
}

pub fn evaluate(cfg: &RunConfig, generation_files: &[PathBuf], out_dir: Option<&Path>) -> anyhow::Result<EvalReport> {
    let files = if generation_files.is_empty() { default_generations(cfg)? } else { generation_files.to_vec() };
    let mut gens = Vec::new();
    for f in &files {
        gens.extend(load_generations(f).with_context(|| format!("reading {}", f.display()))?);
    }
    let episodes = load_dataset(cfg)?;
    let ev = &cfg.evaluate;
    let scorer: Box<dyn Scorer> = match (&ev.imported_scores, ev.metric) {
        (Some(path), _) => Box::new(ImportedScores::new("imported", &load_example_scores(path)?)),
        (None, Metric::PropF1) => Box::new(PropositionScorer { lexicon: Lexicon::from_episodes(&episodes) }),
        (None, Metric::Bleu) => Box::new(BleuScorer),
    };
    let human = ev.human_scores.as_ref().map(load_human_scores).transpose()?;
    let opts = EvalOptions { permutation: ev.permutation.clone(), baseline: ev.baseline.clone() };
    let report = evaluate_systems(&gens, &episodes, scorer.as_ref(), human.as_deref(), &opts)?;

    let default_dir = cfg.eval_dir();
    let out = out_dir.unwrap_or(&default_dir);
    fs::create_dir_all(out)?;
    let table = report.render_table();
    print!("{table}");
    let json_path = out.join("report.json");
    fs::write(&json_path, serde_json::to_string_pretty(&report)? + "\n")?;
    let txt_path = out.join("report.txt");
    fs::write(&txt_path, &table)?;
    let ex_path = out.join("example_scores.csv");
    write_example_scores(File::create(&ex_path)?, &report.examples)?;
    manifest::record(&cfg.run_dir, cfg.seed(), cfg, "evaluate", &[&json_path, &txt_path, &ex_path])?;
    Ok(report)
}

pub fn render_matrix(m: &PValueMatrix) -> String {
    let width = m.systems.iter().map(|s| s.len()).max().unwrap_or(0).max(6);
    let mut out = format!("{:width$}", "");
    for s in &m.systems {
        out.push_str(&format!("  {s:>width$}"));
    }
    out.push('\n');
    for (i, s) in m.systems.iter().enumerate() {
        out.push_str(&format!("{s:width$}"));
        for j in 0..m.systems.len() {
            let cell = if i == j { "-".to_owned() } else { format!("{:.4}{}", m.p[i][j], stars(m.p[i][j])) };
            out.push_str(&format!("  {cell:>width$}"));
        }
        out.push('\n');
    }
    out
}

/// Pairwise tests over a per-example score table, optionally one split only.
pub fn significance(scores: &Path, split: Option<&str>, opts: &PermutationOptions) -> anyhow::Result<PValueMatrix> {
    let rows = load_example_scores(scores)?;
    let mut order: Vec<String> = Vec::new();
    let mut by_system: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in rows.iter().filter(|r| split.map_or(true, |s| r.split == s)) {
        if !by_system.contains_key(&r.system_id) {
            order.push(r.system_id.clone());
        }
        by_system.entry(r.system_id.clone()).or_default().push(r.score);
    }
    if order.is_empty() {
        return Err(invalid(format!("{} has no rows{}", scores.display(), split.map_or(String::new(), |s| format!(" for split {s}")))));
    }
    let samples: Vec<(String, Vec<f64>)> = order.into_iter().map(|s| { let v = by_system.remove(&s).unwrap(); (s, v) }).collect();
    Ok(pairwise_p_values(&samples, opts)?)
}

pub fn study_config(cfg: &RunConfig) -> anyhow::Result<StudyConfig> {
    let s = &cfg.serve;
    let generations = if s.generations.is_empty() { default_generations(cfg)? } else { s.generations.clone() };
    let log = s.log.clone().unwrap_or_else(|| cfg.run_dir.join("human/responses.jsonl"));
    if let Some(parent) = log.parent() {
        fs::create_dir_all(parent)?;
    }
    Ok(StudyConfig {
        dataset_dir: cfg.dataset_dir(),
        episodes_file: EPISODES_FILE.into(),
        generations,
        evaluators: s.evaluators.clone(),
        items_per_evaluator: s.items_per_evaluator,
        seed: cfg.seed(),
        log,
    })
}

pub fn serve(cfg: &RunConfig) -> anyhow::Result<()> {
    let study = study_config(cfg)?;
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(navmap_service::serve(&study, cfg.serve.addr))?;
    Ok(())
}

/// build → train → generate for every configured variant → evaluate.
pub fn run_all(cfg: &RunConfig) -> anyhow::Result<EvalReport> {
    print!("{}", build_dataset(cfg)?.render_table());
    let mut files = Vec::new();
    for &v in &cfg.variants {
        train(cfg, v)?;
        files.push(generate(cfg, v, None, &cfg.eval_splits, None)?);
    }
    evaluate(cfg, &files, None)
}
