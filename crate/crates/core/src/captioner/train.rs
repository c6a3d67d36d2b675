use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::data::Sample;
use super::graph::{Gradients, Graph, Var};
use super::loss::{contrastive_loss, generation_loss, FusionBatch};
use super::model::Captioner;
use super::params::{AdamW, SavedParam};
use super::{CaptionerError, NegativeSampling, TrainConfig};

/// Forward pass over one batch.
pub struct BatchForward {
    pub total: Var,
    pub gen: Var,
    pub con: Option<Var>,
    pub scored_tokens: usize,
}

impl Captioner {
    /// Total loss `gen + λ·con` over `batch`. The generation term is the
    /// mean over every scored token in the batch.
    pub fn batch_forward(
        &self,
        g: &mut Graph,
        batch: &[&Sample],
        negatives: Option<&[usize]>,
    ) -> Result<BatchForward, CaptionerError> {
        if batch.is_empty() {
            return Err(CaptionerError::InvalidInput("empty batch".into()));
        }
        let mut all_logits = Vec::with_capacity(batch.len());
        let mut all_labels = Vec::new();
        let mut fused = Vec::with_capacity(batch.len());
        for s in batch {
            if s.target.is_empty() {
                return Err(CaptionerError::InvalidInput(format!("episode {} has an empty target", s.episode_id)));
            }
            let enc = self.encode_inputs(g, s)?;
            let (tokens, labels) = Captioner::teacher_forcing(self.train_prompt(s), &s.target);
            all_logits.push(self.decoder_logits(g, &enc, &tokens));
            all_labels.extend(labels);
            fused.push(enc.fused);
        }
        let logits = if all_logits.len() == 1 { all_logits[0] } else { g.concat_rows(&all_logits) };
        let scored_tokens = all_labels.iter().filter(|l| l.is_some()).count();
        let gen = generation_loss(g, logits, &all_labels);

        let lambda = self.config.effective_contrastive_weight();
        if !self.config.contrastive {
            return Ok(BatchForward { total: gen, gen, con: None, scored_tokens });
        }
        let inputs: Vec<Var> = fused.iter().map(|&f| self.input_embedding(g, f)).collect();
        let texts: Vec<Var> = batch.iter().map(|s| self.encode_text(g, &s.target)).collect();
        let e_input = g.concat_rows(&inputs);
        let e_text = g.concat_rows(&texts);
        let scale = self.logit_scale(g);
        let negatives = match self.config.negatives {
            NegativeSampling::InBatch => None,
            NegativeSampling::Sampled => negatives,
        };
        let con = contrastive_loss(g, FusionBatch { e_input, e_text }, scale, negatives)?;
        let weighted = g.scale(con, lambda);
        let total = g.add(gen, weighted);
        Ok(BatchForward { total, gen, con: Some(con), scored_tokens })
    }

    /// Loss and gradients for one batch.
    pub fn loss_and_gradients(
        &self,
        batch: &[&Sample],
        negatives: Option<&[usize]>,
    ) -> Result<(LossValues, Gradients), CaptionerError> {
        let mut g = self.graph();
        let out = self.batch_forward(&mut g, batch, negatives)?;
        let values = LossValues {
            total: g.scalar(out.total),
            gen: g.scalar(out.gen),
            con: out.con.map(|c| g.scalar(c)).unwrap_or(0.0),
        };
        Ok((values, g.backward(out.total)))
    }

    /// Mean losses over `samples`, evaluated in batches of `batch_size`
    /// with in-batch negatives.
    pub fn evaluate_loss(&self, samples: &[Sample], batch_size: usize) -> Result<LossValues, CaptionerError> {
        let mut acc = LossValues::default();
        for chunk in samples.chunks(batch_size.max(1)) {
            let refs: Vec<&Sample> = chunk.iter().collect();
            let mut g = self.graph();
            let out = self.batch_forward(&mut g, &refs, None)?;
            let w = chunk.len() as f64 / samples.len() as f64;
            acc.total += w * g.scalar(out.total);
            acc.gen += w * g.scalar(out.gen);
            acc.con += w * out.con.map(|c| g.scalar(c)).unwrap_or(0.0);
        }
        Ok(acc)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossValues {
    pub total: f64,
    pub gen: f64,
    pub con: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub gen_loss: f64,
    pub con_loss: f64,
    pub val_loss: Option<f64>,
}

pub fn write_metrics_csv(metrics: &[EpochMetrics], writer: impl Write) -> Result<(), CaptionerError> {
    let mut w = csv::Writer::from_writer(writer);
    for m in metrics {
        w.serialize(m).map_err(|e| CaptionerError::Io(e.into()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_metrics_csv(metrics: &[EpochMetrics], path: impl AsRef<Path>) -> Result<(), CaptionerError> {
    let file = std::fs::File::create(path)?;
    write_metrics_csv(metrics, file)
}

/// Optimizer state plus the data-order and negative-sampling streams.
pub struct Trainer {
    pub model: Captioner,
    pub config: TrainConfig,
    opt: AdamW,
    order_rng: ChaCha8Rng,
    negative_rng: ChaCha8Rng,
    step: u64,
    total_steps: u64,
}

#[derive(Debug)]
pub struct TrainOutcome {
    /// Parameters of the epoch with the lowest validation loss (training
    /// loss when there is no validation set).
    pub model: Captioner,
    pub metrics: Vec<EpochMetrics>,
    pub best_epoch: usize,
}

impl Trainer {
    pub fn new(model: Captioner, config: TrainConfig, train_len: usize) -> Result<Self, CaptionerError> {
        config.validate()?;
        let batches = train_len.div_ceil(config.batch_size).max(1) as u64;
        let opt = AdamW::new(&model.params, config.weight_decay);
        Ok(Self {
            opt,
            order_rng: ChaCha8Rng::seed_from_u64(config.seed),
            negative_rng: ChaCha8Rng::seed_from_u64(config.seed ^ 0x9e37_79b9_7f4a_7c15),
            step: 0,
            total_steps: batches * config.epochs as u64,
            model,
            config,
        })
    }

    /// Linearly decayed learning rate for the next step.
    pub fn current_lr(&self) -> f64 {
        let frac = self.step as f64 / self.total_steps.max(1) as f64;
        self.config.learning_rate * (1.0 - frac).max(0.0)
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn train_step(&mut self, batch: &[&Sample]) -> Result<LossValues, CaptionerError> {
        let negatives: Vec<usize> = (0..batch.len())
            .map(|i| {
                if batch.len() < 2 {
                    return i;
                }
                let j = self.negative_rng.gen_range(0..batch.len() - 1);
                if j >= i {
                    j + 1
                } else {
                    j
                }
            })
            .collect();
        let (values, mut grads) = self.model.loss_and_gradients(batch, Some(&negatives))?;
        if !values.total.is_finite() {
            return Err(CaptionerError::Diverged(self.step));
        }
        if let Some(clip) = self.config.grad_clip {
            let norm = grads.global_norm();
            if norm > clip {
                grads.scale(clip / norm);
            }
        }
        let lr = self.current_lr();
        self.opt.step(&mut self.model.params, &grads, lr);
        self.step += 1;
        Ok(values)
    }

    pub fn train_epoch(&mut self, train: &[Sample]) -> Result<LossValues, CaptionerError> {
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut self.order_rng);
        let mut acc = LossValues::default();
        for chunk in order.chunks(self.config.batch_size) {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &train[i]).collect();
            let v = self.train_step(&batch)?;
            let w = chunk.len() as f64 / train.len() as f64;
            acc.total += w * v.total;
            acc.gen += w * v.gen;
            acc.con += w * v.con;
        }
        Ok(acc)
    }

    pub fn run(
        mut self,
        train: &[Sample],
        val: &[Sample],
        mut on_epoch: impl FnMut(&EpochMetrics),
    ) -> Result<TrainOutcome, CaptionerError> {
        if train.is_empty() {
            return Err(CaptionerError::EmptyTrainSet);
        }
        let mut metrics = Vec::with_capacity(self.config.epochs);
        let mut best: Option<(f64, usize, Vec<SavedParam>)> = None;
        for epoch in 1..=self.config.epochs {
            let t = self.train_epoch(train)?;
            let val_loss = if val.is_empty() {
                None
            } else {
                Some(self.model.evaluate_loss(val, self.config.val_batch_size)?.total)
            };
            let m = EpochMetrics { epoch, gen_loss: t.gen, con_loss: t.con, val_loss };
            log::info!(
                "epoch {epoch}: gen {:.4} con {:.4} val {}",
                t.gen,
                t.con,
                val_loss.map_or("-".to_string(), |v| format!("{v:.4}"))
            );
            on_epoch(&m);
            metrics.push(m);
            let score = val_loss.unwrap_or(t.total);
            if best.as_ref().map_or(true, |(b, _, _)| score < *b) {
                best = Some((score, epoch, self.model.params.to_snapshot()));
            }
        }
        let (_, best_epoch, snapshot) = best.expect("at least one epoch");
        let mut model = self.model;
        model.params.load_snapshot(&snapshot).map_err(CaptionerError::Checkpoint)?;
        Ok(TrainOutcome { model, metrics, best_epoch })
    }
}

/// Trains `model` on `train`, keeping the best-validation parameters.
pub fn train(
    model: Captioner,
    config: &TrainConfig,
    train: &[Sample],
    val: &[Sample],
) -> Result<TrainOutcome, CaptionerError> {
    Trainer::new(model, config.clone(), train.len())?.run(train, val, |_| {})
}
