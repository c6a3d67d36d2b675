use serde::{Deserialize, Serialize};

use super::data::Sample;
use super::graph::{Graph, Mat};
use super::model::{Captioner, Encoded};
use super::vocab::{BOS, EOS, PAD};
use super::CaptionerError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecodeOptions {
    /// Continue from the rendered prompt; the prompt is not returned.
    pub use_prompt: bool,
    /// 1 is greedy decoding.
    pub beam_width: usize,
    /// Defaults to the model's `max_len`.
    pub max_len: Option<usize>,
}

impl Default for DecodeOptions {
    fn default() -> Self {
        Self { use_prompt: false, beam_width: 1, max_len: None }
    }
}

fn log_softmax_last_row(logits: &Mat) -> Vec<f64> {
    let row = logits.row(logits.nrows() - 1);
    let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    row.iter()
        .enumerate()
        .map(|(i, v)| if i == PAD || i == BOS { f64::NEG_INFINITY } else { v - lse })
        .collect()
}

#[derive(Debug, Clone)]
struct Hypothesis {
    tokens: Vec<usize>,
    score: f64,
}

impl Captioner {
    fn next_token_scores(&self, g: &mut Graph, enc: &Encoded, prefix: &[usize], generated: &[usize]) -> Vec<f64> {
        let mut tokens = Vec::with_capacity(1 + prefix.len() + generated.len());
        tokens.push(BOS);
        tokens.extend_from_slice(prefix);
        tokens.extend_from_slice(generated);
        let logits = self.decoder_logits(g, enc, &tokens);
        log_softmax_last_row(g.value(logits))
    }

    /// Generated token ids without BOS, prompt or EOS.
    pub fn generate_ids(&self, sample: &Sample, opts: &DecodeOptions) -> Result<Vec<usize>, CaptionerError> {
        if opts.beam_width == 0 {
            return Err(CaptionerError::InvalidInput("beam_width must be at least 1".into()));
        }
        let max_len = opts.max_len.unwrap_or(self.config.max_len).min(self.config.max_len);
        let prompt: &[usize] = if opts.use_prompt { &sample.prompt } else { &[] };
        let mut g = self.graph();
        let enc = self.encode_inputs(&mut g, sample)?;

        if opts.beam_width == 1 {
            let mut out = Vec::new();
            while out.len() < max_len {
                let scores = self.next_token_scores(&mut g, &enc, prompt, &out);
                let best = argmax(&scores);
                if best == EOS {
                    break;
                }
                out.push(best);
            }
            return Ok(out);
        }

        let width = opts.beam_width;
        let mut live = vec![Hypothesis { tokens: Vec::new(), score: 0.0 }];
        let mut done: Vec<Hypothesis> = Vec::new();
        for _ in 0..=max_len {
            let mut cands = Vec::new();
            for h in &live {
                let scores = self.next_token_scores(&mut g, &enc, prompt, &h.tokens);
                let mut ranked: Vec<usize> = (0..scores.len()).filter(|&t| scores[t].is_finite()).collect();
                ranked.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
                for &t in ranked.iter().take(width) {
                    let mut tokens = h.tokens.clone();
                    tokens.push(t);
                    cands.push(Hypothesis { tokens, score: h.score + scores[t] });
                }
            }
            cands.sort_by(|a, b| b.score.total_cmp(&a.score));
            cands.truncate(width);
            live.clear();
            for c in cands {
                if c.tokens.last() == Some(&EOS) || c.tokens.len() > max_len {
                    done.push(c);
                } else {
                    live.push(c);
                }
            }
            if live.is_empty() {
                break;
            }
        }
        done.extend(live);
        let normalized = |h: &Hypothesis| h.score / h.tokens.len().max(1) as f64;
        let best = done
            .into_iter()
            .max_by(|a, b| normalized(a).total_cmp(&normalized(b)))
            .expect("at least one hypothesis");
        Ok(best.tokens.into_iter().filter(|&t| t != EOS).take(max_len).collect())
    }

    pub fn generate(&self, sample: &Sample, opts: &DecodeOptions) -> Result<String, CaptionerError> {
        Ok(self.vocab.decode(&self.generate_ids(sample, opts)?))
    }

    /// Fraction of scored teacher-forced positions whose argmax is the label.
    pub fn token_accuracy(&self, samples: &[Sample]) -> Result<f64, CaptionerError> {
        let (mut hit, mut total) = (0usize, 0usize);
        for s in samples {
            let mut g = self.graph();
            let enc = self.encode_inputs(&mut g, s)?;
            let (tokens, labels) = Captioner::teacher_forcing(self.train_prompt(s), &s.target);
            let logits = self.decoder_logits(&mut g, &enc, &tokens);
            let values = g.value(logits);
            for (row, label) in labels.iter().enumerate() {
                if let Some(label) = *label {
                    let r: Vec<f64> = values.row(row).to_vec();
                    hit += usize::from(argmax(&r) == label);
                    total += 1;
                }
            }
        }
        Ok(if total == 0 { 0.0 } else { hit as f64 / total as f64 })
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}
