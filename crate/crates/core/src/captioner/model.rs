use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::data::{Patches, Sample};
use super::graph::{Graph, Var};
use super::layers::{Block, Init, LayerNorm, Linear, Lstm};
use super::params::{ParamId, ParamStore};
use super::vocab::{Vocabulary, BOS};
use super::{CaptionerConfig, CaptionerError, Conditioning};
use crate::scene::Action;

/// Parameter handles of every sub-network. All of them exist regardless
/// of the input flags; disabled parts are simply never used.
#[derive(Debug, Clone)]
pub(crate) struct Layout {
    map_patch: Linear,
    map_pos: ParamId,
    map_blocks: Vec<Block>,
    map_query: ParamId,
    map_ln: LayerNorm,
    map_proj: Linear,

    route_words: ParamId,
    route_actions: ParamId,
    route_lstm: Lstm,

    pano_patch: Linear,
    pano_pos: ParamId,
    pano_blocks: Vec<Block>,
    pano_ln: LayerNorm,
    pano_mlp: Vec<Linear>,

    tok_emb: ParamId,
    dec_pos: ParamId,
    dec_blocks: Vec<Block>,
    dec_ln: LayerNorm,

    text_emb: ParamId,
    text_pos: ParamId,
    text_blocks: Vec<Block>,
    text_ln: LayerNorm,
    text_proj: Linear,
    input_proj: Linear,
    logit_scale: ParamId,
}

/// Parameter-name prefixes per sub-network.
pub const MAP_PREFIX: &str = "map.";
pub const ROUTE_PREFIX: &str = "route.";
pub const PANO_ENCODER_PREFIX: &str = "pano.enc.";
pub const PANO_MLP_PREFIX: &str = "pano.mlp.";

#[derive(Debug, Clone)]
pub struct Captioner {
    pub config: CaptionerConfig,
    pub vocab: Vocabulary,
    pub params: ParamStore,
    pub seed: u64,
    layout: Layout,
}

/// Encoder outputs for one sample.
#[derive(Debug, Clone, Copy)]
pub struct Encoded {
    pub fused: Var,
    pub map_seq: Var,
}

impl Captioner {
    pub fn new(config: CaptionerConfig, vocab: Vocabulary, seed: u64) -> Result<Self, CaptionerError> {
        config.validate()?;
        if !vocab.is_well_formed() {
            return Err(CaptionerError::InvalidConfig("vocabulary must start with the four special tokens".into()));
        }
        let mut params = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = &config;
        let d = c.hidden_dim;
        let v = vocab.len();
        let emb_std = 0.1;
        let block = |init: &mut Init<'_, ChaCha8Rng>, name: String, heads: usize, cross: bool| {
            Block::new(init, &name, d, heads, c.ffn_mult, cross)
        };

        let mut init = Init { store: &mut params, rng: &mut rng, frozen: false };
        let map_patch = Linear::new(&mut init, "map.patch", c.patch_dim(), d);
        let map_pos = init.normal("map.pos", c.num_patches(), d, emb_std);
        let map_blocks = (0..c.map_depth).map(|i| block(&mut init, format!("map.block{i}"), c.map_heads, false)).collect();
        let map_query = init.normal("map.query", 1, d, emb_std);
        let map_ln = LayerNorm::new(&mut init, "map.ln", d);
        let map_proj = Linear::new(&mut init, "map.proj", d, d);

        let route_words = init.normal("route.words", v, d, emb_std);
        let route_actions = init.normal("route.actions", Action::ALL.len(), d, emb_std);
        let route_lstm = Lstm::new(&mut init, "route.lstm", d, c.route_layers);

        init.frozen = true;
        let pano_patch = Linear::new(&mut init, "pano.enc.patch", c.patch_dim(), d);
        let pano_pos = init.normal("pano.enc.pos", c.pano_patches(), d, emb_std);
        let pano_blocks =
            (0..c.pano_depth).map(|i| block(&mut init, format!("pano.enc.block{i}"), c.map_heads, false)).collect();
        let pano_ln = LayerNorm::new(&mut init, "pano.enc.ln", d);
        init.frozen = false;
        let pano_mlp = (0..c.pano_mlp_layers).map(|i| Linear::new(&mut init, &format!("pano.mlp.{i}"), d, d)).collect();

        let cross = c.conditioning == Conditioning::CrossAttention;
        let tok_emb = init.normal("dec.tok", v, d, emb_std);
        let dec_pos = init.normal("dec.pos", 2 + c.max_prompt_len + c.max_len + 1, d, emb_std);
        let dec_blocks =
            (0..c.decoder_depth).map(|i| block(&mut init, format!("dec.block{i}"), c.decoder_heads, cross)).collect();
        let dec_ln = LayerNorm::new(&mut init, "dec.ln", d);

        let text_emb = init.normal("text.tok", v, d, emb_std);
        let text_pos = init.normal("text.pos", c.max_len + 1, d, emb_std);
        let text_blocks =
            (0..c.text_depth).map(|i| block(&mut init, format!("text.block{i}"), c.text_heads, false)).collect();
        let text_ln = LayerNorm::new(&mut init, "text.ln", d);
        let text_proj = Linear::new(&mut init, "text.proj", d, d);
        let input_proj = Linear::new(&mut init, "con.input_proj", d, d);
        let logit_scale = init.constant("con.logit_scale", 1, 1, (1.0 / c.temperature).ln());

        let layout = Layout {
            map_patch,
            map_pos,
            map_blocks,
            map_query,
            map_ln,
            map_proj,
            route_words,
            route_actions,
            route_lstm,
            pano_patch,
            pano_pos,
            pano_blocks,
            pano_ln,
            pano_mlp,
            tok_emb,
            dec_pos,
            dec_blocks,
            dec_ln,
            text_emb,
            text_pos,
            text_blocks,
            text_ln,
            text_proj,
            input_proj,
            logit_scale,
        };
        Ok(Self { config, vocab, params, seed, layout })
    }

    pub fn graph(&self) -> Graph<'_> {
        Graph::new(&self.params)
    }

    /// Patch sequence (`num_patches × d`) and the pooled summary (`1 × d`).
    pub fn encode_map(&self, g: &mut Graph, map: &Patches) -> Result<(Var, Var), CaptionerError> {
        let c = &self.config;
        if map.n_patches != c.num_patches() || map.patch_dim != c.patch_dim() {
            return Err(CaptionerError::ShapeMismatch(format!(
                "map has {} patches of {} values, the model expects {} of {}",
                map.n_patches,
                map.patch_dim,
                c.num_patches(),
                c.patch_dim()
            )));
        }
        let l = &self.layout;
        let w = g.param(l.map_patch.w);
        let b = g.param(l.map_patch.b);
        let x = g.sparse_matmul(map.to_sparse(), w);
        let x = g.add_row(x, b);
        let pos = g.param(l.map_pos);
        let mut seq = g.add(x, pos);
        for blk in &l.map_blocks {
            seq = blk.forward(g, seq, false, None);
        }
        let q = g.param(l.map_query);
        let scores = g.matmul_t(q, seq);
        let scores = g.scale(scores, 1.0 / (c.hidden_dim as f64).sqrt());
        let att = g.softmax_rows(scores, false);
        let pooled = g.matmul(att, seq);
        let pooled = l.map_ln.forward(g, pooled);
        let pooled = l.map_proj.forward(g, pooled);
        Ok((seq, pooled))
    }

    /// Per point: mean region-word embedding (zero without regions) plus
    /// the action embedding, each only when its input flag is on.
    pub fn encode_point_context(
        &self,
        g: &mut Graph,
        regions: &[Vec<usize>],
        actions: &[usize],
    ) -> Result<Vec<Var>, CaptionerError> {
        if regions.len() != actions.len() {
            return Err(CaptionerError::InvalidInput(format!(
                "{} region lists for {} actions",
                regions.len(),
                actions.len()
            )));
        }
        let flags = self.config.inputs;
        let d = self.config.hidden_dim;
        let words = g.param(self.layout.route_words);
        let table = g.param(self.layout.route_actions);
        let mut out = Vec::with_capacity(actions.len());
        for (ids, &action) in regions.iter().zip(actions) {
            let region = if flags.reg && !ids.is_empty() {
                let e = g.embedding(words, ids);
                Some(g.mean_rows(e))
            } else {
                None
            };
            let act = flags.act.then(|| g.embedding(table, &[action]));
            out.push(match (region, act) {
                (Some(r), Some(a)) => g.add(r, a),
                (Some(r), None) => r,
                (None, Some(a)) => a,
                (None, None) => g.zeros(1, d),
            });
        }
        Ok(out)
    }

    /// Final hidden state of the recurrent route encoder.
    pub fn encode_route(&self, g: &mut Graph, contexts: &[Var]) -> Result<Var, CaptionerError> {
        if contexts.is_empty() {
            return Err(CaptionerError::InvalidInput("route encoder needs at least one point".into()));
        }
        Ok(self.layout.route_lstm.forward(g, contexts))
    }

    /// Frozen encoder per image, trainable MLP per image, mean over images.
    pub fn encode_panoramas(&self, g: &mut Graph, images: &[Patches]) -> Result<Var, CaptionerError> {
        if images.is_empty() {
            return Err(CaptionerError::InvalidInput("panorama input is enabled but the episode has none".into()));
        }
        let c = &self.config;
        let l = &self.layout;
        let mut embs = Vec::with_capacity(images.len());
        for img in images {
            if img.n_patches != c.pano_patches() || img.patch_dim != c.patch_dim() {
                return Err(CaptionerError::ShapeMismatch(format!(
                    "panorama has {} patches, the model expects {}",
                    img.n_patches,
                    c.pano_patches()
                )));
            }
            let w = g.param(l.pano_patch.w);
            let b = g.param(l.pano_patch.b);
            let x = g.sparse_matmul(img.to_sparse(), w);
            let x = g.add_row(x, b);
            let pos = g.param(l.pano_pos);
            let mut seq = g.add(x, pos);
            for blk in &l.pano_blocks {
                seq = blk.forward(g, seq, false, None);
            }
            let pooled = g.mean_rows(seq);
            let mut h = l.pano_ln.forward(g, pooled);
            for (i, lin) in l.pano_mlp.iter().enumerate() {
                if i > 0 {
                    h = g.gelu(h);
                }
                h = lin.forward(g, h);
            }
            embs.push(h);
        }
        if embs.len() == 1 {
            return Ok(embs[0]);
        }
        let stacked = g.concat_rows(&embs);
        Ok(g.mean_rows(stacked))
    }

    /// Elementwise sum of the enabled parts.
    pub fn fuse(&self, g: &mut Graph, parts: &[Var]) -> Result<Var, CaptionerError> {
        let (&first, rest) = parts.split_first().ok_or(CaptionerError::NoInputs)?;
        Ok(rest.iter().fold(first, |acc, &p| g.add(acc, p)))
    }

    pub fn encode_inputs(&self, g: &mut Graph, sample: &Sample) -> Result<Encoded, CaptionerError> {
        let flags = self.config.inputs;
        if !flags.td {
            return Err(CaptionerError::NoInputs);
        }
        let (map_seq, pooled) = self.encode_map(g, &sample.map)?;
        let mut parts = vec![pooled];
        if flags.reg || flags.act {
            let ctx = self.encode_point_context(g, &sample.regions, &sample.actions)?;
            parts.push(self.encode_route(g, &ctx)?);
        }
        if flags.pano {
            let images = sample.panoramas.as_deref().unwrap_or(&[]);
            parts.push(self.encode_panoramas(g, images)?);
        }
        let fused = self.fuse(g, &parts)?;
        Ok(Encoded { fused, map_seq })
    }

    /// Prompt tokens fed to the decoder during training.
    pub fn train_prompt<'s>(&self, sample: &'s Sample) -> &'s [usize] {
        if self.config.prompt {
            &sample.prompt
        } else {
            &[]
        }
    }

    /// Logits for every position of `tokens` (`len × V`); row `j`
    /// predicts token `j + 1`.
    pub fn decoder_logits(&self, g: &mut Graph, enc: &Encoded, tokens: &[usize]) -> Var {
        let l = &self.layout;
        let n = tokens.len();
        let table = g.param(l.tok_emb);
        let emb = g.embedding(table, tokens);
        let pos_table = g.param(l.dec_pos);
        let prefix = self.config.conditioning == Conditioning::Prefix;
        let (mut x, memory) = if prefix {
            let seq = g.concat_rows(&[enc.fused, emb]);
            let pos = g.slice_rows(pos_table, 0, n + 1);
            (g.add(seq, pos), None)
        } else {
            let pos = g.slice_rows(pos_table, 0, n);
            let mem = g.concat_rows(&[enc.fused, enc.map_seq]);
            (g.add(emb, pos), Some(mem))
        };
        for blk in &l.dec_blocks {
            x = blk.forward(g, x, true, memory);
        }
        if prefix {
            x = g.slice_rows(x, 1, n);
        }
        let h = l.dec_ln.forward(g, x);
        g.matmul_t(h, table)
    }

    /// Decoder input `[BOS, prompt…, target…]` and the matching labels:
    /// only target tokens and the closing EOS are scored.
    pub fn teacher_forcing(prompt: &[usize], target: &[usize]) -> (Vec<usize>, Vec<Option<usize>>) {
        let mut tokens = Vec::with_capacity(1 + prompt.len() + target.len());
        tokens.push(BOS);
        tokens.extend_from_slice(prompt);
        tokens.extend_from_slice(target);
        let mut labels = vec![None; tokens.len()];
        for (k, &t) in target.iter().enumerate() {
            labels[prompt.len() + k] = Some(t);
        }
        labels[prompt.len() + target.len()] = Some(super::vocab::EOS);
        (tokens, labels)
    }

    /// Pooled instruction embedding (`1 × d`).
    pub fn encode_text(&self, g: &mut Graph, tokens: &[usize]) -> Var {
        let l = &self.layout;
        let ids: Vec<usize> = if tokens.is_empty() { vec![super::vocab::EOS] } else { tokens.to_vec() };
        let table = g.param(l.text_emb);
        let emb = g.embedding(table, &ids);
        let pos_table = g.param(l.text_pos);
        let pos = g.slice_rows(pos_table, 0, ids.len());
        let mut x = g.add(emb, pos);
        for blk in &l.text_blocks {
            x = blk.forward(g, x, false, None);
        }
        let pooled = g.mean_rows(x);
        let pooled = l.text_ln.forward(g, pooled);
        l.text_proj.forward(g, pooled)
    }

    /// Projection of the fused input into the contrastive space.
    pub fn input_embedding(&self, g: &mut Graph, fused: Var) -> Var {
        self.layout.input_proj.forward(g, fused)
    }

    pub fn logit_scale(&self, g: &mut Graph) -> Var {
        g.param(self.layout.logit_scale)
    }

    /// Whether a parameter belongs to the frozen panorama encoder.
    pub fn is_pano_encoder_param(name: &str) -> bool {
        name.starts_with(PANO_ENCODER_PREFIX)
    }
}
