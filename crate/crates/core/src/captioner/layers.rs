use rand::Rng;

use super::graph::{Graph, Mat, Var};
use super::params::{normal_init, ParamId, ParamStore};

/// Registers parameters under a name prefix with a shared frozen flag.
pub struct Init<'a, R: Rng> {
    pub store: &'a mut ParamStore,
    pub rng: &'a mut R,
    pub frozen: bool,
}

impl<R: Rng> Init<'_, R> {
    pub fn normal(&mut self, name: &str, rows: usize, cols: usize, std: f64) -> ParamId {
        let value = normal_init(self.rng, rows, cols, std);
        self.store.add(name, value, self.frozen)
    }

    pub fn constant(&mut self, name: &str, rows: usize, cols: usize, value: f64) -> ParamId {
        self.store.add(name, Mat::from_elem((rows, cols), value), self.frozen)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    pub fn new<R: Rng>(init: &mut Init<'_, R>, name: &str, fan_in: usize, fan_out: usize) -> Self {
        Self {
            w: init.normal(&format!("{name}.w"), fan_in, fan_out, (1.0 / fan_in as f64).sqrt()),
            b: init.constant(&format!("{name}.b"), 1, fan_out, 0.0),
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let w = g.param(self.w);
        let b = g.param(self.b);
        let y = g.matmul(x, w);
        g.add_row(y, b)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNorm {
    pub fn new<R: Rng>(init: &mut Init<'_, R>, name: &str, dim: usize) -> Self {
        Self {
            gamma: init.constant(&format!("{name}.g"), 1, dim, 1.0),
            beta: init.constant(&format!("{name}.b"), 1, dim, 0.0),
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let gamma = g.param(self.gamma);
        let beta = g.param(self.beta);
        g.layer_norm(x, gamma, beta)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Attention {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
    pub heads: usize,
}

impl Attention {
    pub fn new<R: Rng>(init: &mut Init<'_, R>, name: &str, dim: usize, heads: usize) -> Self {
        Self {
            q: Linear::new(init, &format!("{name}.q"), dim, dim),
            k: Linear::new(init, &format!("{name}.k"), dim, dim),
            v: Linear::new(init, &format!("{name}.v"), dim, dim),
            o: Linear::new(init, &format!("{name}.o"), dim, dim),
            heads,
        }
    }

    /// Multi-head attention of `x` over `memory`.
    pub fn forward(&self, g: &mut Graph, x: Var, memory: Var, causal: bool) -> Var {
        let q = self.q.forward(g, x);
        let k = self.k.forward(g, memory);
        let v = self.v.forward(g, memory);
        let dim = g.shape(q).1;
        let dh = dim / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut outs = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let qh = g.slice_cols(q, h * dh, dh);
            let kh = g.slice_cols(k, h * dh, dh);
            let vh = g.slice_cols(v, h * dh, dh);
            let scores = g.matmul_t(qh, kh);
            let scores = g.scale(scores, scale);
            let att = g.softmax_rows(scores, causal);
            outs.push(g.matmul(att, vh));
        }
        let joined = if outs.len() == 1 { outs[0] } else { g.concat_cols(&outs) };
        self.o.forward(g, joined)
    }
}

/// Pre-norm transformer block, optionally with cross-attention.
#[derive(Debug, Clone)]
pub struct Block {
    pub ln1: LayerNorm,
    pub attn: Attention,
    pub cross: Option<(LayerNorm, Attention)>,
    pub ln2: LayerNorm,
    pub fc1: Linear,
    pub fc2: Linear,
}

impl Block {
    pub fn new<R: Rng>(init: &mut Init<'_, R>, name: &str, dim: usize, heads: usize, ffn_mult: usize, cross: bool) -> Self {
        Self {
            ln1: LayerNorm::new(init, &format!("{name}.ln1"), dim),
            attn: Attention::new(init, &format!("{name}.attn"), dim, heads),
            cross: cross.then(|| {
                (
                    LayerNorm::new(init, &format!("{name}.lnx"), dim),
                    Attention::new(init, &format!("{name}.xattn"), dim, heads),
                )
            }),
            ln2: LayerNorm::new(init, &format!("{name}.ln2"), dim),
            fc1: Linear::new(init, &format!("{name}.fc1"), dim, dim * ffn_mult),
            fc2: Linear::new(init, &format!("{name}.fc2"), dim * ffn_mult, dim),
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var, causal: bool, memory: Option<Var>) -> Var {
        let h = self.ln1.forward(g, x);
        let a = self.attn.forward(g, h, h, causal);
        let mut x = g.add(x, a);
        if let (Some((ln, attn)), Some(mem)) = (&self.cross, memory) {
            let h = ln.forward(g, x);
            let a = attn.forward(g, h, mem, false);
            x = g.add(x, a);
        }
        let h = self.ln2.forward(g, x);
        let h = self.fc1.forward(g, h);
        let h = g.gelu(h);
        let h = self.fc2.forward(g, h);
        g.add(x, h)
    }
}

/// Stacked LSTM; returns the top layer's last hidden state.
#[derive(Debug, Clone)]
pub struct Lstm {
    pub layers: Vec<(ParamId, ParamId, ParamId)>,
    pub dim: usize,
}

impl Lstm {
    pub fn new<R: Rng>(init: &mut Init<'_, R>, name: &str, dim: usize, layers: usize) -> Self {
        let std = (1.0 / dim as f64).sqrt();
        let layers = (0..layers)
            .map(|l| {
                let wx = init.normal(&format!("{name}.{l}.wx"), dim, 4 * dim, std);
                let wh = init.normal(&format!("{name}.{l}.wh"), dim, 4 * dim, std);
                // forget-gate bias starts at 1
                let mut bias = Mat::zeros((1, 4 * dim));
                bias.slice_mut(ndarray::s![.., dim..2 * dim]).fill(1.0);
                let b = init.store.add(format!("{name}.{l}.b"), bias, init.frozen);
                (wx, wh, b)
            })
            .collect();
        Self { layers, dim }
    }

    pub fn forward(&self, g: &mut Graph, inputs: &[Var]) -> Var {
        assert!(!inputs.is_empty(), "LSTM needs at least one step");
        let d = self.dim;
        let mut seq: Vec<Var> = inputs.to_vec();
        for &(wx, wh, b) in &self.layers {
            let (wx, wh, b) = (g.param(wx), g.param(wh), g.param(b));
            let mut h = g.zeros(1, d);
            let mut c = g.zeros(1, d);
            let mut outs = Vec::with_capacity(seq.len());
            for &x in &seq {
                let zx = g.matmul(x, wx);
                let zh = g.matmul(h, wh);
                let z = g.add(zx, zh);
                let z = g.add_row(z, b);
                let i = g.slice_cols(z, 0, d);
                let i = g.sigmoid(i);
                let f = g.slice_cols(z, d, d);
                let f = g.sigmoid(f);
                let cand = g.slice_cols(z, 2 * d, d);
                let cand = g.tanh(cand);
                let o = g.slice_cols(z, 3 * d, d);
                let o = g.sigmoid(o);
                let keep = g.mul(f, c);
                let write = g.mul(i, cand);
                c = g.add(keep, write);
                let tc = g.tanh(c);
                h = g.mul(o, tc);
                outs.push(h);
            }
            seq = outs;
        }
        *seq.last().expect("non-empty")
    }
}
