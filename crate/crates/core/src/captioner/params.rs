use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::graph::{Gradients, Mat};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

#[derive(Debug, Clone, PartialEq)]
pub struct ParamEntry {
    pub name: String,
    pub value: Mat,
    pub frozen: bool,
}

/// Named parameter tensors in creation order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    entries: Vec<ParamEntry>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Mat, frozen: bool) -> ParamId {
        let name = name.into();
        debug_assert!(self.entries.iter().all(|e| e.name != name), "duplicate parameter {name}");
        self.entries.push(ParamEntry { name, value, frozen });
        ParamId(self.entries.len() - 1)
    }

    pub fn entry(&self, id: ParamId) -> &ParamEntry {
        &self.entries[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Mat {
        &mut self.entries[id.0].value
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &ParamEntry)> {
        self.entries.iter().enumerate().map(|(i, e)| (ParamId(i), e))
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.entries.iter().position(|e| e.name == name).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.entries.iter().map(|e| e.value.len()).sum()
    }

    /// SHA-256 over the names and raw bits of the selected parameters.
    pub fn checksum(&self, mut select: impl FnMut(&ParamEntry) -> bool) -> String {
        let mut hasher = Sha256::new();
        for e in self.entries.iter().filter(|e| select(e)) {
            hasher.update(e.name.as_bytes());
            for v in e.value.iter() {
                hasher.update(v.to_bits().to_le_bytes());
            }
        }
        format!("{:x}", hasher.finalize())
    }

    pub fn to_snapshot(&self) -> Vec<SavedParam> {
        self.entries
            .iter()
            .map(|e| SavedParam {
                name: e.name.clone(),
                shape: [e.value.nrows(), e.value.ncols()],
                frozen: e.frozen,
                data: e.value.iter().copied().collect(),
            })
            .collect()
    }

    /// Overwrites values from a snapshot with identical names and shapes.
    pub fn load_snapshot(&mut self, saved: &[SavedParam]) -> Result<(), String> {
        if saved.len() != self.entries.len() {
            return Err(format!("expected {} tensors, found {}", self.entries.len(), saved.len()));
        }
        for (e, s) in self.entries.iter_mut().zip(saved) {
            if e.name != s.name || [e.value.nrows(), e.value.ncols()] != s.shape {
                return Err(format!(
                    "tensor `{}` {:?} does not match saved `{}` {:?}",
                    e.name,
                    e.value.dim(),
                    s.name,
                    s.shape
                ));
            }
            e.value = Mat::from_shape_vec((s.shape[0], s.shape[1]), s.data.clone()).map_err(|err| err.to_string())?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavedParam {
    pub name: String,
    pub shape: [usize; 2],
    pub frozen: bool,
    pub data: Vec<f64>,
}

pub fn normal_init(rng: &mut impl Rng, rows: usize, cols: usize, std: f64) -> Mat {
    let dist = Normal::new(0.0, std).expect("valid std");
    Mat::from_shape_simple_fn((rows, cols), || dist.sample(rng))
}

/// Decoupled weight-decay Adam. Frozen parameters are never touched.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    step: u64,
    m: Vec<Mat>,
    v: Vec<Mat>,
}

impl AdamW {
    pub fn new(store: &ParamStore, weight_decay: f64) -> Self {
        let zeros = || store.entries.iter().map(|e| Mat::zeros(e.value.dim())).collect();
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Parameters without a gradient in `grads` are treated as having a
    /// zero gradient.
    pub fn step(&mut self, store: &mut ParamStore, grads: &Gradients, lr: f64) {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (i, entry) in store.entries.iter_mut().enumerate() {
            if entry.frozen {
                continue;
            }
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            let (b1, b2) = (self.beta1, self.beta2);
            match grads.get(ParamId(i)) {
                Some(g) => {
                    ndarray::Zip::from(&mut *m).and(g).for_each(|m, &g| *m = b1 * *m + (1.0 - b1) * g);
                    ndarray::Zip::from(&mut *v).and(g).for_each(|v, &g| *v = b2 * *v + (1.0 - b2) * g * g);
                }
                None => {
                    m.mapv_inplace(|x| b1 * x);
                    v.mapv_inplace(|x| b2 * x);
                }
            }
            let wd = self.weight_decay;
            let eps = self.eps;
            ndarray::Zip::from(&mut entry.value).and(&*m).and(&*v).for_each(|w, &m, &v| {
                let update = (m / bc1) / ((v / bc2).sqrt() + eps);
                *w -= lr * (update + wd * *w);
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn adam_skips_frozen_and_descends() {
        let mut store = ParamStore::new();
        let a = store.add("a", array![[1.0, -2.0]], false);
        let f = store.add("f", array![[3.0]], true);
        let mut opt = AdamW::new(&store, 0.0);
        let before = store.checksum(|e| e.frozen);
        for _ in 0..200 {
            // d/da of sum(a^2)
            let g = store.entry(a).value.mapv(|x| 2.0 * x);
            let mut grads = Gradients::default();
            grads_insert(&mut grads, a, g);
            opt.step(&mut store, &grads, 0.05);
        }
        assert_eq!(store.checksum(|e| e.frozen), before);
        assert_eq!(store.entry(f).value[[0, 0]], 3.0);
        assert!(store.entry(a).value.iter().all(|v| v.abs() < 0.1));
    }

    fn grads_insert(grads: &mut Gradients, id: ParamId, g: Mat) {
        grads.insert(id, g);
    }

    #[test]
    fn snapshot_round_trip() {
        let mut store = ParamStore::new();
        store.add("w", array![[1.0, 2.0], [3.0, 4.0]], false);
        let snap = store.to_snapshot();
        let mut other = store.clone();
        *other.value_mut(ParamId(0)) *= 0.0;
        other.load_snapshot(&snap).unwrap();
        assert_eq!(other, store);
        let mut bad = snap.clone();
        bad[0].shape = [4, 1];
        assert!(other.load_snapshot(&bad).is_err());
    }
}
