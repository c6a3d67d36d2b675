use super::graph::{Graph, Mat, Var};
use super::CaptionerError;

/// Token-level cross-entropy over the rows that carry a label.
pub fn generation_loss(g: &mut Graph, logits: Var, labels: &[Option<usize>]) -> Var {
    g.cross_entropy(logits, labels)
}

/// Pooled input and instruction embeddings of one batch; row `i` of each
/// belongs to the same example, which is the ground-truth pairing.
#[derive(Debug, Clone, Copy)]
pub struct FusionBatch {
    pub e_input: Var,
    pub e_text: Var,
}

impl FusionBatch {
    /// `C_pred = norm(E_input) · norm(E_text)ᵀ · exp(logit_scale)`.
    pub fn similarity(&self, g: &mut Graph, logit_scale: Var) -> Result<Var, CaptionerError> {
        for v in [self.e_input, self.e_text] {
            if g.value(v).rows().into_iter().any(|r| r.dot(&r) == 0.0) {
                return Err(CaptionerError::ZeroNorm);
            }
        }
        let a = g.l2_normalize_rows(self.e_input);
        let b = g.l2_normalize_rows(self.e_text);
        let sim = g.matmul_t(a, b);
        let scale = g.exp(logit_scale);
        Ok(g.scale_by(sim, scale))
    }
}

/// Cross-entropy of `c_pred` against the identity pairing.
///
/// Without `negatives` both directions are scored and averaged, every
/// other batch row acting as a negative. With `negatives[i] = j`, row `i`
/// competes only against instruction `j`.
pub fn pairing_loss(g: &mut Graph, c_pred: Var, negatives: Option<&[usize]>) -> Var {
    let (b, cols) = g.shape(c_pred);
    assert_eq!(b, cols, "similarity matrix must be square");
    let targets: Vec<Option<usize>> = (0..b).map(Some).collect();
    match negatives {
        None => {
            let rows = g.cross_entropy(c_pred, &targets);
            let t = g.transpose(c_pred);
            let cols = g.cross_entropy(t, &targets);
            let both = g.add(rows, cols);
            g.scale(both, 0.5)
        }
        Some(neg) => {
            assert_eq!(neg.len(), b, "one negative per row");
            let mut mask = Mat::from_elem((b, b), -1e9);
            for (i, &j) in neg.iter().enumerate() {
                mask[[i, i]] = 0.0;
                mask[[i, j]] = 0.0;
            }
            let mask = g.constant(mask);
            let masked = g.add(c_pred, mask);
            g.cross_entropy(masked, &targets)
        }
    }
}

pub fn contrastive_loss(
    g: &mut Graph,
    batch: FusionBatch,
    logit_scale: Var,
    negatives: Option<&[usize]>,
) -> Result<Var, CaptionerError> {
    let c_pred = batch.similarity(g, logit_scale)?;
    Ok(pairing_loss(g, c_pred, negatives))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::captioner::params::ParamStore;
    use ndarray::Array2;

    fn loss_of(c: Array2<f64>) -> f64 {
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let v = g.constant(c);
        let l = pairing_loss(&mut g, v, None);
        g.scalar(l)
    }

    /// Symmetric CE written out directly from the definition.
    fn oracle(c: &Array2<f64>) -> f64 {
        let b = c.nrows();
        let mut total = 0.0;
        for i in 0..b {
            let row: f64 = (0..b).map(|j| c[[i, j]].exp()).sum();
            let col: f64 = (0..b).map(|j| c[[j, i]].exp()).sum();
            total += (row.ln() - c[[i, i]]) + (col.ln() - c[[i, i]]);
        }
        total / (2.0 * b as f64)
    }

    #[test]
    fn batch_of_one_is_exactly_zero() {
        assert_eq!(loss_of(Array2::from_elem((1, 1), 3.7)), 0.0);
    }

    #[test]
    fn uniform_is_ln_b() {
        for b in [2usize, 4, 8] {
            let l = loss_of(Array2::from_elem((b, b), 0.3));
            assert!((l - (b as f64).ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn diagonal_ten() {
        let c = Array2::from_shape_fn((2, 2), |(i, j)| if i == j { 10.0 } else { 0.0 });
        let expected = (1.0 + (-10.0f64).exp()).ln();
        assert!((loss_of(c) - expected).abs() < 1e-12);
    }

    #[test]
    fn matches_direct_formula_on_random_matrix() {
        let c = Array2::from_shape_fn((5, 5), |(i, j)| ((i * 7 + j * 3) % 11) as f64 * 0.37 - 1.2);
        assert!((loss_of(c.clone()) - oracle(&c)).abs() < 1e-12);
    }

    #[test]
    fn sampled_negatives_use_one_competitor() {
        let c = Array2::from_shape_fn((3, 3), |(i, j)| (i as f64) - 0.5 * j as f64);
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let v = g.constant(c.clone());
        let neg = [2usize, 0, 1];
        let l = pairing_loss(&mut g, v, Some(&neg));
        let expected: f64 = (0..3)
            .map(|i| {
                let (p, n) = (c[[i, i]], c[[i, neg[i]]]);
                (p.exp() + n.exp()).ln() - p
            })
            .sum::<f64>()
            / 3.0;
        assert!((g.scalar(l) - expected).abs() < 1e-12);
    }

    #[test]
    fn zero_norm_rejected() {
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let e_input = g.constant(Array2::zeros((2, 3)));
        let e_text = g.constant(Array2::ones((2, 3)));
        let s = g.constant(Array2::zeros((1, 1)));
        let r = contrastive_loss(&mut g, FusionBatch { e_input, e_text }, s, None);
        assert!(matches!(r, Err(CaptionerError::ZeroNorm)));
    }
}
