//! Counterbalanced presentation orders.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// `n × n` grid in which every symbol appears once per row and column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatinSquare {
    pub rows: Vec<Vec<usize>>,
}

#[derive(Debug, thiserror::Error)]
#[error("a Latin square needs n >= 1")]
pub struct EmptySquare;

impl LatinSquare {
    /// The cyclic square with rows, columns and symbols shuffled by `seed`.
    pub fn random(n: usize, seed: u64) -> Result<Self, EmptySquare> {
        if n == 0 {
            return Err(EmptySquare);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let perm = |rng: &mut ChaCha8Rng| {
            let mut p: Vec<usize> = (0..n).collect();
            p.shuffle(rng);
            p
        };
        let (r, c, s) = (perm(&mut rng), perm(&mut rng), perm(&mut rng));
        let rows = (0..n).map(|i| (0..n).map(|j| s[(r[i] + c[j]) % n]).collect()).collect();
        Ok(Self { rows })
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn is_valid(&self) -> bool {
        let n = self.n();
        let perm = |cells: Vec<usize>| {
            let mut seen = vec![false; n];
            cells.into_iter().all(|v| v < n && !std::mem::replace(&mut seen[v], true))
        };
        self.rows.iter().all(|r| r.len() == n && perm(r.clone()))
            && (0..n).all(|j| perm(self.rows.iter().map(|r| r[j]).collect()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trivial_and_valid() {
        assert_eq!(LatinSquare::random(1, 3).unwrap().rows, vec![vec![0]]);
        assert!(LatinSquare::random(0, 0).is_err());
        for seed in 0..20 {
            assert!(LatinSquare::random(5, seed).unwrap().is_valid());
        }
        assert_eq!(LatinSquare::random(5, 9).unwrap(), LatinSquare::random(5, 9).unwrap());
    }

    #[test]
    fn invalid_square_detected() {
        let sq = LatinSquare { rows: vec![vec![0, 1], vec![0, 1]] };
        assert!(!sq.is_valid());
    }
}
