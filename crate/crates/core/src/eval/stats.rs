use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EvalError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PermutationMode {
    /// Exact when the number of splits is at most `exact_limit`.
    #[default]
    Auto,
    Exact,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PermutationOptions {
    pub resamples: usize,
    pub seed: u64,
    pub mode: PermutationMode,
    pub exact_limit: u64,
}

impl Default for PermutationOptions {
    fn default() -> Self {
        Self { resamples: 10_000, seed: 0, mode: PermutationMode::Auto, exact_limit: 20_000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PermutationResult {
    pub p_value: f64,
    pub observed: f64,
    pub exact: bool,
}

/// `C(n, k)`, saturating at `u64::MAX`.
pub fn binomial(n: u64, k: u64) -> u64 {
    let k = k.min(n.saturating_sub(k));
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * u128::from(n - i) / u128::from(i + 1);
        if acc > u128::from(u64::MAX) {
            return u64::MAX;
        }
    }
    acc as u64
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Two-sided test on `|mean(a) − mean(b)|` under random relabeling.
pub fn permutation_test(a: &[f64], b: &[f64], opts: &PermutationOptions) -> Result<PermutationResult, EvalError> {
    if a.is_empty() || b.is_empty() {
        return Err(EvalError::EmptySample);
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(EvalError::NonFinite);
    }
    let (n, m) = (a.len(), b.len());
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let total: f64 = pooled.iter().sum();
    let stat = |sum_a: f64| (sum_a / n as f64 - (total - sum_a) / m as f64).abs();
    let observed = (mean(a) - mean(b)).abs();
    let lo = pooled.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = pooled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // ties in the statistic are decided relative to the data's own scale
    let tol = 1e-9 * (hi - lo).max(observed);
    let at_least = |s: f64| s >= observed - tol;

    let splits = binomial((n + m) as u64, n as u64);
    let exact = match opts.mode {
        PermutationMode::Exact => true,
        PermutationMode::MonteCarlo => false,
        PermutationMode::Auto => splits <= opts.exact_limit,
    };
    if exact {
        if splits > 50_000_000 {
            return Err(EvalError::TooManySplits(splits));
        }
        let mut idx: Vec<usize> = (0..n).collect();
        let big = n + m;
        let (mut hits, mut count) = (0u64, 0u64);
        loop {
            let sum_a: f64 = idx.iter().map(|&i| pooled[i]).sum();
            hits += u64::from(at_least(stat(sum_a)));
            count += 1;
            // next n-combination in lexicographic order
            let mut i = n;
            while i > 0 && idx[i - 1] == big - n + i - 1 {
                i -= 1;
            }
            if i == 0 {
                break;
            }
            idx[i - 1] += 1;
            for j in i..n {
                idx[j] = idx[j - 1] + 1;
            }
        }
        return Ok(PermutationResult { p_value: hits as f64 / count as f64, observed, exact: true });
    }

    if opts.resamples == 0 {
        return Err(EvalError::InvalidOption("resamples must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut work = pooled.clone();
    let mut hits = 0u64;
    for _ in 0..opts.resamples {
        work.shuffle(&mut rng);
        let sum_a: f64 = work[..n].iter().sum();
        hits += u64::from(at_least(stat(sum_a)));
    }
    let p_value = (1 + hits) as f64 / (1 + opts.resamples) as f64;
    Ok(PermutationResult { p_value, observed, exact: false })
}

/// Tie-corrected Kendall rank correlation.
pub fn kendall_tau_b(x: &[f64], y: &[f64]) -> Result<f64, EvalError> {
    if x.len() != y.len() {
        return Err(EvalError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(EvalError::TooShort);
    }
    if x.iter().chain(y).any(|v| v.is_nan()) {
        return Err(EvalError::NonFinite);
    }
    let (mut concordant, mut discordant, mut tied_x, mut tied_y) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            let dx = x[i].partial_cmp(&x[j]).expect("no NaN") as i64;
            let dy = y[i].partial_cmp(&y[j]).expect("no NaN") as i64;
            if dx == 0 {
                tied_x += 1;
            }
            if dy == 0 {
                tied_y += 1;
            }
            match dx * dy {
                1 => concordant += 1,
                -1 => discordant += 1,
                _ => {}
            }
        }
    }
    let pairs = (x.len() * (x.len() - 1) / 2) as i64;
    if tied_x == pairs || tied_y == pairs {
        return Err(EvalError::ConstantInput);
    }
    let denom = (((pairs - tied_x) * (pairs - tied_y)) as f64).sqrt();
    Ok((concordant - discordant) as f64 / denom)
}

/// "**" at p ≤ 0.01, "*" at p ≤ 0.05.
pub fn stars(p: f64) -> &'static str {
    if p <= 0.01 {
        "**"
    } else if p <= 0.05 {
        "*"
    } else {
        ""
    }
}
