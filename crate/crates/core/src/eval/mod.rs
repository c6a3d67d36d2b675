//! Automatic metrics, significance tests and report assembly.

pub mod bleu;
pub mod io;
pub mod propositions;
pub mod report;
pub mod stats;

pub use bleu::sentence_bleu;
pub use io::{ExampleScore, Generation, HumanScore};
pub use propositions::{extract_propositions, proposition_f1, Lexicon, Proposition, PropositionKind};
pub use report::{evaluate_systems, EvalOptions, EvalReport, PValueMatrix, PropositionScorer, Scorer};
pub use stats::{kendall_tau_b, permutation_test, PermutationMode, PermutationOptions, PermutationResult};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("both samples must be non-empty")]
    EmptySample,
    #[error("scores must be finite numbers")]
    NonFinite,
    #[error("exact enumeration of {0} splits is too large; use monte_carlo mode")]
    TooManySplits(u64),
    #[error("invalid option: {0}")]
    InvalidOption(String),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least two observations")]
    TooShort,
    #[error("rank correlation is undefined for a constant input")]
    ConstantInput,
    #[error("episode sets differ: {0}")]
    EpisodeMismatch(String),
    #[error("duplicate entry: {0}")]
    Duplicate(String),
    #[error("no imported score for system {system} on episode {episode}")]
    MissingScore { system: String, episode: String },
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
