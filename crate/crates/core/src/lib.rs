//! Top-down semantic-map navigation instructions: episode construction,
//! a small multimodal captioner trained from scratch, and evaluation.

pub mod captioner;
pub mod dataset;
pub mod eval;
pub mod latin;
pub mod map;
pub mod palette;
pub mod prompt;
pub mod scene;

pub use map::{MapError, SemanticMap};
pub use latin::LatinSquare;
pub use palette::{Palette, Rgb};
pub use prompt::PromptTemplate;
pub use scene::{Action, Episode, NavPath, Point2, Region, Scene, SceneError, SceneObject, Split};
