//! World model: objects, regions, paths and the episodes built from them.
//!
//! Scenes are stored as one JSON document per file and episodes as JSON
//! lines. Loading validates every structural invariant so downstream code
//! can rely on them.

mod io;
pub mod synth;

use serde::{Deserialize, Serialize};

pub use io::{
    load_episodes, load_scene, read_episodes, read_scene, save_episodes, save_scene,
    scene_to_json, write_episodes,
};
pub use synth::{generate_synthetic_scene, SynthSpec};

use crate::palette::{is_excluded_category, Palette};

#[derive(Debug, thiserror::Error)]
pub enum SceneError {
    #[error("{path}: schema violation at `{field}`: {message}")]
    Schema {
        path: String,
        field: String,
        message: String,
    },
    #[error("object `{object}` has unknown category `{category}`; valid categories: {}", .valid.join(", "))]
    UnknownCategory {
        object: String,
        category: String,
        valid: Vec<String>,
    },
    #[error("invalid scene: {0}")]
    Invalid(String),
    #[error("invalid episode `{id}`: {message}")]
    InvalidEpisode { id: String, message: String },
    #[error("infeasible synthetic spec: {0}")]
    InfeasibleSpec(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A 2D world position in meters, serialized as `[x, y]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

impl From<[f64; 2]> for Point2 {
    fn from([x, y]: [f64; 2]) -> Self {
        Self { x, y }
    }
}

impl From<Point2> for [f64; 2] {
    fn from(p: Point2) -> Self {
        [p.x, p.y]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub id: String,
    pub category: String,
    /// Box center `(x, y, h)`.
    pub center: [f64; 3],
    /// Full box widths `(w_x, w_y, w_h)`.
    pub extents: [f64; 3],
}

impl SceneObject {
    pub fn footprint_area(&self) -> f64 {
        self.extents[0] * self.extents[1]
    }

    /// Distance from `p` to the object's 2D footprint (zero inside it).
    pub fn footprint_distance(&self, p: Point2) -> f64 {
        let dx = ((p.x - self.center[0]).abs() - self.extents[0] / 2.0).max(0.0);
        let dy = ((p.y - self.center[1]).abs() - self.extents[1] / 2.0).max(0.0);
        dx.hypot(dy)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub id: String,
    pub name: String,
    pub center: Point2,
    /// Full widths `(w_x, w_y)`.
    pub extents: [f64; 2],
}

impl Region {
    pub fn contains(&self, p: Point2) -> bool {
        let hx = self.extents[0] / 2.0;
        let hy = self.extents[1] / 2.0;
        self.center.x - hx <= p.x
            && p.x <= self.center.x + hx
            && self.center.y - hy <= p.y
            && p.y <= self.center.y + hy
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min: Point2,
    pub max: Point2,
}

impl Bounds {
    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn contains(&self, p: Point2) -> bool {
        self.min.x <= p.x && p.x <= self.max.x && self.min.y <= p.y && p.y <= self.max.y
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub id: String,
    pub bounds: Bounds,
    pub objects: Vec<SceneObject>,
    pub regions: Vec<Region>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub navigable_polygons: Vec<Vec<Point2>>,
}

impl Scene {
    /// Checks every invariant of the scene model.
    pub fn validate(&self) -> Result<(), SceneError> {
        if !(self.bounds.width() > 0.0 && self.bounds.height() > 0.0) {
            return Err(SceneError::Invalid(format!(
                "scene `{}` has degenerate bounds",
                self.id
            )));
        }
        let palette = Palette::standard();
        for obj in &self.objects {
            if palette.color(&obj.category).is_none() && !is_excluded_category(&obj.category) {
                return Err(SceneError::UnknownCategory {
                    object: obj.id.clone(),
                    category: obj.category.clone(),
                    valid: palette.categories().map(str::to_owned).collect(),
                });
            }
            if obj.extents.iter().any(|&e| !(e > 0.0)) {
                return Err(SceneError::Invalid(format!(
                    "object `{}` has non-positive extents {:?}",
                    obj.id, obj.extents
                )));
            }
            let c = Point2::new(obj.center[0], obj.center[1]);
            if !self.bounds.contains(c) {
                return Err(SceneError::Invalid(format!(
                    "object `{}` center lies outside the scene bounds",
                    obj.id
                )));
            }
        }
        for region in &self.regions {
            if region.name.trim().is_empty() {
                return Err(SceneError::Invalid(format!(
                    "region `{}` has an empty name",
                    region.id
                )));
            }
            if region.extents.iter().any(|&e| !(e > 0.0)) {
                return Err(SceneError::Invalid(format!(
                    "region `{}` has non-positive extents",
                    region.id
                )));
            }
            if !self.bounds.contains(region.center) {
                return Err(SceneError::Invalid(format!(
                    "region `{}` center lies outside the scene bounds",
                    region.id
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NavPath {
    pub points: Vec<Point2>,
    pub agent_height: f64,
}

impl NavPath {
    pub fn new(points: Vec<Point2>, agent_height: f64) -> Self {
        Self {
            points,
            agent_height,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.points.len() < 2 {
            return Err(format!("path needs at least 2 points, got {}", self.points.len()));
        }
        if let Some(k) = self.points.windows(2).position(|w| w[0] == w[1]) {
            return Err(format!("points {} and {} coincide", k, k + 1));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Action {
    Left,
    Right,
    Straight,
    Stop,
}

impl Action {
    pub const ALL: [Action; 4] = [Action::Left, Action::Right, Action::Straight, Action::Stop];

    pub fn index(self) -> usize {
        self as usize
    }

    /// The word used for this action in instructions.
    pub fn word(self) -> &'static str {
        match self {
            Action::Left => "left",
            Action::Right => "right",
            Action::Straight => "straight",
            Action::Stop => "stop",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    ValSeen,
    ValUnseen,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::ValSeen, Split::ValUnseen];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::ValSeen => "val_seen",
            Split::ValUnseen => "val_unseen",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "val_seen" => Ok(Split::ValSeen),
            "val_unseen" => Ok(Split::ValUnseen),
            other => Err(format!(
                "unknown split `{other}` (expected train, val_seen or val_unseen)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub id: String,
    pub scene_id: String,
    pub split: Split,
    pub path: NavPath,
    /// Relative to the directory holding the episode file.
    pub map_image_path: String,
    pub point_regions: Vec<Vec<String>>,
    pub actions: Vec<Action>,
    pub prompt: String,
    pub references: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub panorama_paths: Option<Vec<String>>,
}

impl Episode {
    pub fn validate(&self) -> Result<(), SceneError> {
        let fail = |message: String| SceneError::InvalidEpisode {
            id: self.id.clone(),
            message,
        };
        self.path.validate().map_err(fail)?;
        let k = self.path.len();
        if self.actions.len() != k {
            return Err(fail(format!("{} actions for {k} points", self.actions.len())));
        }
        if self.point_regions.len() != k {
            return Err(fail(format!(
                "{} region lists for {k} points",
                self.point_regions.len()
            )));
        }
        if self.actions.last() != Some(&Action::Stop) {
            return Err(fail("final action must be STOP".into()));
        }
        if self.references.is_empty() {
            return Err(fail("at least one reference instruction is required".into()));
        }
        if let Some(panos) = &self.panorama_paths {
            if panos.len() != k {
                return Err(fail(format!("{} panoramas for {k} points", panos.len())));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn region_containment_is_inclusive() {
        let r = Region {
            id: "r".into(),
            name: "hallway".into(),
            center: Point2::new(0.0, 0.0),
            extents: [2.0, 2.0],
        };
        assert!(r.contains(Point2::new(0.0, 0.0)));
        assert!(r.contains(Point2::new(1.0, 0.0)));
        assert!(!r.contains(Point2::new(1.1, 0.0)));
    }

    #[test]
    fn repeated_points_rejected() {
        let p = NavPath::new(vec![Point2::new(0.0, 0.0), Point2::new(0.0, 0.0)], 1.0);
        assert!(p.validate().is_err());
        let p = NavPath::new(vec![Point2::new(0.0, 0.0)], 1.0);
        assert!(p.validate().is_err());
    }

    #[test]
    fn footprint_distance_zero_inside() {
        let o = SceneObject {
            id: "o".into(),
            category: "sofa".into(),
            center: [0.0, 0.0, 0.4],
            extents: [2.0, 1.0, 0.8],
        };
        assert_eq!(o.footprint_distance(Point2::new(0.5, 0.2)), 0.0);
        assert!((o.footprint_distance(Point2::new(4.0, 4.5)) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn action_serializes_screaming_case() {
        assert_eq!(serde_json::to_string(&Action::Straight).unwrap(), "\"STRAIGHT\"");
        let a: Action = serde_json::from_str("\"STOP\"").unwrap();
        assert_eq!(a, Action::Stop);
    }
}
