//! Prompt text describing the landmarks around the start marker.

use serde::{Deserialize, Serialize};

use crate::map::geometry::filter_objects_for_floor;
use crate::scene::{Episode, NavPath, Point2, Scene};

pub const DEFAULT_TEMPLATE: &str = "Starting from the dark yellow point [objects] [regions], [instruction]";
pub const DEFAULT_NEAR_THRESHOLD: f64 = 1.5;
pub const MAX_PROMPT_OBJECTS: usize = 2;

const OBJECTS_SLOT: &str = "[objects]";
const REGIONS_SLOT: &str = "[regions]";
const INSTRUCTION_SLOT: &str = "[instruction]";

#[derive(Debug, thiserror::Error)]
#[error("prompt template is missing the `{0}` slot")]
pub struct TemplateError(&'static str);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptTemplate {
    pub template: String,
    pub object_prefix: String,
    /// `{name}` is replaced by the region name.
    pub region_pattern: String,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self {
            template: DEFAULT_TEMPLATE.into(),
            object_prefix: "near ".into(),
            region_pattern: "in the {name} region".into(),
        }
    }
}

impl PromptTemplate {
    pub fn validate(&self) -> Result<(), TemplateError> {
        for slot in [OBJECTS_SLOT, REGIONS_SLOT, INSTRUCTION_SLOT] {
            if !self.template.contains(slot) {
                return Err(TemplateError(slot));
            }
        }
        Ok(())
    }

    /// Fixed text before the first slot.
    pub fn head(&self) -> &str {
        let cut = [OBJECTS_SLOT, REGIONS_SLOT, INSTRUCTION_SLOT]
            .iter()
            .filter_map(|s| self.template.find(s))
            .min()
            .unwrap_or(self.template.len());
        self.template[..cut].trim_end()
    }

    /// Fills the slots. Empty slots disappear together with the space
    /// before them; the instruction slot is left open.
    pub fn render(&self, objects: &[&str], region: Option<&str>) -> String {
        let objects_text = if objects.is_empty() {
            String::new()
        } else {
            format!("{}{}", self.object_prefix, objects.join(" "))
        };
        let region_text = region
            .map(|name| self.region_pattern.replace("{name}", name))
            .unwrap_or_default();
        let mut out = self.template.clone();
        for (slot, text) in [(OBJECTS_SLOT, objects_text), (REGIONS_SLOT, region_text)] {
            if text.is_empty() {
                out = out.replace(&format!(" {slot}"), "").replace(slot, "");
            } else {
                out = out.replace(slot, &text);
            }
        }
        out.replace(INSTRUCTION_SLOT, "")
    }
}

/// Up to two distinct floor-filtered categories within `near_threshold`
/// meters of `point`, nearest first.
pub fn nearby_categories(scene: &Scene, point: Point2, agent_height: f64, near_threshold: f64) -> Vec<String> {
    let mut near: Vec<(f64, usize, String)> = filter_objects_for_floor(&scene.objects, agent_height)
        .into_iter()
        .enumerate()
        .map(|(i, o)| (o.footprint_distance(point), i, o.category))
        .filter(|(d, _, _)| *d <= near_threshold)
        .collect();
    near.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut out: Vec<String> = Vec::new();
    for (_, _, category) in near {
        if !out.contains(&category) {
            out.push(category);
        }
        if out.len() == MAX_PROMPT_OBJECTS {
            break;
        }
    }
    out
}

pub fn build_prompt_for_path(
    template: &PromptTemplate,
    scene: &Scene,
    path: &NavPath,
    start_regions: &[String],
    near_threshold: f64,
) -> String {
    let start = path.points.first().copied().unwrap_or_default();
    let objects = nearby_categories(scene, start, path.agent_height, near_threshold);
    let names: Vec<&str> = objects.iter().map(String::as_str).collect();
    template.render(&names, start_regions.first().map(String::as_str))
}

pub fn build_prompt(template: &PromptTemplate, episode: &Episode, scene: &Scene, near_threshold: f64) -> String {
    let start_regions = episode.point_regions.first().map(Vec::as_slice).unwrap_or(&[]);
    build_prompt_for_path(template, scene, &episode.path, start_regions, near_threshold)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{Bounds, SceneObject};

    fn scene_with(objects: Vec<SceneObject>) -> Scene {
        Scene {
            id: "s".into(),
            bounds: Bounds {
                min: Point2::new(-10.0, -10.0),
                max: Point2::new(10.0, 10.0),
            },
            objects,
            regions: vec![],
            navigable_polygons: vec![],
        }
    }

    fn obj(cat: &str, x: f64, y: f64) -> SceneObject {
        SceneObject {
            id: cat.into(),
            category: cat.into(),
            center: [x, y, 0.5],
            extents: [0.5, 0.5, 1.0],
        }
    }

    #[test]
    fn example_prompt() {
        let t = PromptTemplate::default();
        assert_eq!(
            t.render(&["sofa", "cushion"], Some("living room")),
            "Starting from the dark yellow point near sofa cushion in the living room region, "
        );
        assert_eq!(
            t.render(&[], Some("hallway")),
            "Starting from the dark yellow point in the hallway region, "
        );
        assert_eq!(t.render(&[], None), "Starting from the dark yellow point, ");
        assert_eq!(t.render(&["bed"], None), "Starting from the dark yellow point near bed, ");
        assert_eq!(t.head(), "Starting from the dark yellow point");
    }

    #[test]
    fn nearest_two_distinct_categories() {
        let scene = scene_with(vec![
            obj("plant", 3.0, 0.0),
            obj("cushion", 1.0, 0.0),
            obj("sofa", 0.5, 0.0),
            obj("sofa", 0.0, 0.6),
            obj("curtain", 0.0, 0.0),
        ]);
        let near = nearby_categories(&scene, Point2::new(0.0, 0.0), 1.0, 1.5);
        assert_eq!(near, vec!["sofa".to_string(), "cushion".to_string()]);
    }

    #[test]
    fn far_objects_ignored() {
        let scene = scene_with(vec![obj("bed", 5.0, 5.0)]);
        let path = NavPath::new(vec![Point2::new(0.0, 0.0), Point2::new(1.0, 0.0)], 1.0);
        let p = build_prompt_for_path(&PromptTemplate::default(), &scene, &path, &["hallway".into()], 1.5);
        assert_eq!(p, "Starting from the dark yellow point in the hallway region, ");
    }

    #[test]
    fn template_validation() {
        let bad = PromptTemplate {
            template: "Begin [objects], [instruction]".into(),
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        assert!(PromptTemplate::default().validate().is_ok());
    }
}
