use crate::palette::is_excluded_category;
use crate::scene::{Action, NavPath, Point2, Region, SceneObject};

use super::MapError;

/// Vertical distance under which an object is kept regardless of its extent.
pub const FLOOR_HEIGHT_TOLERANCE: f64 = 1.6;

/// Heading changes up to this many degrees (inclusive) count as straight.
pub const STRAIGHT_THRESHOLD_DEG: f64 = 20.0;

// Absorbs rounding in the inclusive 20 degree boundary.
const ANGLE_EPS_DEG: f64 = 1e-9;

/// True when the object belongs to the floor the agent stands on.
pub fn on_agent_floor(object: &SceneObject, agent_height: f64) -> bool {
    let h = object.center[2];
    let half = object.extents[2] / 2.0;
    let spans_agent = h - half <= agent_height && agent_height <= h + half;
    spans_agent || (h - agent_height).abs() <= FLOOR_HEIGHT_TOLERANCE
}

/// Drops excluded categories, then keeps objects on the agent's floor.
/// Input order is preserved.
pub fn filter_objects_for_floor(objects: &[SceneObject], agent_height: f64) -> Vec<SceneObject> {
    objects
        .iter()
        .filter(|o| !is_excluded_category(&o.category))
        .filter(|o| on_agent_floor(o, agent_height))
        .cloned()
        .collect()
}

/// Names of every region whose rectangle contains `point` (boundary included).
pub fn assign_regions(point: Point2, regions: &[Region]) -> Vec<String> {
    regions
        .iter()
        .filter(|r| r.contains(point))
        .map(|r| r.name.clone())
        .collect()
}

/// Signed heading change in degrees from segment `a→b` to `b→c`,
/// counterclockwise positive, in (-180, 180].
pub fn heading_change_deg(a: Point2, b: Point2, c: Point2) -> f64 {
    let (ux, uy) = (b.x - a.x, b.y - a.y);
    let (vx, vy) = (c.x - b.x, c.y - b.y);
    let cross = ux * vy - uy * vx;
    let dot = ux * vx + uy * vy;
    let deg = cross.atan2(dot).to_degrees();
    if deg <= -180.0 {
        deg + 360.0
    } else {
        deg
    }
}

pub fn action_for_turn(delta_deg: f64) -> Action {
    if delta_deg.abs() <= STRAIGHT_THRESHOLD_DEG + ANGLE_EPS_DEG {
        Action::Straight
    } else if delta_deg > 0.0 {
        Action::Left
    } else {
        Action::Right
    }
}

/// One action per path point: STRAIGHT first, STOP last, and interior
/// points classified by their heading change (y axis up, so a
/// counterclockwise change is a left turn).
pub fn classify_actions(path: &NavPath) -> Result<Vec<Action>, MapError> {
    let pts = &path.points;
    if pts.len() < 2 {
        return Err(MapError::InvalidPath(format!(
            "need at least 2 points, got {}",
            pts.len()
        )));
    }
    if let Some(k) = pts.windows(2).position(|w| w[0] == w[1]) {
        return Err(MapError::InvalidPath(format!(
            "points {k} and {} coincide; heading undefined",
            k + 1
        )));
    }
    let mut actions = Vec::with_capacity(pts.len());
    actions.push(Action::Straight);
    for w in pts.windows(3) {
        actions.push(action_for_turn(heading_change_deg(w[0], w[1], w[2])));
    }
    actions.push(Action::Stop);
    Ok(actions)
}
