//! Deterministic synthetic houses with paths and template instructions.
//!
//! Rooms sit on a grid and neighbouring rooms share a door. Paths walk from
//! a random spot through one to three rooms; reference instructions are
//! realized from the path's actions, the regions it passes and the objects
//! near its turns, so they are learnable from the episode inputs.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Action, Bounds, NavPath, Point2, Region, Scene, SceneError, SceneObject};
use crate::map::geometry::{assign_regions, classify_actions, filter_objects_for_floor};

pub const ROOM_NAMES: [&str; 12] = [
    "living room",
    "kitchen",
    "hallway",
    "bedroom",
    "bathroom",
    "dining room",
    "office",
    "laundry room",
    "closet",
    "family room",
    "entryway",
    "porch",
];

fn room_kit(name: &str) -> &'static [&'static str] {
    match name {
        "living room" => &["sofa", "cushion", "table", "tv_monitor", "plant", "fireplace", "chair"],
        "kitchen" => &["counter", "sink", "cabinet", "stool", "appliances", "table"],
        "bedroom" => &["bed", "chest_of_drawers", "cabinet", "picture", "mirror", "clothes"],
        "bathroom" => &["toilet", "sink", "shower", "bathtub", "towel", "mirror"],
        "dining room" => &["table", "chair", "cabinet", "picture", "plant"],
        "office" => &["table", "chair", "shelving", "tv_monitor", "board_panel"],
        "hallway" => &["picture", "plant", "shelving", "railing", "stairs"],
        "laundry room" => &["appliances", "sink", "cabinet", "clothes", "towel"],
        "closet" => &["shelving", "clothes", "cabinet", "blinds"],
        "family room" => &["sofa", "seating", "tv_monitor", "cushion", "gym_equipment"],
        "entryway" => &["furniture", "seating", "plant", "mirror", "column"],
        _ => &["seating", "plant", "railing", "column", "furniture"],
    }
}

const BIG_CATEGORIES: [&str; 6] = ["sofa", "bed", "table", "counter", "bathtub", "gym_equipment"];

/// Distance under which an object serves as a landmark in instructions.
pub const LANDMARK_RADIUS: f64 = 1.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    /// Inclusive range of room counts.
    pub rooms: (usize, usize),
    pub objects_per_room: (usize, usize),
    /// Inclusive range of room side lengths in meters.
    pub room_size: (f64, f64),
    pub paths: usize,
    pub references_per_path: usize,
    pub agent_height: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            rooms: (3, 5),
            objects_per_room: (3, 5),
            room_size: (4.0, 6.5),
            paths: 10,
            references_per_path: 1,
            agent_height: 1.25,
        }
    }
}

impl SynthSpec {
    fn validate(&self) -> Result<(), SceneError> {
        let bad = |m: &str| Err(SceneError::InfeasibleSpec(m.to_owned()));
        if self.rooms.1 == 0 || self.rooms.0 > self.rooms.1 {
            return bad("room count range must be non-empty and allow at least one room");
        }
        if self.objects_per_room.0 > self.objects_per_room.1 {
            return bad("objects-per-room range is empty");
        }
        if !(self.room_size.0 >= 2.5 && self.room_size.0 <= self.room_size.1) {
            return bad("room sizes must be at least 2.5 m and form a valid range");
        }
        if self.references_per_path == 0 {
            return bad("at least one reference per path is required");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub scene: Scene,
    pub paths: Vec<NavPath>,
    /// One list of reference instructions per path.
    pub references: Vec<Vec<String>>,
}

#[derive(Debug, Clone, Copy)]
struct Room {
    x0: f64,
    y0: f64,
    x1: f64,
    y1: f64,
}

impl Room {
    fn center(&self) -> Point2 {
        Point2::new((self.x0 + self.x1) / 2.0, (self.y0 + self.y1) / 2.0)
    }

    fn sample(&self, rng: &mut ChaCha8Rng, margin: f64) -> Point2 {
        Point2::new(
            rng.gen_range(self.x0 + margin..=self.x1 - margin),
            rng.gen_range(self.y0 + margin..=self.y1 - margin),
        )
    }
}

#[derive(Debug, Clone, Copy)]
struct Door {
    a: usize,
    b: usize,
    at: Point2,
    /// Unit step from room `a` into room `b`.
    dir: (f64, f64),
}

pub fn generate_synthetic_scene(seed: u64, spec: &SynthSpec) -> Result<SyntheticScene, SceneError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_rooms = rng.gen_range(spec.rooms.0.max(1)..=spec.rooms.1);
    let cols = (n_rooms as f64).sqrt().ceil() as usize;
    let rows = n_rooms.div_ceil(cols);
    let widths: Vec<f64> = (0..cols).map(|_| rng.gen_range(spec.room_size.0..=spec.room_size.1)).collect();
    let heights: Vec<f64> = (0..rows).map(|_| rng.gen_range(spec.room_size.0..=spec.room_size.1)).collect();
    let margin = 0.5;

    let mut rooms = Vec::with_capacity(n_rooms);
    let mut cell = Vec::with_capacity(n_rooms);
    for idx in 0..n_rooms {
        let (i, j) = (idx / cols, idx % cols);
        let x0 = margin + widths[..j].iter().sum::<f64>();
        let y0 = margin + heights[..i].iter().sum::<f64>();
        rooms.push(Room {
            x0,
            y0,
            x1: x0 + widths[j],
            y1: y0 + heights[i],
        });
        cell.push((i, j));
    }
    let bounds = Bounds {
        min: Point2::new(0.0, 0.0),
        max: Point2::new(
            2.0 * margin + widths.iter().sum::<f64>(),
            2.0 * margin + heights.iter().sum::<f64>(),
        ),
    };

    let mut names: Vec<&str> = ROOM_NAMES.to_vec();
    names.shuffle(&mut rng);
    let room_names: Vec<String> = (0..n_rooms)
        .map(|i| {
            let base = names[i % names.len()];
            if i < names.len() {
                base.to_owned()
            } else {
                format!("{base} {}", i / names.len() + 1)
            }
        })
        .collect();

    let mut doors = Vec::new();
    for a in 0..n_rooms {
        for b in a + 1..n_rooms {
            let ra = &rooms[a];
            if cell[a].0 == cell[b].0 && cell[b].1 == cell[a].1 + 1 {
                let y = rng.gen_range(ra.y0 + 1.0..=ra.y1 - 1.0);
                doors.push(Door { a, b, at: Point2::new(ra.x1, y), dir: (1.0, 0.0) });
            } else if cell[a].1 == cell[b].1 && cell[b].0 == cell[a].0 + 1 {
                let x = rng.gen_range(ra.x0 + 1.0..=ra.x1 - 1.0);
                doors.push(Door { a, b, at: Point2::new(x, ra.y1), dir: (0.0, 1.0) });
            }
        }
    }

    let mut objects = Vec::new();
    let mut next_id = 0usize;
    let mut push_obj = |objects: &mut Vec<SceneObject>, category: &str, center: [f64; 3], extents: [f64; 3]| {
        objects.push(SceneObject {
            id: format!("o{next_id:03}"),
            category: category.to_owned(),
            center,
            extents,
        });
        next_id += 1;
    };
    for (r, room) in rooms.iter().enumerate() {
        let c = room.center();
        let (w, h) = (room.x1 - room.x0, room.y1 - room.y0);
        // Excluded surface and an object on the floor above: both must be filtered.
        push_obj(&mut objects, "floor", [c.x, c.y, 0.0], [w, h, 0.05]);
        push_obj(&mut objects, "chair", [c.x, c.y, spec.agent_height + 3.0], [0.6, 0.6, 0.9]);
        push_obj(&mut objects, "lighting", [c.x, c.y, 2.6], [0.5, 0.5, 0.2]);
        let kit = room_kit(names[r % names.len()]);
        let count = rng.gen_range(spec.objects_per_room.0..=spec.objects_per_room.1);
        for _ in 0..count {
            let category = kit[rng.gen_range(0..kit.len())];
            let big = BIG_CATEGORIES.contains(&category);
            let (lo, hi) = if big { (1.0, 2.0) } else { (0.4, 1.0) };
            let wx = rng.gen_range(lo..=hi);
            let wy = rng.gen_range(lo..=hi);
            let wh = rng.gen_range(0.4..=1.8);
            let x = rng.gen_range(room.x0 + wx / 2.0 + 0.2..=room.x1 - wx / 2.0 - 0.2);
            let y = rng.gen_range(room.y0 + wy / 2.0 + 0.2..=room.y1 - wy / 2.0 - 0.2);
            push_obj(&mut objects, category, [x, y, wh / 2.0], [wx, wy, wh]);
        }
    }
    for d in &doors {
        let (wx, wy) = if d.dir.0 != 0.0 { (0.2, 0.9) } else { (0.9, 0.2) };
        push_obj(&mut objects, "door", [d.at.x, d.at.y, 1.0], [wx, wy, 2.0]);
    }

    let regions: Vec<Region> = rooms
        .iter()
        .zip(&room_names)
        .enumerate()
        .map(|(i, (room, name))| Region {
            id: format!("r{i:02}"),
            name: name.clone(),
            center: room.center(),
            extents: [room.x1 - room.x0, room.y1 - room.y0],
        })
        .collect();
    let navigable_polygons = rooms
        .iter()
        .map(|r| {
            vec![
                Point2::new(r.x0, r.y0),
                Point2::new(r.x1, r.y0),
                Point2::new(r.x1, r.y1),
                Point2::new(r.x0, r.y1),
            ]
        })
        .collect();
    let scene = Scene {
        id: format!("synth_{seed:04}"),
        bounds,
        objects,
        regions,
        navigable_polygons,
    };
    scene.validate()?;

    let mut paths = Vec::with_capacity(spec.paths);
    let mut references = Vec::with_capacity(spec.paths);
    while paths.len() < spec.paths {
        let Some(path) = sample_path(&mut rng, &rooms, &doors, spec.agent_height) else {
            continue;
        };
        let refs = (0..spec.references_per_path)
            .map(|_| realize_instruction(&scene, &path, &mut rng))
            .collect();
        paths.push(path);
        references.push(refs);
    }
    Ok(SyntheticScene { scene, paths, references })
}

fn sample_path(rng: &mut ChaCha8Rng, rooms: &[Room], doors: &[Door], agent_height: f64) -> Option<NavPath> {
    let mut current = rng.gen_range(0..rooms.len());
    let hops = rng.gen_range(0..=2usize);
    let mut visited = vec![current];
    let mut pts = vec![rooms[current].sample(rng, 0.8)];
    for _ in 0..hops {
        let options: Vec<(usize, Point2, (f64, f64))> = doors
            .iter()
            .filter_map(|d| {
                if d.a == current && !visited.contains(&d.b) {
                    Some((d.b, d.at, d.dir))
                } else if d.b == current && !visited.contains(&d.a) {
                    Some((d.a, d.at, (-d.dir.0, -d.dir.1)))
                } else {
                    None
                }
            })
            .collect();
        let Some(&(next, at, dir)) = options.choose(rng) else {
            break;
        };
        pts.push(Point2::new(at.x - 0.7 * dir.0, at.y - 0.7 * dir.1));
        pts.push(at);
        pts.push(Point2::new(at.x + 0.7 * dir.0, at.y + 0.7 * dir.1));
        visited.push(next);
        current = next;
    }
    if visited.len() == 1 {
        pts.push(rooms[current].sample(rng, 0.8));
    }
    pts.push(rooms[current].sample(rng, 0.8));

    // Long legs get a midpoint so paths carry some straight points.
    let mut dense = vec![pts[0]];
    for w in pts.windows(2) {
        if w[0].distance(w[1]) > 3.0 {
            dense.push(Point2::new((w[0].x + w[1].x) / 2.0, (w[0].y + w[1].y) / 2.0));
        }
        dense.push(w[1]);
    }
    let mut clean: Vec<Point2> = Vec::with_capacity(dense.len());
    for p in dense {
        if clean.last().is_some_and(|q: &Point2| q.distance(p) < 0.3) {
            clean.pop();
        }
        clean.push(p);
    }
    (clean.len() >= 3).then(|| NavPath::new(clean, agent_height))
}

fn nearest_landmark(objects: &[SceneObject], p: Point2) -> Option<&str> {
    objects
        .iter()
        .map(|o| (o.footprint_distance(p), o.category.as_str()))
        .filter(|(d, _)| *d <= LANDMARK_RADIUS)
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, c)| c)
}

/// Realizes a template instruction for `path`. Phrase choices (exit/leave,
/// stop/wait) are drawn from `rng`; content is fixed by the path.
pub fn realize_instruction(scene: &Scene, path: &NavPath, rng: &mut impl Rng) -> String {
    let actions = classify_actions(path).expect("synthetic paths have distinct points");
    let objects = filter_objects_for_floor(&scene.objects, path.agent_height);
    let regions: Vec<Vec<String>> = path.points.iter().map(|&p| assign_regions(p, &scene.regions)).collect();
    let k = path.len();
    let mut current = regions[0].first().cloned();
    let mut clauses: Vec<String> = Vec::new();
    let mut exited = false;
    for i in 1..k - 1 {
        if let [only] = regions[i].as_slice() {
            if current.as_ref() != Some(only) {
                if let (false, Some(from)) = (exited, &current) {
                    let verb = if rng.gen_bool(0.5) { "exit" } else { "leave" };
                    clauses.push(format!("{verb} the {from}"));
                    exited = true;
                }
                clauses.push(format!("enter the {only}"));
                current = Some(only.clone());
            }
        }
        if let dir @ (Action::Left | Action::Right) = actions[i] {
            match nearest_landmark(&objects, path.points[i]) {
                Some(obj) => clauses.push(format!("turn {} at the {obj}", dir.word())),
                None => clauses.push(format!("turn {}", dir.word())),
            }
        }
    }
    if clauses.is_empty() {
        clauses.push("walk straight".into());
    }
    let verb = if rng.gen_bool(0.5) { "stop" } else { "wait" };
    let last = path.points[k - 1];
    let stop = match (nearest_landmark(&objects, last), regions[k - 1].first()) {
        (Some(obj), _) => format!("{verb} at the {obj}"),
        (None, Some(region)) => format!("{verb} in the {region}"),
        (None, None) => verb.to_owned(),
    };
    format!("{}, then {stop}.", clauses.join(", "))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_for_seed() {
        let spec = SynthSpec::default();
        let a = generate_synthetic_scene(0, &spec).unwrap();
        let b = generate_synthetic_scene(0, &spec).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic_scene(1, &spec).unwrap();
        assert_ne!(a.scene, c.scene);
    }

    #[test]
    fn room_count_matches_spec() {
        let spec = SynthSpec {
            rooms: (3, 3),
            ..Default::default()
        };
        for seed in 0..5 {
            let s = generate_synthetic_scene(seed, &spec).unwrap();
            assert_eq!(s.scene.regions.len(), 3);
            assert_eq!(s.paths.len(), spec.paths);
            assert_eq!(s.references.len(), spec.paths);
        }
    }

    #[test]
    fn zero_rooms_is_infeasible() {
        let spec = SynthSpec {
            rooms: (0, 0),
            ..Default::default()
        };
        assert!(matches!(
            generate_synthetic_scene(0, &spec),
            Err(SceneError::InfeasibleSpec(_))
        ));
    }

    #[test]
    fn paths_are_valid_and_inside_bounds() {
        let s = generate_synthetic_scene(7, &SynthSpec { paths: 40, ..Default::default() }).unwrap();
        for p in &s.paths {
            p.validate().unwrap();
            assert!(p.points.iter().all(|&q| s.scene.bounds.contains(q)));
            assert!(p.points.iter().all(|&q| !assign_regions(q, &s.scene.regions).is_empty()));
        }
    }
}
