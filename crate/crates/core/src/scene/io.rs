use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::de::DeserializeOwned;

use super::{Episode, Scene, SceneError};

fn parse_checked<T: DeserializeOwned>(text: &str, origin: &str) -> Result<T, SceneError> {
    let mut json = serde_json::Deserializer::from_str(text);
    let mut unknown = Vec::new();
    let mut on_unknown = |path: serde_ignored::Path<'_>| unknown.push(path.to_string());
    let tracked = serde_ignored::Deserializer::new(&mut json, &mut on_unknown);
    let value: T = serde_path_to_error::deserialize(tracked).map_err(|err| {
        let field = err.path().to_string();
        SceneError::Schema {
            path: origin.to_owned(),
            field: if field.is_empty() { ".".into() } else { field },
            message: err.into_inner().to_string(),
        }
    })?;
    json.end().map_err(|err| SceneError::Schema {
        path: origin.to_owned(),
        field: ".".into(),
        message: err.to_string(),
    })?;
    for field in unknown {
        log::warn!("{origin}: ignoring unknown field `{field}`");
    }
    Ok(value)
}

/// Parses and validates a scene document. `origin` labels diagnostics.
pub fn read_scene(text: &str, origin: &str) -> Result<Scene, SceneError> {
    let scene: Scene = parse_checked(text, origin)?;
    scene.validate()?;
    Ok(scene)
}

pub fn load_scene(path: impl AsRef<Path>) -> Result<Scene, SceneError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    read_scene(&text, &path.display().to_string())
}

/// Canonical serialization: pretty JSON, fixed field order, trailing newline.
pub fn scene_to_json(scene: &Scene) -> String {
    let mut text = serde_json::to_string_pretty(scene).expect("scene serializes");
    text.push('\n');
    text
}

pub fn save_scene(scene: &Scene, path: impl AsRef<Path>) -> Result<(), SceneError> {
    fs::write(path, scene_to_json(scene))?;
    Ok(())
}

pub fn read_episodes(reader: impl BufRead, origin: &str) -> Result<Vec<Episode>, SceneError> {
    let mut episodes = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let episode: Episode = parse_checked(&line, &format!("{origin}:{}", lineno + 1))?;
        episode.validate()?;
        episodes.push(episode);
    }
    Ok(episodes)
}

pub fn load_episodes(path: impl AsRef<Path>) -> Result<Vec<Episode>, SceneError> {
    let path = path.as_ref();
    let file = fs::File::open(path)?;
    read_episodes(BufReader::new(file), &path.display().to_string())
}

pub fn write_episodes<'a>(
    mut writer: impl Write,
    episodes: impl IntoIterator<Item = &'a Episode>,
) -> Result<(), SceneError> {
    for episode in episodes {
        let line = serde_json::to_string(episode).expect("episode serializes");
        writeln!(writer, "{line}")?;
    }
    Ok(())
}

pub fn save_episodes(episodes: &[Episode], path: impl AsRef<Path>) -> Result<(), SceneError> {
    let mut buf = Vec::new();
    write_episodes(&mut buf, episodes)?;
    fs::write(path, buf)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "id": "tiny",
        "bounds": {"min": [0, 0], "max": [4, 4]},
        "objects": [{"id": "o1", "category": "chair", "center": [1, 1, 0.5], "extents": [0.5, 0.5, 1.0]}],
        "regions": [{"id": "r1", "name": "hallway", "center": [2, 2], "extents": [4, 4]}]
    }"#;

    #[test]
    fn minimal_scene_loads() {
        let scene = read_scene(MINIMAL, "minimal").unwrap();
        assert_eq!(scene.objects.len(), 1);
        assert_eq!(scene.regions.len(), 1);
        assert!(scene.navigable_polygons.is_empty());
    }

    #[test]
    fn unknown_category_lists_valid_ones() {
        let text = MINIMAL.replace("\"chair\"", "\"flying_carpet\"");
        let err = read_scene(&text, "bad").unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, SceneError::UnknownCategory { .. }));
        assert!(msg.contains("flying_carpet"));
        assert!(msg.contains("chair") && msg.contains("sofa"));
    }

    #[test]
    fn schema_error_names_field() {
        let text = MINIMAL.replace("\"extents\": [0.5, 0.5, 1.0]", "\"extents\": \"big\"");
        match read_scene(&text, "bad").unwrap_err() {
            SceneError::Schema { field, .. } => assert_eq!(field, "objects[0].extents"),
            other => panic!("unexpected {other:?}"),
        }
        let text = MINIMAL.replace("\"name\": \"hallway\",", "");
        match read_scene(&text, "bad").unwrap_err() {
            SceneError::Schema { field, message, .. } => {
                assert!(field.starts_with("regions[0]"), "{field}");
                assert!(message.contains("name"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_fields_are_tolerated() {
        let text = MINIMAL.replace("\"id\": \"tiny\",", "\"id\": \"tiny\", \"habitat_version\": 3,");
        assert!(read_scene(&text, "extra").is_ok());
    }

    #[test]
    fn non_positive_extents_rejected() {
        let text = MINIMAL.replace("[0.5, 0.5, 1.0]", "[0.5, 0.0, 1.0]");
        assert!(matches!(read_scene(&text, "bad"), Err(SceneError::Invalid(_))));
    }

    #[test]
    fn center_outside_bounds_rejected() {
        let text = MINIMAL.replace("[1, 1, 0.5]", "[9, 1, 0.5]");
        assert!(read_scene(&text, "bad").is_err());
    }
}
