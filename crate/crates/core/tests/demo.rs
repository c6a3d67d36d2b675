use std::fs;
use std::path::PathBuf;

use navmap_core::dataset::{build_dataset_from_paths, read_path_records, EPISODES_FILE};
use navmap_core::map::EpisodeOptions;
use navmap_core::scene::{load_episodes, load_scene, scene_to_json};
use navmap_core::Action;

fn demo_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/demo")
}

#[test]
fn demo_scene_round_trips_byte_for_byte() {
    let file = demo_dir().join("scenes/demo_house.json");
    let original = fs::read_to_string(&file).unwrap();
    let scene = load_scene(&file).unwrap();
    assert_eq!(scene_to_json(&scene), original);
}

#[test]
fn demo_episodes_build() {
    let out = tempfile::tempdir().unwrap();
    let records = read_path_records(&demo_dir().join("paths.jsonl")).unwrap();
    let (eps, summary) =
        build_dataset_from_paths(&demo_dir().join("scenes"), &records, &EpisodeOptions::default(), out.path()).unwrap();
    assert_eq!(summary.episodes, 2);
    let first = &eps[0];
    assert_eq!(first.actions.len(), first.path.len());
    assert_eq!(
        first.actions,
        [Action::Straight, Action::Left, Action::Right, Action::Straight, Action::Left, Action::Stop]
    );
    assert_eq!(first.prompt, "Starting from the dark yellow point near sofa cushion in the living room region, ");
    assert_eq!(first.point_regions[4], vec!["hallway".to_owned()]);
    // the chair on the floor above and the curtain never reach the map
    let again = load_episodes(out.path().join(EPISODES_FILE)).unwrap();
    assert_eq!(again, eps);

    let second = tempfile::tempdir().unwrap();
    build_dataset_from_paths(&demo_dir().join("scenes"), &records, &EpisodeOptions::default(), second.path()).unwrap();
    for e in &eps {
        assert_eq!(
            fs::read(out.path().join(&e.map_image_path)).unwrap(),
            fs::read(second.path().join(&e.map_image_path)).unwrap()
        );
    }
}
