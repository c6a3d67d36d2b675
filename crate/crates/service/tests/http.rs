use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use navmap_core::eval::io::{read_human_scores, write_generations};
use navmap_core::eval::{evaluate_systems, EvalOptions, Generation, Lexicon, PropositionScorer};
use navmap_core::scene::save_episodes;
use navmap_core::{Action, Episode, LatinSquare, NavPath, Point2, SemanticMap, Split};
use navmap_service::api::SessionPayload;
use navmap_service::{load_state, router, StudyConfig};
use serde_json::{json, Value};
use tower::ServiceExt;

const SYSTEMS: [&str; 5] = ["TD", "TD+P", "TD+P+C", "TD+Reg+Act+P", "TD+Reg+Act+P+C"];
const EVALUATORS: [&str; 5] = ["ev0", "ev1", "ev2", "ev3", "ev4"];

fn episode(i: usize) -> Episode {
    Episode {
        id: format!("e{i:03}"),
        scene_id: "s".into(),
        split: if i % 2 == 0 { Split::ValSeen } else { Split::ValUnseen },
        path: NavPath::new(vec![Point2::new(0.0, 0.0), Point2::new(1.0, 0.0)], 1.2),
        map_image_path: "maps/shared.png".into(),
        point_regions: vec![vec!["hallway".into()], vec![]],
        actions: vec![Action::Straight, Action::Stop],
        prompt: String::new(),
        references: vec!["turn left at the sofa".into()],
        panorama_paths: None,
    }
}

fn text(system: &str, episode: &str) -> String {
    format!("{system} @ {episode}")
}

fn fixture(dir: &Path, items: usize) -> StudyConfig {
    let episodes: Vec<Episode> = (0..80).map(episode).collect();
    save_episodes(&episodes, dir.join("episodes.jsonl")).unwrap();
    std::fs::create_dir_all(dir.join("maps")).unwrap();
    SemanticMap::filled(4, 4, [0, 0, 0], 0.05, Point2::new(0.0, 0.0)).save_png(dir.join("maps/shared.png")).unwrap();
    let mut generation_files = Vec::new();
    for (k, s) in SYSTEMS.iter().enumerate() {
        let rows: Vec<Generation> = episodes
            .iter()
            .map(|e| Generation { episode_id: e.id.clone(), system_id: (*s).into(), text: text(s, &e.id) })
            .collect();
        let path = dir.join(format!("gen{k}.jsonl"));
        write_generations(std::fs::File::create(&path).unwrap(), &rows).unwrap();
        generation_files.push(path);
    }
    StudyConfig {
        dataset_dir: dir.to_path_buf(),
        episodes_file: "episodes.jsonl".into(),
        generations: generation_files,
        evaluators: EVALUATORS.iter().map(|s| (*s).into()).collect(),
        items_per_evaluator: items,
        seed: 11,
        log: dir.join("responses.jsonl"),
    }
}

fn app(cfg: &StudyConfig) -> Router {
    router(Arc::new(load_state(cfg).unwrap()))
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder().method(method).uri(uri).header("content-type", "application/json");
    let req = match body {
        Some(v) => req.body(Body::from(v.to_string())).unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
}

async fn session(app: &Router, ev: &str) -> SessionPayload {
    let (status, body) = call(app, "GET", &format!("/session/{ev}"), None).await;
    assert_eq!(status, StatusCode::OK);
    serde_json::from_slice(&body).unwrap()
}

fn system_of(candidate_text: &str) -> usize {
    let name = candidate_text.split(" @ ").next().unwrap();
    SYSTEMS.iter().position(|s| *s == name).unwrap()
}

async fn score_item(app: &Router, ev: &str, s: &SessionPayload, score_of: impl Fn(usize) -> u8) {
    let item = s.item.as_ref().unwrap();
    for c in &item.candidates {
        let body = json!({
            "evaluator_id": ev,
            "episode_id": item.episode_id,
            "label": c.label,
            "score": score_of(system_of(&c.text)),
            "error_tags": ["redundancy"],
        });
        let (status, msg) = call(app, "POST", "/score", Some(body)).await;
        assert_eq!(status, StatusCode::CREATED, "{}", String::from_utf8_lossy(&msg));
    }
}

#[tokio::test]
async fn served_orders_reconstruct_the_latin_square() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture(dir.path(), 15);
    let app = app(&cfg);
    let mut rows = Vec::new();
    for ev in EVALUATORS {
        let s = session(&app, ev).await;
        let item = s.item.unwrap();
        let labels: Vec<&str> = item.candidates.iter().map(|c| c.label.as_str()).collect();
        assert_eq!(labels, ["A", "B", "C", "D", "E"]);
        rows.push(item.candidates.iter().map(|c| system_of(&c.text)).collect::<Vec<_>>());
    }
    let served = LatinSquare { rows };
    assert!(served.is_valid());
    assert_eq!(served, LatinSquare::random(5, cfg.seed).unwrap());
}

#[tokio::test]
async fn unknown_evaluator_is_404() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&fixture(dir.path(), 3));
    assert_eq!(call(&app, "GET", "/session/mallory", None).await.0, StatusCode::NOT_FOUND);
    let body = json!({"evaluator_id": "mallory", "episode_id": "e000", "label": "A", "score": 3});
    assert_eq!(call(&app, "POST", "/score", Some(body)).await.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn malformed_scores_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&fixture(dir.path(), 3));
    let ep = session(&app, "ev0").await.item.unwrap().episode_id;
    let cases = [
        (json!({"evaluator_id": "ev0", "episode_id": ep, "label": "A", "score": 11}), "score"),
        (json!({"evaluator_id": "ev0", "episode_id": ep, "label": "A", "score": "seven"}), "score"),
        (json!({"evaluator_id": "ev0", "episode_id": ep, "label": "A", "score": 4.5}), "score"),
        (json!({"evaluator_id": "ev0", "episode_id": ep, "score": 4}), "label"),
        (json!({"evaluator_id": "ev0", "episode_id": ep, "label": "Q", "score": 4}), "label"),
        (json!({"evaluator_id": "ev0", "episode_id": "e999", "label": "A", "score": 4}), "episode_id"),
        (json!({"evaluator_id": "ev0", "episode_id": ep, "label": "A", "score": 4, "error_tags": ["typo"]}), "error_tags[0]"),
    ];
    for (body, field) in cases {
        let (status, msg) = call(&app, "POST", "/score", Some(body.clone())).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{body}");
        let v: Value = serde_json::from_slice(&msg).unwrap();
        assert_eq!(v["field"], field, "{v}");
    }
    let (_, csv) = call(&app, "GET", "/export", None).await;
    assert_eq!(read_human_scores(csv.as_slice(), "export").unwrap().len(), 0);
}

#[tokio::test]
async fn duplicates_rejected_and_store_unchanged() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture(dir.path(), 3);
    let app = app(&cfg);
    let ep = session(&app, "ev1").await.item.unwrap().episode_id;
    let body = json!({"evaluator_id": "ev1", "episode_id": ep, "label": "C", "score": 6});
    assert_eq!(call(&app, "POST", "/score", Some(body.clone())).await.0, StatusCode::CREATED);
    let (_, before) = call(&app, "GET", "/export", None).await;
    let revised = json!({"evaluator_id": "ev1", "episode_id": ep, "label": "C", "score": 9});
    assert_eq!(call(&app, "POST", "/score", Some(revised)).await.0, StatusCode::CONFLICT);
    let (_, after) = call(&app, "GET", "/export", None).await;
    assert_eq!(before, after);
    let log = std::fs::read_to_string(&cfg.log).unwrap();
    assert_eq!(log.lines().count(), 1);
}

#[tokio::test]
async fn full_study_exports_every_row_and_replays() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture(dir.path(), 15);
    let app = app(&cfg);
    for ev in EVALUATORS {
        for _ in 0..15 {
            let s = session(&app, ev).await;
            score_item(&app, ev, &s, |sys| (2 * sys) as u8).await;
        }
        let s = session(&app, ev).await;
        assert_eq!((s.completed, s.total), (15, 15));
        assert!(s.item.is_none());
    }
    let (status, csv) = call(&app, "GET", "/export", None).await;
    assert_eq!(status, StatusCode::OK);
    let rows = read_human_scores(csv.as_slice(), "export").unwrap();
    assert_eq!(rows.len(), 5 * 15 * 5);
    assert!(rows.iter().all(|r| (0.0..=10.0).contains(&r.score)));
    // labels were blinded, yet every score landed on the right system
    assert!(rows.iter().all(|r| r.score == 2.0 * SYSTEMS.iter().position(|s| *s == r.system_id).unwrap() as f64));

    // a restarted service rebuilds the same state from the log
    let (_, responses) = call(&app, "GET", "/responses", None).await;
    let restarted = load_state(&cfg).unwrap();
    assert_eq!(serde_json::to_vec(&restarted.snapshot().responses).unwrap(), responses);
    let (_, csv_again) = call(&router(Arc::new(restarted)), "GET", "/export", None).await;
    assert_eq!(csv_again, csv);

    // the export feeds the evaluator untouched
    let episodes: Vec<Episode> = (0..80).map(episode).collect();
    let gens: Vec<Generation> = SYSTEMS
        .iter()
        .flat_map(|s| episodes.iter().map(move |e| Generation { episode_id: e.id.clone(), system_id: (*s).into(), text: text(s, &e.id) }))
        .collect();
    let scorer = PropositionScorer { lexicon: Lexicon::new(["sofa"], ["hallway"]) };
    let report = evaluate_systems(&gens, &episodes, &scorer, Some(&rows), &EvalOptions::default()).unwrap();
    assert_eq!(report.systems[4].human_rank, Some(1));
    assert_eq!(report.systems[0].human_n, 75);
}

#[tokio::test]
async fn replay_skips_repeated_lines() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture(dir.path(), 3);
    let app = app(&cfg);
    let s = session(&app, "ev2").await;
    score_item(&app, "ev2", &s, |_| 5).await;
    let log = std::fs::read_to_string(&cfg.log).unwrap();
    let first = log.lines().next().unwrap().to_owned();
    std::fs::write(&cfg.log, format!("{log}{first}\n")).unwrap();
    let state = load_state(&cfg).unwrap();
    assert_eq!(state.snapshot().responses.len(), 5);
}

#[tokio::test]
async fn map_images_are_served() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&fixture(dir.path(), 3));
    let s = session(&app, "ev0").await;
    let (status, bytes) = call(&app, "GET", &s.item.unwrap().map_url, None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(&bytes[1..4], b"PNG");
}
