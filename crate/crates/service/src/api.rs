use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response as HttpResponse};
use axum::routing::{get, post};
use axum::{Json, Router};
use navmap_core::eval::io::write_human_scores;
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;

use crate::store::{Appender, ErrorTag, Response, Store};
use crate::study::{Study, LABELS};

pub struct AppState {
    pub study: Study,
    /// Single writer: the in-memory store and the log advance together.
    inner: Mutex<(Store, Appender)>,
    pub files_dir: PathBuf,
}

impl AppState {
    pub fn new(study: Study, store: Store, appender: Appender, files_dir: PathBuf) -> Self {
        Self { study, inner: Mutex::new((store, appender)), files_dir }
    }

    pub fn snapshot(&self) -> Store {
        self.inner.lock().expect("store lock").0.clone()
    }
}

#[derive(Debug, Serialize)]
pub struct ApiError {
    pub error: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
}

fn reject(status: StatusCode, error: impl Into<String>, field: Option<&str>) -> HttpResponse {
    (status, Json(ApiError { error: error.into(), field: field.map(str::to_owned) })).into_response()
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Candidate {
    pub label: String,
    pub text: String,
    pub scored: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ItemPayload {
    pub index: usize,
    pub episode_id: String,
    pub map_url: String,
    pub panorama_urls: Vec<String>,
    pub regions: Vec<Vec<String>>,
    pub candidates: Vec<Candidate>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SessionPayload {
    pub evaluator_id: String,
    pub completed: usize,
    pub total: usize,
    pub item: Option<ItemPayload>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreRequest {
    pub evaluator_id: String,
    pub episode_id: String,
    pub label: String,
    pub score: u8,
    #[serde(default)]
    pub error_tags: Vec<ErrorTag>,
}

pub fn router(state: Arc<AppState>) -> Router {
    let files = ServeDir::new(state.files_dir.clone());
    Router::new()
        .route("/health", get(|| async { "ok" }))
        .route("/session/{evaluator}", get(session))
        .route("/score", post(score))
        .route("/export", get(export))
        .route("/responses", get(responses))
        .nest_service("/files", files)
        .with_state(state)
}

fn session_payload(study: &Study, store: &Store, evaluator: &str, ev: usize) -> SessionPayload {
    let items = &study.items[evaluator];
    let done = |ep: &str| study.systems.iter().all(|s| store.contains(evaluator, ep, s));
    let completed = items.iter().filter(|e| done(e)).count();
    let item = items.iter().enumerate().find(|(_, e)| !done(e)).map(|(index, ep_id)| {
        let ep = &study.episodes[ep_id];
        let candidates = study
            .order(ev)
            .iter()
            .enumerate()
            .map(|(pos, &sys)| {
                let system = &study.systems[sys];
                Candidate {
                    label: LABELS[pos].to_owned(),
                    text: study.text(system, ep_id).to_owned(),
                    scored: store.contains(evaluator, ep_id, system),
                }
            })
            .collect();
        ItemPayload {
            index,
            episode_id: ep_id.clone(),
            map_url: format!("/files/{}", ep.map_image_path),
            panorama_urls: ep.panorama_paths.iter().flatten().map(|p| format!("/files/{p}")).collect(),
            regions: ep.point_regions.clone(),
            candidates,
        }
    });
    SessionPayload { evaluator_id: evaluator.to_owned(), completed, total: items.len(), item }
}

async fn session(State(state): State<Arc<AppState>>, Path(evaluator): Path<String>) -> HttpResponse {
    let Some(ev) = state.study.evaluator_index(&evaluator) else {
        return reject(StatusCode::NOT_FOUND, format!("unknown evaluator `{evaluator}`"), None);
    };
    let store = state.snapshot();
    Json(session_payload(&state.study, &store, &evaluator, ev)).into_response()
}

fn parse_score(body: &[u8]) -> Result<ScoreRequest, HttpResponse> {
    let mut de = serde_json::Deserializer::from_slice(body);
    serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        let message = e.inner().to_string();
        let field = if path == "." {
            message.strip_prefix("missing field `").and_then(|m| m.split('`').next()).map(str::to_owned)
        } else {
            Some(path)
        };
        reject(StatusCode::BAD_REQUEST, message, field.as_deref())
    })
}

async fn score(State(state): State<Arc<AppState>>, body: Bytes) -> HttpResponse {
    let req = match parse_score(&body) {
        Ok(r) => r,
        Err(resp) => return resp,
    };
    let study = &state.study;
    let Some(ev) = study.evaluator_index(&req.evaluator_id) else {
        return reject(StatusCode::NOT_FOUND, format!("unknown evaluator `{}`", req.evaluator_id), None);
    };
    if req.score > 10 {
        return reject(StatusCode::BAD_REQUEST, format!("score {} outside 0..=10", req.score), Some("score"));
    }
    if !study.items[&req.evaluator_id].contains(&req.episode_id) {
        return reject(
            StatusCode::BAD_REQUEST,
            format!("episode `{}` is not assigned to this evaluator", req.episode_id),
            Some("episode_id"),
        );
    }
    let Some(system) = study.label_to_system(ev, &req.label) else {
        let valid = LABELS[..study.systems.len()].join(", ");
        return reject(StatusCode::BAD_REQUEST, format!("label must be one of {valid}"), Some("label"));
    };
    let mut tags = req.error_tags.clone();
    tags.sort();
    tags.dedup();
    let response = Response {
        evaluator_id: req.evaluator_id,
        episode_id: req.episode_id,
        system_id: system.to_owned(),
        label: req.label,
        score: req.score,
        error_tags: tags,
        timestamp: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
    };

    let mut guard = state.inner.lock().expect("store lock");
    let (store, log) = &mut *guard;
    if store.contains(&response.evaluator_id, &response.episode_id, &response.system_id) {
        return reject(StatusCode::CONFLICT, "this candidate was already scored; revisions are not accepted", None);
    }
    if let Err(e) = log.append(&response) {
        return reject(StatusCode::INTERNAL_SERVER_ERROR, e.to_string(), None);
    }
    store.apply(response);
    StatusCode::CREATED.into_response()
}

async fn export(State(state): State<Arc<AppState>>) -> HttpResponse {
    let rows = state.snapshot().export();
    let mut buf = Vec::new();
    match write_human_scores(&mut buf, &rows) {
        Ok(()) => ([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], buf).into_response(),
        Err(e) => reject(StatusCode::INTERNAL_SERVER_ERROR, e.to_string(), None),
    }
}

async fn responses(State(state): State<Arc<AppState>>) -> Json<Vec<Response>> {
    Json(state.snapshot().responses)
}
