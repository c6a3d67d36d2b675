//! Human-evaluation backend: blinded candidates in Latin-square order,
//! 0–10 scores with error tags, an append-only log, and a CSV export that
//! the evaluator reads as-is.

pub mod api;
pub mod store;
pub mod study;

use std::net::SocketAddr;
use std::sync::Arc;

use navmap_core::eval::{io::load_generations, EvalError};
use navmap_core::scene::load_episodes;
use navmap_core::SceneError;

pub use api::{router, AppState};
pub use store::{ErrorTag, Response, Store};
pub use study::{Study, StudyConfig, LABELS};

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("invalid study configuration: {0}")]
    Config(String),
    #[error("response log: {0}")]
    Log(String),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Loads episodes and generations, replays the log, and opens it for appends.
pub fn load_state(cfg: &StudyConfig) -> Result<AppState, ServiceError> {
    let episodes = load_episodes(cfg.dataset_dir.join(&cfg.episodes_file))?;
    let mut generations = Vec::new();
    for path in &cfg.generations {
        generations.extend(load_generations(path)?);
    }
    let study = Study::new(episodes, &generations, cfg.evaluators.clone(), cfg.items_per_evaluator, cfg.seed)?;
    let store = store::replay(&cfg.log, &study)?;
    log::info!(
        "{} systems, {} evaluators, {} responses replayed from {}",
        study.systems.len(),
        study.evaluators.len(),
        store.responses.len(),
        cfg.log.display()
    );
    let appender = store::Appender::open(&cfg.log)?;
    Ok(AppState::new(study, store, appender, cfg.dataset_dir.clone()))
}

pub async fn serve(cfg: &StudyConfig, addr: SocketAddr) -> Result<(), ServiceError> {
    let state = Arc::new(load_state(cfg)?);
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
