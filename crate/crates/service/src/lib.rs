//! HTTP/JSON front end: in-memory incident sessions with optional JSON
//! snapshots on disk.
//!
//! Fits and simulations on one session are serialized by a per-session
//! mutex; every result is published as a fresh immutable version, so reads
//! only clone an `Arc` and never wait on a running fit.

mod error;
mod handlers;
mod openapi;
mod state;

use std::path::PathBuf;

use axum::routing::{get, post};
use axum::Router;

pub use error::{ApiError, FieldError};
pub use openapi::document as openapi_document;
pub use state::{AppState, SessionSource, SessionState};

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/v1/sessions", post(handlers::create_session))
        .route("/v1/sessions/{id}", get(handlers::get_session))
        .route("/v1/sessions/{id}/fit", post(handlers::fit))
        .route("/v1/sessions/{id}/forecast", get(handlers::forecast))
        .route("/v1/sessions/{id}/simulate", post(handlers::simulate))
        .route("/v1/sessions/{id}/recommendation", get(handlers::recommendation))
        .route("/v1/sessions/{id}/whatif", post(handlers::whatif))
        .route("/v1/sessions/{id}/diagnostics", get(handlers::diagnostics))
        .route("/v1/openapi.json", get(handlers::openapi))
        .with_state(state)
}

/// Binds `addr` and serves until the process is stopped.
pub async fn serve(addr: &str, state_dir: Option<PathBuf>) -> std::io::Result<()> {
    let state = match state_dir {
        Some(dir) => AppState::with_state_dir(dir)?,
        None => AppState::in_memory(),
    };
    log::info!("restored {} sessions", state.len());
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}
