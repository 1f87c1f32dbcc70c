//! HTTP front end for a single label-cleaning session.
//!
//! Annotators fetch the pending batch, post one label per sample under their
//! `X-Annotator` name and trigger the model update once every sample carries
//! enough labels. Classes are 1-based on the wire.

mod routes;
mod state;

use axum::http::Method;
use axum::routing::{get, post};
use axum::Router;
use tokio::net::TcpListener;
use tower_http::cors::{Any, CorsLayer};

pub use routes::{LabelSubmission, ANNOTATOR_HEADER, DEFAULT_ANNOTATOR};
pub use state::{AppState, PendingItem, Phase, ServiceOptions, SessionSnapshot, PREVIEW_DIMS};

pub fn router(state: AppState) -> Router {
    let cors = CorsLayer::new()
        .allow_origin(Any)
        .allow_methods([Method::GET, Method::POST])
        .allow_headers(Any);
    Router::new()
        .route("/", get(routes::index))
        .route("/api/health", get(routes::health))
        .route("/api/session", get(routes::session))
        .route("/api/queue", get(routes::queue))
        .route("/api/metrics", get(routes::metrics))
        .route("/api/report", get(routes::report))
        .route("/api/labels", post(routes::submit_label))
        .route("/api/round/advance", post(routes::advance))
        .layer(cors)
        .with_state(state)
}

/// Serves until ctrl-c.
pub async fn serve(listener: TcpListener, state: AppState) -> std::io::Result<()> {
    if let Ok(addr) = listener.local_addr() {
        log::info!("listening on http://{addr}");
    }
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
