//! HTTP front end: one reconciliation service per enabled source under
//! `/api/<source>/`, plus the curation API used by the review UI.

mod curation;
mod error;
mod extension;
mod manifest;
mod preview;
mod protocol;
mod state;

use std::future::Future;
use std::path::PathBuf;
use std::sync::Arc;

use axum::http::{HeaderValue, Method};
use axum::routing::{get, post};
use axum::Router;
use tower_http::cors::{AllowOrigin, Any, CorsLayer};
use tower_http::services::{ServeDir, ServeFile};

pub use error::ApiError;
pub use extension::{ExtendRequest, ExtendResponse, PropertyRequest};
pub use manifest::{Manifest, PREVIEW_HEIGHT, PREVIEW_WIDTH};
pub use preview::render_preview;
pub use protocol::{parse_queries, ReconQuery, ReconResult, ResultList};
pub use state::{ServiceState, SESSION_FILE};

#[derive(Debug, Clone)]
pub struct RouterOptions {
    /// `*` or a single origin allowed to call the API from a browser.
    pub cors_origin: String,
    /// Static review UI assets, served under `/ui`.
    pub ui_dir: Option<PathBuf>,
}

impl Default for RouterOptions {
    fn default() -> Self {
        Self {
            cors_origin: "*".to_owned(),
            ui_dir: None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
#[error("invalid CORS origin `{0}`")]
pub struct InvalidOrigin(String);

pub fn router(state: Arc<ServiceState>, options: &RouterOptions) -> Result<Router, InvalidOrigin> {
    let origin = if options.cors_origin == "*" {
        AllowOrigin::from(Any)
    } else {
        HeaderValue::from_str(&options.cors_origin)
            .map(AllowOrigin::exact)
            .map_err(|_| InvalidOrigin(options.cors_origin.clone()))?
    };
    let cors = CorsLayer::new()
        .allow_origin(origin)
        .allow_methods([Method::GET, Method::POST, Method::OPTIONS])
        .allow_headers(Any);

    let mut app = Router::new()
        .route("/api/{source}", get(protocol::service_root).post(protocol::service_root))
        .route("/api/{source}/", get(protocol::service_root).post(protocol::service_root))
        .route("/api/{source}/reconcile", get(protocol::reconcile).post(protocol::reconcile))
        .route("/api/{source}/preview", get(preview::preview))
        .route("/api/{source}/extend", get(extension::extend).post(extension::extend))
        .route("/api/{source}/extend/propose", get(extension::propose))
        .route("/curation/clusters", get(curation::list_clusters))
        .route("/curation/clusters/{cluster_id}", get(curation::get_cluster))
        .route(
            "/curation/clusters/{cluster_id}/members/{native_id}",
            post(curation::set_member),
        )
        .route("/curation/records/{global_id}", get(curation::get_record))
        .with_state(state);

    if let Some(dir) = &options.ui_dir {
        let index = ServeFile::new(dir.join("index.html"));
        app = app.nest_service("/ui", ServeDir::new(dir).fallback(index));
    }
    Ok(app.layer(cors))
}

/// Serves `app` until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    app: Router,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, app).with_graceful_shutdown(shutdown).await
}
