//! HTTP/JSON session service running the elicitation, recommendation and
//! feedback protocol over prebuilt engine indices.
//!
//! Every state change is appended to a JSON-lines event log before it is
//! applied, and the log is replayed on startup.

mod api;
pub mod log;
mod state;

use std::future::Future;
use std::net::SocketAddr;
use std::sync::Arc;

use tokio::net::TcpListener;

pub use api::router;
pub use state::{AppState, ServiceConfig, ServiceError, ServiceResult};

/// Serves `app` on `listener` until `shutdown` resolves, then syncs the log.
pub async fn serve(
    app: Arc<AppState>,
    listener: TcpListener,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let addr: Option<SocketAddr> = listener.local_addr().ok();
    tracing::info!(?addr, engines = ?app.engines(), "serving");
    axum::serve(listener, router(app.clone()))
        .with_graceful_shutdown(shutdown)
        .await?;
    app.flush().map_err(std::io::Error::other)?;
    tracing::info!(log = %app.log_path().display(), "event log flushed");
    Ok(())
}

/// Resolves on Ctrl-C or, on Unix, SIGTERM.
pub async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        if let Ok(mut s) = tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate())
        {
            s.recv().await;
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
}
