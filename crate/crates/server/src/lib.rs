//! The pattern designer's backend: renders envelopes for preview, plays them
//! on bands over the acknowledged UDP transport, and keeps the preset
//! library.

pub mod api;
pub mod library;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::Router;
use haptic_transport::{Transport, TransportConfig};
use tokio::net::TcpListener;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;
use tower_http::services::{ServeDir, ServeFile};

pub use api::{router, AppState};
pub use library::{Library, LibraryError, LibraryFile};

pub const DEFAULT_HTTP_PORT: u16 = 8080;

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub http_addr: SocketAddr,
    pub udp_addr: SocketAddr,
    pub library_path: PathBuf,
    /// Built UI assets served at `/`, if present.
    pub ui_dir: Option<PathBuf>,
    pub transport: TransportConfig,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            http_addr: SocketAddr::from(([127, 0, 0, 1], DEFAULT_HTTP_PORT)),
            udp_addr: SocketAddr::from(([0, 0, 0, 0], haptic_transport::DEFAULT_UDP_PORT)),
            library_path: PathBuf::from(library::DEFAULT_LIBRARY_PATH),
            ui_dir: None,
            transport: TransportConfig::default(),
        }
    }
}

/// A running server. Dropping it without calling [`Server::shutdown`]
/// aborts the HTTP task.
pub struct Server {
    http_addr: SocketAddr,
    udp_addr: SocketAddr,
    state: AppState,
    stop: Option<oneshot::Sender<()>>,
    task: Option<JoinHandle<std::io::Result<()>>>,
}

impl Server {
    pub async fn start(config: ServerConfig) -> anyhow::Result<Self> {
        let library = Arc::new(Library::open(&config.library_path)?);
        let transport = Arc::new(Transport::bind(config.udp_addr, config.transport.clone()).await?);
        let udp_addr = transport.local_addr();
        let state = AppState { transport, library };

        let listener = TcpListener::bind(config.http_addr).await?;
        let http_addr = listener.local_addr()?;
        let app = app(state.clone(), config.ui_dir.as_deref());
        let (stop, stopped) = oneshot::channel::<()>();
        let task = tokio::spawn(async move {
            axum::serve(listener, app)
                .with_graceful_shutdown(async {
                    let _ = stopped.await;
                })
                .await
        });
        tracing::info!(%http_addr, %udp_addr, library = %config.library_path.display(), "server started");
        Ok(Self {
            http_addr,
            udp_addr,
            state,
            stop: Some(stop),
            task: Some(task),
        })
    }

    pub fn http_addr(&self) -> SocketAddr {
        self.http_addr
    }

    pub fn udp_addr(&self) -> SocketAddr {
        self.udp_addr
    }

    pub fn transport(&self) -> &Transport {
        &self.state.transport
    }

    pub fn library(&self) -> &Library {
        &self.state.library
    }

    /// Waits for the HTTP server to exit.
    pub async fn wait(mut self) -> anyhow::Result<()> {
        if let Some(task) = self.task.take() {
            task.await??;
        }
        Ok(())
    }

    /// Serves until `signal` resolves, then shuts down gracefully.
    pub async fn run_until(mut self, signal: impl std::future::Future<Output = ()>) -> anyhow::Result<()> {
        let Some(mut task) = self.task.take() else {
            return Ok(());
        };
        tokio::select! {
            r = &mut task => r??,
            () = signal => {
                if let Some(stop) = self.stop.take() {
                    let _ = stop.send(());
                }
                task.await??;
            }
        }
        Ok(())
    }

    pub async fn shutdown(mut self) -> anyhow::Result<()> {
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
        self.wait().await
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        if let Some(task) = &self.task {
            task.abort();
        }
    }
}

fn app(state: AppState, ui_dir: Option<&std::path::Path>) -> Router {
    let api = router(state);
    match ui_dir {
        Some(dir) => {
            let index = ServeFile::new(dir.join("index.html"));
            api.fallback_service(ServeDir::new(dir).not_found_service(index))
        }
        None => api,
    }
}
