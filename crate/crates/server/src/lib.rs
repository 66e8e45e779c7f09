//! HTTP/JSON front end for the governance kernel.
//!
//! Bodies are JSON in the journal's canonical form. `GET /events` is a
//! server-sent event stream whose `id:` is the frame seq. Callers present a
//! static bearer token from the config file; the kernel decides what each
//! role may do.

pub mod auth;
pub mod config;
pub mod error;
pub mod idempotency;
mod routes;
pub mod sse;

use std::fs::OpenOptions;
use std::future::Future;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use agentgov_core::events::EventFrame;
use agentgov_core::journal::{kind_stream, JournalError};
use agentgov_core::{Actor, Clock, Kernel, KernelError, Role};
use axum::extract::{Request, State};
use axum::middleware::{self, Next};
use axum::response::Response;
use axum::Router;
use thiserror::Error;
use tokio::sync::{broadcast, watch, Notify};

pub use config::{ConfigError, ServerConfig};
pub use error::{ApiError, Canonical};

/// Actor recorded as the registrant of kinds declared in the config file.
pub const CONFIG_ACTOR: &str = "config";

#[derive(Debug, Error)]
pub enum StartupError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("storage: {0}")]
    Storage(String),
}

impl StartupError {
    /// 1 for configuration problems, 2 for storage problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            StartupError::Config(_) => 1,
            StartupError::Storage(_) => 2,
        }
    }
}

/// Trips once when a journal write fails.
#[derive(Default)]
pub struct StorageWatch {
    failed: AtomicBool,
    notify: Notify,
}

impl StorageWatch {
    pub fn trip(&self) {
        if !self.failed.swap(true, Ordering::SeqCst) {
            tracing::error!("journal storage failed; shutting down");
        }
        self.notify.notify_waiters();
        self.notify.notify_one();
    }

    pub fn failed(&self) -> bool {
        self.failed.load(Ordering::SeqCst)
    }

    pub async fn wait(&self) {
        while !self.failed() {
            self.notify.notified().await;
        }
    }
}

#[derive(Clone)]
pub struct AppState {
    pub kernel: Arc<Kernel>,
    pub frames: broadcast::Sender<Arc<EventFrame>>,
    pub idempotency: Arc<idempotency::IdempotencyCache>,
    pub storage: Arc<StorageWatch>,
    pub shutdown: Arc<watch::Sender<bool>>,
}

impl AppState {
    /// Wires the kernel's frame log into the broadcast channel.
    pub fn new(kernel: Arc<Kernel>, event_buffer: usize, idempotency_capacity: usize) -> Self {
        let (frames, _) = broadcast::channel(event_buffer.max(1));
        let tx = frames.clone();
        kernel.events().listen(Box::new(move |f| {
            // No subscribers is fine.
            let _ = tx.send(f.clone());
        }));
        let (shutdown, _) = watch::channel(false);
        Self {
            kernel,
            frames,
            idempotency: Arc::new(idempotency::IdempotencyCache::new(idempotency_capacity)),
            storage: Arc::new(StorageWatch::default()),
            shutdown: Arc::new(shutdown),
        }
    }

    /// Ends open event streams.
    pub fn close_streams(&self) {
        self.shutdown.send_replace(true);
    }
}

async fn watch_storage(State(state): State<AppState>, req: Request, next: Next) -> Response {
    let resp = next.run(req).await;
    if resp.extensions().get::<error::StorageFailed>().is_some() {
        state.storage.trip();
    }
    resp
}

pub fn router(state: AppState) -> Router {
    routes::routes()
        .layer(middleware::from_fn_with_state(state.clone(), watch_storage))
        .layer(middleware::from_fn_with_state(state.clone(), idempotency::layer))
        .with_state(state)
}

/// Builds the kernel described by `cfg`, resuming from the journal file when
/// one is configured and non-empty.
pub fn open_kernel(cfg: &ServerConfig, clock: Arc<dyn Clock>) -> Result<Kernel, StartupError> {
    let policies = cfg.policies();
    if cfg.actors.iter().any(|a| a.id == CONFIG_ACTOR) {
        return Err(ConfigError::Invalid(vec![format!("actor id '{CONFIG_ACTOR}' is reserved")]).into());
    }

    let kernel = match &cfg.journal_path {
        None => Kernel::new(cfg.kernel_config(), clock),
        Some(path) => {
            let text = match std::fs::read_to_string(path) {
                Ok(t) => t,
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
                Err(e) => return Err(StartupError::Storage(format!("{}: {e}", path.display()))),
            };
            let store = agentgov_core::JournalStore::new();
            let loaded = store
                .import_jsonl(&text)
                .map_err(|e| StartupError::Storage(format!("{}: {e}", path.display())))?;
            let file = OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(|e| StartupError::Storage(format!("{}: {e}", path.display())))?;
            let store = Arc::new(store.attach_sink(Box::new(file)));
            let known: Vec<_> = policies
                .iter()
                .filter(|p| store.has_stream(&kind_stream(&p.name)))
                .cloned()
                .collect();
            tracing::info!(path = %path.display(), records = loaded, "journal loaded");
            Kernel::recover(cfg.kernel_config(), clock, store, known).map_err(|e| match e {
                KernelError::UnknownAgentKind(k) => StartupError::Config(ConfigError::Invalid(vec![format!(
                    "journal references kind '{k}' which the config does not declare"
                )])),
                other => StartupError::Storage(other.to_string()),
            })?
        }
    };

    for a in cfg.actors() {
        kernel.register_actor(a);
    }
    kernel.register_actor(Actor::new(CONFIG_ACTOR, Role::Admin, None));
    let registrant = agentgov_core::ActorId::new(CONFIG_ACTOR);
    for p in policies {
        if kernel.kind_policy(&p.name).is_ok() {
            continue;
        }
        kernel.register_kind(p, &registrant).map_err(|e| match e {
            KernelError::Journal(JournalError::StorageFailure(m)) => StartupError::Storage(m),
            other => StartupError::Config(ConfigError::Invalid(vec![other.to_string()])),
        })?;
    }
    Ok(kernel)
}

/// Expires due checkpoints every `period` until the state shuts down.
pub fn spawn_expiry(state: AppState, period: Duration) -> tokio::task::JoinHandle<()> {
    let mut stop = state.shutdown.subscribe();
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(period);
        tick.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
        loop {
            tokio::select! {
                _ = tick.tick() => {}
                _ = stop.wait_for(|s| *s) => return,
            }
            let k = state.kernel.clone();
            let expired = tokio::task::spawn_blocking(move || k.expire_due_checkpoints(k.now()))
                .await
                .unwrap_or_default();
            for (cp, _) in &expired {
                tracing::info!(checkpoint_id = %cp, "checkpoint expired");
            }
        }
    })
}

/// Serves until `signal` resolves or a journal write fails. Returns the
/// process exit code: 0 for a clean stop, 2 after a storage failure.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: AppState,
    expiry_period: Duration,
    signal: impl Future<Output = ()> + Send + 'static,
) -> i32 {
    let expiry = spawn_expiry(state.clone(), expiry_period);
    let app = router(state.clone());
    let stopper = state.clone();
    let shutdown = async move {
        tokio::select! {
            _ = signal => tracing::info!("shutdown requested"),
            _ = stopper.storage.wait() => {}
        }
        stopper.close_streams();
    };
    if let Err(e) = axum::serve(listener, app).with_graceful_shutdown(shutdown).await {
        tracing::error!(error = %e, "server error");
    }
    state.close_streams();
    let _ = expiry.await;
    if state.storage.failed() {
        2
    } else {
        0
    }
}
