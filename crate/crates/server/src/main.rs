use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use agentgov_core::SystemClock;
use agentgov_server::{open_kernel, serve, AppState, ServerConfig, StartupError};
use clap::Parser;
use tracing_subscriber::EnvFilter;

/// Exit codes: 0 clean shutdown, 1 config error, 2 storage failure.
#[derive(Debug, Parser)]
#[command(name = "agentgov-server", version, about = "Governance kernel over HTTP")]
struct Args {
    /// TOML config file.
    #[arg(short, long, default_value = "agentgov.toml")]
    config: PathBuf,
    /// Validate the config (and journal, if any) and exit.
    #[arg(long)]
    check: bool,
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .init();
    let args = Args::parse();
    ExitCode::from(run(args) as u8)
}

fn run(args: Args) -> i32 {
    let cfg = match ServerConfig::load(&args.config) {
        Ok(c) => c,
        Err(e) => {
            tracing::error!(error = %e, "config error");
            return 1;
        }
    };
    let kernel = match open_kernel(&cfg, Arc::new(SystemClock)) {
        Ok(k) => Arc::new(k),
        Err(e) => {
            tracing::error!(error = %e, "startup failed");
            return e.exit_code();
        }
    };
    if args.check {
        tracing::info!(records = kernel.journal().len(), "config ok");
        return 0;
    }
    let addr = match cfg.listen_addr() {
        Ok(a) => a,
        Err(e) => return StartupError::from(e).exit_code(),
    };

    let rt = match tokio::runtime::Builder::new_multi_thread().enable_all().build() {
        Ok(rt) => rt,
        Err(e) => {
            tracing::error!(error = %e, "cannot start runtime");
            return 1;
        }
    };
    rt.block_on(async move {
        let listener = match tokio::net::TcpListener::bind(addr).await {
            Ok(l) => l,
            Err(e) => {
                tracing::error!(%addr, error = %e, "cannot bind listen address");
                return 1;
            }
        };
        tracing::info!(%addr, "listening");
        let state = AppState::new(kernel, cfg.event_buffer, cfg.idempotency_capacity);
        let signal = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        serve(listener, state, Duration::from_millis(cfg.expiry_tick_ms), signal).await
    })
}
