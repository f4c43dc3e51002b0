use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use arena::clock::SystemClock;
use arena::config::ArenaConfig;
use arena::http::router;
use arena::service::Arena;
use clap::Parser;
use tracing_subscriber::EnvFilter;

/// Serve the arena HTTP API.
#[derive(Parser)]
#[command(version)]
struct Args {
    /// TOML configuration file.
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    bind: SocketAddr,
}

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .init();
    let args = Args::parse();
    let config = ArenaConfig::load(&args.config)?;
    if config.admin_token.is_none() {
        tracing::warn!("no admin token set; /admin endpoints are disabled");
    }
    let interval = Duration::from_secs(config.recompute_interval_secs.max(1));
    let (arena, opened) = Arena::open(config, Arc::new(SystemClock))?;
    tracing::info!(
        replayed = opened.replayed,
        truncated_bytes = opened.truncated_bytes,
        "storage recovered"
    );
    let arena = Arc::new(arena);

    let periodic = arena.clone();
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(interval);
        loop {
            tick.tick().await;
            match periodic.recompute().await {
                Ok(a) => tracing::debug!(seq = a.seq, "aggregates recomputed"),
                Err(e) => tracing::error!(error = %e, "recompute failed"),
            }
        }
    });

    let listener = tokio::net::TcpListener::bind(args.bind).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(arena.clone()))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    arena.sync().await?;
    arena.write_snapshot().await?;
    Ok(())
}
