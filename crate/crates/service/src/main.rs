use std::sync::Arc;
use std::time::Duration;

use clap::Parser;

use abacgen_core::artifacts::DEFAULT_MAX_ACM_TUPLES;
use abacgen_service::{
    build_router, AppState, BackendConfig, ServiceConfig, DEFAULT_MAX_BODY_BYTES,
    DEFAULT_MAX_CONCURRENT_JOBS,
};

#[derive(Parser)]
#[command(
    name = "abacgen-server",
    version,
    about = "HTTP API for the synthetic ABAC dataset generator"
)]
struct ServerArgs {
    /// Address to bind
    #[arg(long, default_value = "127.0.0.1:8080")]
    bind: String,
    /// Request body limit in bytes for POST /generate
    #[arg(long, default_value_t = DEFAULT_MAX_BODY_BYTES)]
    max_body_bytes: usize,
    /// Per-request wall clock budget in seconds
    #[arg(long, default_value_t = 120)]
    time_budget_secs: u64,
    /// Concurrent job limit; excess requests receive 429
    #[arg(long, default_value_t = DEFAULT_MAX_CONCURRENT_JOBS)]
    max_concurrent: usize,
    /// Largest access-control-matrix size enumerated in full
    #[arg(long, default_value_t = DEFAULT_MAX_ACM_TUPLES)]
    max_acm_tuples: u64,
    /// LLM backend endpoint URL, or mock://<script.json>
    #[arg(long)]
    backend_endpoint: Option<String>,
    /// Model identifier passed to the backend
    #[arg(long, default_value = "default")]
    backend_model: String,
    /// Name of the environment variable holding the backend credential
    #[arg(long)]
    credential_env: Option<String>,
}

#[tokio::main]
async fn main() {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| "info".into()),
        )
        .init();
    let args = ServerArgs::parse();
    let config = ServiceConfig {
        max_body_bytes: args.max_body_bytes,
        time_budget: Duration::from_secs(args.time_budget_secs),
        max_concurrent_jobs: args.max_concurrent,
        max_acm_tuples: args.max_acm_tuples,
        backend: BackendConfig {
            endpoint: args.backend_endpoint,
            model: args.backend_model,
            credential_env: args.credential_env,
        },
    };
    let router = build_router(Arc::new(AppState::new(config)));
    let listener = tokio::net::TcpListener::bind(&args.bind)
        .await
        .unwrap_or_else(|e| panic!("cannot bind {}: {e}", args.bind));
    tracing::info!("listening on {}", args.bind);
    axum::serve(listener, router)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .expect("server run");
}
