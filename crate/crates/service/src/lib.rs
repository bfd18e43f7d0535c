//! HTTP API mirroring the batch submit-and-download interaction of the CLI.
//!
//! Endpoints:
//! * `POST /generate` — body is `input.json` (at most 1 MiB by default),
//!   query parameters `seed`, `max_acm_tuples`, `sample_tuples`, `no_acm`;
//!   responds with the dataset archive (`application/zip`). The seed used is
//!   echoed in the `x-abacgen-seed` header.
//! * `POST /extract` — multipart form: one JSON part (the minimal config)
//!   plus one part per sketch image. Responds with the merged `input.json`
//!   (plus a `warnings` array) as JSON, or, under `Accept: application/zip`,
//!   a zip of the merged config, the comparison images, and the warnings.
//! * `GET /health` — liveness plus whether a backend is configured.
//!
//! Generation runs the same pipeline as the CLI, so identical spec and seed
//! produce byte-identical archives on either surface. Jobs beyond the
//! concurrency limit are rejected with 429; each request has a wall-clock
//! budget. Credentials and image bytes are never logged.

use std::hash::{BuildHasher, Hasher};
use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Multipart, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde_json::json;
use tokio::sync::Semaphore;

use abacgen_core::artifacts::{package_simple_zip, DEFAULT_MAX_ACM_TUPLES};
use abacgen_core::pipeline::{
    run_extract, run_generate, ErrorClass, GenerateOptions, PipelineError,
};
use abacgen_core::sketch::SketchPipelineConfig;
use abacgen_core::{
    parse_spec, HttpLlmBackend, LlmBackend, MockLlmBackend, SketchEntry,
};

pub const DEFAULT_MAX_BODY_BYTES: usize = 1024 * 1024;
pub const DEFAULT_TIME_BUDGET: Duration = Duration::from_secs(120);
pub const DEFAULT_MAX_CONCURRENT_JOBS: usize = 2;

/// Backend selection, mirroring the CLI flags.
#[derive(Debug, Clone, Default)]
pub struct BackendConfig {
    pub endpoint: Option<String>,
    pub model: String,
    pub credential_env: Option<String>,
}

impl BackendConfig {
    fn build(&self) -> Option<Arc<dyn LlmBackend>> {
        let endpoint = self.endpoint.as_deref()?;
        if let Some(script) = endpoint.strip_prefix("mock://") {
            return MockLlmBackend::from_script_file(std::path::Path::new(script))
                .ok()
                .map(|m| Arc::new(m) as Arc<dyn LlmBackend>);
        }
        Some(Arc::new(HttpLlmBackend::new(
            endpoint,
            if self.model.is_empty() {
                "default".to_string()
            } else {
                self.model.clone()
            },
            self.credential_env.clone(),
            Duration::from_secs(60),
        )))
    }
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub max_body_bytes: usize,
    pub time_budget: Duration,
    pub max_concurrent_jobs: usize,
    pub max_acm_tuples: u64,
    pub backend: BackendConfig,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            max_body_bytes: DEFAULT_MAX_BODY_BYTES,
            time_budget: DEFAULT_TIME_BUDGET,
            max_concurrent_jobs: DEFAULT_MAX_CONCURRENT_JOBS,
            max_acm_tuples: DEFAULT_MAX_ACM_TUPLES,
            backend: BackendConfig::default(),
        }
    }
}

pub struct AppState {
    config: ServiceConfig,
    backend: Option<Arc<dyn LlmBackend>>,
    jobs: Semaphore,
}

impl AppState {
    pub fn new(config: ServiceConfig) -> Self {
        AppState {
            backend: config.backend.build(),
            jobs: Semaphore::new(config.max_concurrent_jobs),
            config,
        }
    }
}

pub fn build_router(state: Arc<AppState>) -> Router {
    let body_limit = state.config.max_body_bytes;
    Router::new()
        .route("/generate", post(generate_handler))
        .route("/extract", post(extract_handler))
        .route("/health", get(health_handler))
        .layer(DefaultBodyLimit::max(body_limit))
        .with_state(state)
}

fn error_response(status: StatusCode, payload: serde_json::Value) -> Response {
    (
        status,
        [(header::CONTENT_TYPE, "application/json")],
        payload.to_string(),
    )
        .into_response()
}

fn pipeline_error_response(err: PipelineError) -> Response {
    let status = match err.class() {
        ErrorClass::Spec => StatusCode::BAD_REQUEST,
        ErrorClass::Generation => StatusCode::UNPROCESSABLE_ENTITY,
        ErrorClass::Backend => StatusCode::BAD_GATEWAY,
        ErrorClass::Io => StatusCode::INTERNAL_SERVER_ERROR,
    };
    let mut response = error_response(status, err.to_json());
    if status == StatusCode::BAD_GATEWAY {
        response
            .headers_mut()
            .insert(header::RETRY_AFTER, "5".parse().expect("static header"));
    }
    response
}

fn busy_response() -> Response {
    error_response(
        StatusCode::TOO_MANY_REQUESTS,
        json!({"error": {"kind": "Busy", "message": "concurrent job limit reached; retry later"}}),
    )
}

fn timeout_response() -> Response {
    error_response(
        StatusCode::INTERNAL_SERVER_ERROR,
        json!({"error": {"kind": "TimeBudgetExceeded",
               "message": "request exceeded the configured time budget"}}),
    )
}

#[derive(Debug, serde::Deserialize)]
struct GenerateQuery {
    seed: Option<u64>,
    max_acm_tuples: Option<u64>,
    sample_tuples: Option<u64>,
    #[serde(default)]
    no_acm: bool,
}

fn fresh_seed() -> u64 {
    std::collections::hash_map::RandomState::new()
        .build_hasher()
        .finish()
}

async fn generate_handler(
    State(state): State<Arc<AppState>>,
    Query(query): Query<GenerateQuery>,
    body: Bytes,
) -> Response {
    let Ok(_permit) = state.jobs.try_acquire() else {
        return busy_response();
    };
    let spec = match parse_spec(&body) {
        Ok(spec) => spec,
        Err(err) => return pipeline_error_response(err.into()),
    };
    let seed = query.seed.unwrap_or_else(fresh_seed);
    let options = GenerateOptions {
        seed,
        max_acm_tuples: query.max_acm_tuples.unwrap_or(state.config.max_acm_tuples),
        sample_tuples: query.sample_tuples,
        no_acm: query.no_acm,
        ..GenerateOptions::new(seed)
    };
    let job = tokio::task::spawn_blocking(move || run_generate(&spec, &options));
    let result = match tokio::time::timeout(state.config.time_budget, job).await {
        Err(_) => return timeout_response(),
        Ok(Err(join_err)) => {
            return error_response(
                StatusCode::INTERNAL_SERVER_ERROR,
                json!({"error": {"kind": "Internal", "message": join_err.to_string()}}),
            )
        }
        Ok(Ok(result)) => result,
    };
    match result {
        Ok(output) => (
            StatusCode::OK,
            [
                (header::CONTENT_TYPE, "application/zip".to_string()),
                (
                    header::CONTENT_DISPOSITION,
                    "attachment; filename=\"dataset.zip\"".to_string(),
                ),
                (
                    header::HeaderName::from_static("x-abacgen-seed"),
                    seed.to_string(),
                ),
            ],
            output.zip_bytes,
        )
            .into_response(),
        Err(err) => pipeline_error_response(err),
    }
}

fn declared_type(file_name: Option<&str>, content_type: Option<&str>) -> String {
    if let Some(ct) = content_type {
        if ct.starts_with("image/") {
            return ct.to_string();
        }
    }
    let lower = file_name.unwrap_or_default().to_ascii_lowercase();
    if lower.ends_with(".png") {
        "image/png".into()
    } else if lower.ends_with(".jpg") || lower.ends_with(".jpeg") {
        "image/jpeg".into()
    } else {
        "application/octet-stream".into()
    }
}

async fn extract_handler(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    mut multipart: Multipart,
) -> Response {
    let Ok(_permit) = state.jobs.try_acquire() else {
        return busy_response();
    };
    let Some(backend) = state.backend.clone() else {
        return pipeline_error_response(
            abacgen_core::sketch::backend::BackendError::NotConfigured.into(),
        );
    };

    let mut minimal: Option<Vec<u8>> = None;
    let mut entries: Vec<SketchEntry> = Vec::new();
    let mut part_index = 0usize;
    loop {
        let field = match multipart.next_field().await {
            Ok(Some(field)) => field,
            Ok(None) => break,
            Err(err) => {
                return error_response(
                    StatusCode::BAD_REQUEST,
                    json!({"error": {"kind": "Multipart", "message": err.to_string()}}),
                )
            }
        };
        part_index += 1;
        let field_name = field.name().unwrap_or_default().to_string();
        let file_name = field.file_name().map(str::to_string);
        let content_type = field.content_type().map(str::to_string);
        let data = match field.bytes().await {
            Ok(data) => data,
            Err(err) => {
                return error_response(
                    StatusCode::BAD_REQUEST,
                    json!({"error": {"kind": "Multipart", "message": err.to_string()}}),
                )
            }
        };
        let looks_like_json = field_name == "minimal"
            || content_type.as_deref() == Some("application/json")
            || file_name.as_deref().is_some_and(|n| n.ends_with(".json"));
        if looks_like_json && minimal.is_none() {
            minimal = Some(data.to_vec());
        } else {
            let name = file_name.unwrap_or_else(|| format!("part-{part_index}"));
            entries.push(SketchEntry {
                declared_media_type: declared_type(Some(&name), content_type.as_deref()),
                name,
                bytes: data.to_vec(),
            });
        }
    }
    let Some(minimal) = minimal else {
        return error_response(
            StatusCode::BAD_REQUEST,
            json!({"error": {"kind": "Multipart",
                   "message": "no minimal JSON part found (field \"minimal\" or a .json part)"}}),
        );
    };
    if entries.is_empty() {
        return error_response(
            StatusCode::BAD_REQUEST,
            json!({"error": {"kind": "Multipart", "message": "no image parts found"}}),
        );
    }

    let config = SketchPipelineConfig::default();
    let job =
        tokio::task::spawn_blocking(move || run_extract(&minimal, entries, backend.as_ref(), &config));
    let result = match tokio::time::timeout(state.config.time_budget, job).await {
        Err(_) => return timeout_response(),
        Ok(Err(join_err)) => {
            return error_response(
                StatusCode::INTERNAL_SERVER_ERROR,
                json!({"error": {"kind": "Internal", "message": join_err.to_string()}}),
            )
        }
        Ok(Ok(result)) => result,
    };
    let output = match result {
        Ok(output) => output,
        Err(err) => return pipeline_error_response(err),
    };

    let warnings: Vec<serde_json::Value> = output
        .failures
        .iter()
        .map(|(name, message)| json!({"image": name, "message": message}))
        .collect();
    let wants_zip = headers
        .get(header::ACCEPT)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|accept| accept.contains("application/zip"));
    if wants_zip {
        let mut members: Vec<(String, Vec<u8>)> =
            vec![("input.json".into(), output.merged_json.into_bytes())];
        for (name, bytes) in output.comparisons {
            members.push((format!("sketches/{name}"), bytes));
        }
        members.push((
            "warnings.json".into(),
            serde_json::to_vec_pretty(&warnings).expect("warnings serialize"),
        ));
        return match package_simple_zip(&members) {
            Ok(bytes) => (
                StatusCode::OK,
                [(header::CONTENT_TYPE, "application/zip")],
                bytes,
            )
                .into_response(),
            Err(err) => pipeline_error_response(err.into()),
        };
    }
    let merged: serde_json::Value =
        serde_json::from_str(&output.merged_json).expect("merged spec is valid JSON");
    (
        StatusCode::OK,
        [(header::CONTENT_TYPE, "application/json")],
        json!({"input_json": merged, "warnings": warnings}).to_string(),
    )
        .into_response()
}

async fn health_handler(State(state): State<Arc<AppState>>) -> Response {
    (
        StatusCode::OK,
        [(header::CONTENT_TYPE, "application/json")],
        json!({
            "status": "ok",
            "version": env!("CARGO_PKG_VERSION"),
            "backend_configured": state.backend.is_some(),
        })
        .to_string(),
    )
        .into_response()
}
