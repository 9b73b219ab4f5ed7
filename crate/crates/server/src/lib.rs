//! HTTP/JSON front end for `edgeac-core`.
//!
//! Every handler is transport only: bodies are decoded into the shared
//! `edgeac_core::api` types, CPU-bound work runs on the blocking pool, and
//! failures come back as an [`ApiError`] body.
//!
//! | route | body | reply |
//! |---|---|---|
//! | `GET /health` | | `ok` |
//! | `POST /v1/init` | `InitRequest` | `InitResponse` |
//! | `POST /v1/run` | `Scenario` | `RunReport` |
//! | `POST /v1/validate` | `ValidateRequest` | `ValidateReport` |
//! | `POST /v1/bench/{abe,pow,throughput}` | `BenchConfig` | the bench report |
//! | `POST /v1/deployments` | `Scenario` | `DeploymentSummary` |
//! | `GET /v1/deployments/{id}` | | `DeploymentSummary` |
//! | `POST /v1/deployments/{id}/events` | `StepRequest` | `StepResponse` |
//! | `GET /v1/deployments/{id}/chain` | | JSONL text |
//! | `DELETE /v1/deployments/{id}` | | 204 |

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use axum::extract::rejection::JsonRejection;
use axum::extract::{FromRequest, Path, Request, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::de::DeserializeOwned;
use serde::Serialize;
use tokio::net::TcpListener;
use tokio::task::JoinHandle;

use edgeac_core::api::{
    self, ApiError, DeploymentSummary, InitRequest, StepRequest, StepResponse, ValidateRequest,
};
use edgeac_core::bench::{self, BenchConfig, BenchError};
use edgeac_core::netsim::{AnySimulation, Scenario, SimError};

/// An error reply: status plus the JSON error body.
#[derive(Debug)]
pub struct Failure(StatusCode, ApiError);

impl Failure {
    fn not_found(id: u64) -> Self {
        Failure(StatusCode::NOT_FOUND, ApiError::new("not_found", format!("no deployment {id}")))
    }

    fn internal(message: impl Into<String>) -> Self {
        Failure(StatusCode::INTERNAL_SERVER_ERROR, ApiError::new("internal", message))
    }
}

impl IntoResponse for Failure {
    fn into_response(self) -> Response {
        (self.0, axum::Json(self.1)).into_response()
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        Failure(StatusCode::UNPROCESSABLE_ENTITY, ApiError::from(&e))
    }
}

impl From<BenchError> for Failure {
    fn from(e: BenchError) -> Self {
        match e {
            BenchError::Config(_) => Failure(StatusCode::UNPROCESSABLE_ENTITY, ApiError::new("invalid_config", e.to_string())),
            BenchError::Run(_) => Failure::internal(e.to_string()),
        }
    }
}

/// `Json` whose rejections are [`ApiError`] bodies with status 400.
pub struct Body<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequest<S> for Body<T> {
    type Rejection = Failure;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        match axum::Json::<T>::from_request(req, state).await {
            Ok(axum::Json(v)) => Ok(Body(v)),
            Err(rejection) => Err(Failure(StatusCode::BAD_REQUEST, ApiError::new("invalid_request", text(&rejection)))),
        }
    }
}

fn text(rejection: &JsonRejection) -> String {
    rejection.body_text()
}

type Reply<T> = Result<axum::Json<T>, Failure>;

/// Runs CPU-bound work off the async workers.
async fn blocking<T, F>(f: F) -> Result<T, Failure>
where
    F: FnOnce() -> Result<T, Failure> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f).await.map_err(|e| Failure::internal(format!("worker failed: {e}")))?
}

type Deployment = Arc<Mutex<Deployed>>;

pub struct Deployed {
    seed: u64,
    sim: AnySimulation,
}

#[derive(Default)]
pub struct AppState {
    next_id: AtomicU64,
    deployments: Mutex<HashMap<u64, Deployment>>,
}

impl AppState {
    fn get(&self, id: u64) -> Result<Deployment, Failure> {
        self.deployments.lock().expect("deployment map poisoned").get(&id).cloned().ok_or(Failure::not_found(id))
    }
}

fn summary(id: u64, d: &Deployed) -> DeploymentSummary {
    DeploymentSummary {
        id,
        seed: d.seed,
        tick: d.sim.tick(),
        height: d.sim.height(),
        pending: d.sim.pending(),
        ids: d.sim.ids(),
        accesses: d.sim.accesses().to_vec(),
    }
}

async fn health() -> &'static str {
    "ok"
}

async fn init(Body(req): Body<InitRequest>) -> Reply<api::InitResponse> {
    blocking(move || Ok(axum::Json(api::init(&req)?))).await
}

async fn run(Body(scenario): Body<Scenario>) -> Reply<api::RunReport> {
    blocking(move || Ok(axum::Json(api::run(&scenario)?))).await
}

async fn validate(Body(req): Body<ValidateRequest>) -> Reply<api::ValidateReport> {
    blocking(move || Ok(axum::Json(api::validate(&req)))).await
}

async fn bench_with<R, F>(config: BenchConfig, f: F) -> Reply<R>
where
    R: Serialize + Send + 'static,
    F: FnOnce(&BenchConfig) -> Result<R, BenchError> + Send + 'static,
{
    blocking(move || Ok(axum::Json(f(&config)?))).await
}

async fn bench_abe(Body(config): Body<BenchConfig>) -> Reply<bench::AbeReport> {
    bench_with(config, bench::bench_abe).await
}

async fn bench_pow(Body(config): Body<BenchConfig>) -> Reply<bench::PowReport> {
    bench_with(config, bench::bench_pow).await
}

async fn bench_throughput(Body(config): Body<BenchConfig>) -> Reply<bench::ThroughputReport> {
    bench_with(config, bench::bench_throughput).await
}

async fn create_deployment(
    State(state): State<Arc<AppState>>,
    Body(scenario): Body<Scenario>,
) -> Result<(StatusCode, axum::Json<DeploymentSummary>), Failure> {
    let deployed = blocking(move || {
        let mut sim = AnySimulation::new(&scenario)?;
        for event in &scenario.events {
            sim.step(event)?;
        }
        Ok(Deployed { seed: scenario.seed, sim })
    })
    .await?;
    let id = state.next_id.fetch_add(1, Ordering::Relaxed) + 1;
    let body = summary(id, &deployed);
    state.deployments.lock().expect("deployment map poisoned").insert(id, Arc::new(Mutex::new(deployed)));
    tracing::info!(id, "deployment created");
    Ok((StatusCode::CREATED, axum::Json(body)))
}

async fn show_deployment(State(state): State<Arc<AppState>>, Path(id): Path<u64>) -> Reply<DeploymentSummary> {
    let d = state.get(id)?;
    let d = d.lock().expect("deployment poisoned");
    Ok(axum::Json(summary(id, &d)))
}

/// Applies events in order. On a failing event the earlier ones stay applied.
async fn step_deployment(
    State(state): State<Arc<AppState>>,
    Path(id): Path<u64>,
    Body(req): Body<StepRequest>,
) -> Reply<StepResponse> {
    let d = state.get(id)?;
    blocking(move || {
        let mut d = d.lock().expect("deployment poisoned");
        let before = d.sim.accesses().len();
        for event in &req.events {
            d.sim.step(event)?;
        }
        if req.flush {
            d.sim.flush()?;
        }
        let new_accesses = d.sim.accesses()[before..].to_vec();
        Ok(axum::Json(StepResponse { summary: summary(id, &d), new_accesses }))
    })
    .await
}

async fn deployment_chain(State(state): State<Arc<AppState>>, Path(id): Path<u64>) -> Result<Response, Failure> {
    let d = state.get(id)?;
    let jsonl = d.lock().expect("deployment poisoned").sim.snapshot().chain_jsonl();
    Ok(([(header::CONTENT_TYPE, "application/jsonl")], jsonl).into_response())
}

async fn delete_deployment(State(state): State<Arc<AppState>>, Path(id): Path<u64>) -> Result<StatusCode, Failure> {
    match state.deployments.lock().expect("deployment map poisoned").remove(&id) {
        Some(_) => Ok(StatusCode::NO_CONTENT),
        None => Err(Failure::not_found(id)),
    }
}

async fn fallback() -> Failure {
    Failure(StatusCode::NOT_FOUND, ApiError::new("not_found", "no such route"))
}

pub fn router() -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/v1/init", post(init))
        .route("/v1/run", post(run))
        .route("/v1/validate", post(validate))
        .route("/v1/bench/abe", post(bench_abe))
        .route("/v1/bench/pow", post(bench_pow))
        .route("/v1/bench/throughput", post(bench_throughput))
        .route("/v1/deployments", post(create_deployment))
        .route("/v1/deployments/{id}", get(show_deployment).delete(delete_deployment))
        .route("/v1/deployments/{id}/events", post(step_deployment))
        .route("/v1/deployments/{id}/chain", get(deployment_chain))
        .fallback(fallback)
        // Chains and payload sweeps exceed axum's 2 MiB default.
        .layer(axum::extract::DefaultBodyLimit::max(256 << 20))
        .with_state(Arc::new(AppState::default()))
}

pub async fn serve(listener: TcpListener) -> std::io::Result<()> {
    axum::serve(listener, router()).await
}

/// Binds `addr` and serves in a background task; port 0 picks a free port.
pub async fn spawn(addr: SocketAddr) -> std::io::Result<(SocketAddr, JoinHandle<std::io::Result<()>>)> {
    let listener = TcpListener::bind(addr).await?;
    let local = listener.local_addr()?;
    Ok((local, tokio::spawn(serve(listener))))
}
