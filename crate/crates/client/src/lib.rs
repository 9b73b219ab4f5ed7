//! Typed client for the edgeac HTTP service. One method per route.

use reqwest::{Method, StatusCode};
use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use edgeac_core::api::{
    ApiError, DeploymentSummary, InitRequest, InitResponse, RunReport, StepRequest, StepResponse, ValidateReport,
    ValidateRequest,
};
use edgeac_core::bench::{AbeReport, BenchConfig, PowReport, ThroughputReport};
use edgeac_core::netsim::Scenario;

#[derive(Debug, Error)]
pub enum ClientError {
    /// The service answered with an error body.
    #[error("server returned {status}: {error}")]
    Api { status: StatusCode, error: ApiError },
    #[error("transport: {0}")]
    Transport(#[from] reqwest::Error),
}

impl ClientError {
    pub fn api(&self) -> Option<&ApiError> {
        match self {
            ClientError::Api { error, .. } => Some(error),
            ClientError::Transport(_) => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Client {
    base: String,
    http: reqwest::Client,
}

impl Client {
    /// `base` is the service root, e.g. `http://127.0.0.1:8080`.
    pub fn new(base: impl Into<String>) -> Self {
        let base = base.into().trim_end_matches('/').to_string();
        Self { base, http: reqwest::Client::new() }
    }

    pub fn base(&self) -> &str {
        &self.base
    }

    async fn send(&self, method: Method, path: &str, body: Option<&impl Serialize>) -> Result<reqwest::Response, ClientError> {
        let mut req = self.http.request(method, format!("{}{path}", self.base));
        if let Some(body) = body {
            req = req.json(body);
        }
        let resp = req.send().await?;
        let status = resp.status();
        if status.is_success() {
            return Ok(resp);
        }
        let text = resp.text().await?;
        let error = serde_json::from_str(&text).unwrap_or_else(|_| ApiError::new("http", text));
        Err(ClientError::Api { status, error })
    }

    async fn call<T: DeserializeOwned>(&self, method: Method, path: &str, body: Option<&impl Serialize>) -> Result<T, ClientError> {
        Ok(self.send(method, path, body).await?.json().await?)
    }

    async fn post<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T, ClientError> {
        self.call(Method::POST, path, Some(body)).await
    }

    async fn get<T: DeserializeOwned>(&self, path: &str) -> Result<T, ClientError> {
        self.call(Method::GET, path, None::<&()>).await
    }

    pub async fn health(&self) -> Result<String, ClientError> {
        Ok(self.send(Method::GET, "/health", None::<&()>).await?.text().await?)
    }

    pub async fn init(&self, req: &InitRequest) -> Result<InitResponse, ClientError> {
        self.post("/v1/init", req).await
    }

    pub async fn run(&self, scenario: &Scenario) -> Result<RunReport, ClientError> {
        self.post("/v1/run", scenario).await
    }

    pub async fn validate(&self, req: &ValidateRequest) -> Result<ValidateReport, ClientError> {
        self.post("/v1/validate", req).await
    }

    pub async fn bench_abe(&self, config: &BenchConfig) -> Result<AbeReport, ClientError> {
        self.post("/v1/bench/abe", config).await
    }

    pub async fn bench_pow(&self, config: &BenchConfig) -> Result<PowReport, ClientError> {
        self.post("/v1/bench/pow", config).await
    }

    pub async fn bench_throughput(&self, config: &BenchConfig) -> Result<ThroughputReport, ClientError> {
        self.post("/v1/bench/throughput", config).await
    }

    pub async fn create_deployment(&self, scenario: &Scenario) -> Result<DeploymentSummary, ClientError> {
        self.post("/v1/deployments", scenario).await
    }

    pub async fn deployment(&self, id: u64) -> Result<DeploymentSummary, ClientError> {
        self.get(&format!("/v1/deployments/{id}")).await
    }

    pub async fn step(&self, id: u64, req: &StepRequest) -> Result<StepResponse, ClientError> {
        self.post(&format!("/v1/deployments/{id}/events"), req).await
    }

    pub async fn deployment_chain(&self, id: u64) -> Result<String, ClientError> {
        Ok(self.send(Method::GET, &format!("/v1/deployments/{id}/chain"), None::<&()>).await?.text().await?)
    }

    pub async fn delete_deployment(&self, id: u64) -> Result<(), ClientError> {
        self.send(Method::DELETE, &format!("/v1/deployments/{id}"), None::<&()>).await?;
        Ok(())
    }
}
