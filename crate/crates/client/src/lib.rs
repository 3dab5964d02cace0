//! Async HTTP client for the sodfeeder service.

use reqwest::{Method, StatusCode};
use serde::Serialize;
use serde::de::DeserializeOwned;

use sodfeeder_api as api;

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    /// The service answered with an error body.
    #[error("{category}: {message}")]
    Service { status: u16, category: String, message: String },
    /// The request never got a usable answer.
    #[error("transport: {0}")]
    Transport(#[from] reqwest::Error),
}

impl ClientError {
    pub fn category(&self) -> &str {
        match self {
            ClientError::Service { category, .. } => category,
            ClientError::Transport(_) => "transport",
        }
    }
}

pub type Result<T> = std::result::Result<T, ClientError>;

#[derive(Debug, Clone)]
pub struct Client {
    base: String,
    http: reqwest::Client,
}

impl Client {
    /// `base` is the service root, e.g. `http://127.0.0.1:8080`.
    pub fn new(base: impl Into<String>) -> Self {
        Self { base: base.into().trim_end_matches('/').to_string(), http: reqwest::Client::new() }
    }

    pub fn base(&self) -> &str {
        &self.base
    }

    async fn send<T: DeserializeOwned>(&self, method: Method, path: &str, body: Option<&impl Serialize>) -> Result<T> {
        let mut req = self.http.request(method, format!("{}{path}", self.base));
        if let Some(b) = body {
            req = req.json(b);
        }
        let resp = req.send().await?;
        let status = resp.status();
        if status.is_success() {
            return Ok(resp.json().await?);
        }
        let text = resp.text().await?;
        Err(match serde_json::from_str::<api::ErrorBody>(&text) {
            Ok(e) => ClientError::Service { status: status.as_u16(), category: e.category, message: e.message },
            // Framework-level rejections (malformed JSON and the like) come back as plain text.
            Err(_) => ClientError::Service { status: status.as_u16(), category: fallback_category(status).into(), message: text },
        })
    }

    async fn post<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T> {
        self.send(Method::POST, path, Some(body)).await
    }

    pub async fn health(&self) -> Result<api::Health> {
        self.send(Method::GET, api::HEALTH, None::<&()>).await
    }

    pub async fn network(&self, req: &api::NetworkRequest) -> Result<api::NetworkResponse> {
        self.post(api::NETWORK, req).await
    }

    pub async fn demand(&self, req: &api::DemandRequest) -> Result<api::DemandResponse> {
        self.post(api::DEMAND, req).await
    }

    pub async fn simulate(&self, req: &api::SimulateRequest) -> Result<api::SimulateResponse> {
        self.post(api::SIMULATE, req).await
    }

    pub async fn compare(&self, req: &api::CompareRequest) -> Result<api::CompareResponse> {
        self.post(api::COMPARE, req).await
    }

    pub async fn train(&self, req: &api::TrainRequest) -> Result<api::TrainResponse> {
        self.post(api::TRAIN, req).await
    }

    pub async fn create_session(&self, req: &api::SessionRequest) -> Result<api::SessionCreated> {
        self.post(api::SESSIONS, req).await
    }

    pub async fn step(&self, id: &str, action: usize) -> Result<api::StepResponse> {
        self.post(&api::session_step_path(id), &api::StepRequest { action }).await
    }

    pub async fn close_session(&self, id: &str) -> Result<()> {
        let resp = self.http.delete(format!("{}{}", self.base, api::session_path(id))).send().await?;
        let status = resp.status();
        if status.is_success() {
            return Ok(());
        }
        let e: api::ErrorBody = resp.json().await?;
        Err(ClientError::Service { status: status.as_u16(), category: e.category, message: e.message })
    }
}

fn fallback_category(status: StatusCode) -> &'static str {
    if status.is_client_error() { "usage" } else { "internal" }
}
