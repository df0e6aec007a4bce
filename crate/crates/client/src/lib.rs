//! Typed async client for the change-detection service.

use reqwest::{Method, StatusCode};
use serde::de::DeserializeOwned;
use serde::Serialize;

use kroncd::wire::*;

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("{} error: {}", kind_name(.body.kind), .body.message)]
    Api { status: u16, body: ErrorBody },

    #[error("transport error: {0}")]
    Transport(#[from] reqwest::Error),

    #[error("unexpected response ({status}): {text}")]
    Unexpected { status: u16, text: String },
}

fn kind_name(kind: ErrorKind) -> &'static str {
    match kind {
        ErrorKind::Config => "config",
        ErrorKind::Data => "data",
        ErrorKind::Numerical => "numerical",
        ErrorKind::NotFound => "not found",
        ErrorKind::Internal => "internal",
    }
}

impl ClientError {
    /// Error class reported by the service, if the request got that far.
    pub fn kind(&self) -> Option<ErrorKind> {
        match self {
            ClientError::Api { body, .. } => Some(body.kind),
            _ => None,
        }
    }
}

fn error_from(status: StatusCode, text: String) -> ClientError {
    match serde_json::from_str::<ErrorBody>(&text) {
        Ok(body) => ClientError::Api {
            status: status.as_u16(),
            body,
        },
        Err(_) => ClientError::Unexpected {
            status: status.as_u16(),
            text,
        },
    }
}

pub type ClientResult<T> = Result<T, ClientError>;

#[derive(Debug, Clone)]
pub struct Client {
    base: String,
    http: reqwest::Client,
}

impl Client {
    /// `base` is the service root, e.g. `http://127.0.0.1:8080`.
    pub fn new(base: impl Into<String>) -> Self {
        Self {
            base: base.into().trim_end_matches('/').to_string(),
            http: reqwest::Client::new(),
        }
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    async fn call<B: Serialize + ?Sized, R: DeserializeOwned>(
        &self,
        method: Method,
        path: &str,
        body: Option<&B>,
    ) -> ClientResult<R> {
        let mut req = self.http.request(method, format!("{}{path}", self.base));
        if let Some(body) = body {
            req = req.json(body);
        }
        let resp = req.send().await?;
        let status = resp.status();
        if status.is_success() {
            return Ok(resp.json().await?);
        }
        Err(error_from(status, resp.text().await?))
    }

    async fn post<B: Serialize + ?Sized, R: DeserializeOwned>(&self, path: &str, body: &B) -> ClientResult<R> {
        self.call(Method::POST, path, Some(body)).await
    }

    pub async fn health(&self) -> ClientResult<Health> {
        self.call::<(), _>(Method::GET, "/health", None).await
    }

    pub async fn icrb(&self, req: &IcrbRequest) -> ClientResult<IcrbResponse> {
        self.post("/v1/icrb", req).await
    }

    pub async fn estimate(&self, req: &EstimateRequest) -> ClientResult<EstimateResponse> {
        self.post("/v1/estimate", req).await
    }

    pub async fn glrt(&self, req: &GlrtRequest) -> ClientResult<GlrtResponse> {
        self.post("/v1/glrt", req).await
    }

    pub async fn detect(&self, req: &DetectRequest) -> ClientResult<DetectResponse> {
        self.post("/v1/detect", req).await
    }

    pub async fn mse_bench(&self, req: &MseBenchRequest) -> ClientResult<MseBenchResponse> {
        self.post("/v1/mse-bench", req).await
    }

    pub async fn roc_bench(&self, req: &RocBenchRequest) -> ClientResult<RocBenchResponse> {
        self.post("/v1/roc-bench", req).await
    }

    pub async fn gen_stack(&self, req: &GenStackRequest) -> ClientResult<GenStackResponse> {
        self.post("/v1/gen-stack", req).await
    }

    pub async fn create_session(&self, req: &CreateSessionRequest) -> ClientResult<SessionInfo> {
        self.post("/v1/sessions", req).await
    }

    pub async fn session(&self, id: &str) -> ClientResult<SessionInfo> {
        self.call::<(), _>(Method::GET, &format!("/v1/sessions/{id}"), None).await
    }

    pub async fn push_frame(&self, id: &str, req: &PushFrameRequest) -> ClientResult<SessionInfo> {
        self.post(&format!("/v1/sessions/{id}/frames"), req).await
    }

    pub async fn delete_session(&self, id: &str) -> ClientResult<()> {
        let resp = self
            .http
            .delete(format!("{}/v1/sessions/{id}", self.base))
            .send()
            .await?;
        match resp.status() {
            StatusCode::NO_CONTENT | StatusCode::OK => Ok(()),
            status => Err(error_from(status, resp.text().await?)),
        }
    }
}
