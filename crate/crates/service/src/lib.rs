//! HTTP/JSON front for the change-detection library.
//!
//! All numerical work runs on the blocking pool; requests that name a thread
//! count run inside a dedicated rayon pool of that size.

use std::collections::HashMap;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{DefaultBodyLimit, FromRequest, Path, Request, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use tokio::sync::Mutex;
use uuid::Uuid;

use kroncd::detectors::{detection_map, glrt_offline, glrt_online, DetectorKind};
use kroncd::estimators::{kron_existence, kron_mle, FixedPointConfig};
use kroncd::geometry::icrb;
use kroncd::model::ModelDims;
use kroncd::online::{init_state, online_glrt_update, OnlineState, SgdConfig};
use kroncd::simlab::{mse_benchmark, roc_benchmark, synthetic_stack};
use kroncd::wire::*;
use kroncd::Error;

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn new(kind: ErrorKind, message: impl Into<String>) -> Self {
        let status = match kind {
            ErrorKind::Config | ErrorKind::Data => StatusCode::UNPROCESSABLE_ENTITY,
            ErrorKind::NotFound => StatusCode::NOT_FOUND,
            ErrorKind::Numerical | ErrorKind::Internal => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self {
            status,
            body: ErrorBody {
                kind,
                message: message.into(),
            },
        }
    }
}

impl From<Error> for ApiError {
    fn from(err: Error) -> Self {
        Self::new(ErrorKind::of(&err), err.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

/// JSON body whose rejections are reported as [`ErrorBody`].
pub struct ApiJson<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequest<S> for ApiJson<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        match Json::<T>::from_request(req, state).await {
            Ok(Json(v)) => Ok(ApiJson(v)),
            Err(rejection) => Err(rejection_error(rejection)),
        }
    }
}

fn rejection_error(rejection: JsonRejection) -> ApiError {
    ApiError::new(ErrorKind::Config, rejection.body_text())
}

struct Session {
    detector: DetectorKind,
    dims: ModelDims,
    sgd: SgdConfig,
    fixed_point: FixedPointConfig,
    state: Option<OnlineState>,
}

impl Session {
    fn info(&self, id: Uuid) -> SessionInfo {
        SessionInfo {
            id: id.to_string(),
            detector: self.detector,
            a: self.dims.a(),
            b: self.dims.b(),
            n: self.dims.n(),
            frames_seen: self.state.as_ref().map_or(0, OnlineState::frames_seen),
            log_glrt: self.state.as_ref().map_or(0.0, OnlineState::running_log_glrt),
            theta: self.state.as_ref().map(|s| WireTheta::from_theta(s.theta_hat())),
        }
    }
}

#[derive(Clone, Default)]
pub struct AppState {
    sessions: Arc<std::sync::Mutex<HashMap<Uuid, Arc<Mutex<Session>>>>>,
}

impl AppState {
    fn session(&self, id: &str) -> Result<(Uuid, Arc<Mutex<Session>>), ApiError> {
        let not_found = || ApiError::new(ErrorKind::NotFound, format!("no session {id}"));
        let uuid = Uuid::parse_str(id).map_err(|_| not_found())?;
        let sessions = self.sessions.lock().expect("session table poisoned");
        sessions.get(&uuid).cloned().map(|s| (uuid, s)).ok_or_else(not_found)
    }
}

pub fn router() -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/v1/icrb", post(icrb_handler))
        .route("/v1/estimate", post(estimate))
        .route("/v1/glrt", post(glrt))
        .route("/v1/detect", post(detect))
        .route("/v1/mse-bench", post(mse_bench))
        .route("/v1/roc-bench", post(roc_bench))
        .route("/v1/gen-stack", post(gen_stack))
        .route("/v1/sessions", post(create_session))
        .route("/v1/sessions/{id}", get(get_session).delete(delete_session))
        .route("/v1/sessions/{id}/frames", post(push_frame))
        .layer(DefaultBodyLimit::disable())
        .with_state(AppState::default())
}

/// Serves [`router`] until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router()).with_graceful_shutdown(shutdown).await
}

/// Runs `f` on the blocking pool, inside a rayon pool of `threads` workers
/// when given.
async fn blocking<T, F>(threads: Option<usize>, f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce() -> kroncd::Result<T> + Send + 'static,
{
    let pool = match threads {
        Some(0) => return Err(ApiError::new(ErrorKind::Config, "threads must be at least 1")),
        Some(k) => Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(k)
                .build()
                .map_err(|e| ApiError::new(ErrorKind::Internal, e.to_string()))?,
        ),
        None => None,
    };
    let joined = tokio::task::spawn_blocking(move || match pool {
        Some(pool) => pool.install(f),
        None => f(),
    })
    .await;
    match joined {
        Ok(result) => result.map_err(ApiError::from),
        Err(e) => Err(ApiError::new(ErrorKind::Internal, format!("worker failed: {e}"))),
    }
}

async fn health() -> Json<Health> {
    Json(Health {
        status: "ok".into(),
        version: env!("CARGO_PKG_VERSION").into(),
    })
}

async fn icrb_handler(ApiJson(req): ApiJson<IcrbRequest>) -> ApiResult<IcrbResponse> {
    let dims = ModelDims::new(req.a, req.b, req.n)?;
    if req.frames == 0 {
        return Err(ApiError::new(ErrorKind::Config, "T must be positive"));
    }
    Ok(Json(icrb(dims, req.frames)))
}

async fn estimate(ApiJson(req): ApiJson<EstimateRequest>) -> ApiResult<EstimateResponse> {
    let est = blocking(None, move || {
        req.fixed_point.validate()?;
        let patches = patches_from_wire(&req.patches, req.a, req.b)?;
        let dims = patches.first().ok_or(Error::EmptyInput("patch stack"))?.dims();
        kron_existence(dims, patches.len())?;
        kron_mle(&patches, dims, &req.fixed_point)
    })
    .await?;
    Ok(Json(EstimateResponse::from(&est)))
}

async fn glrt(ApiJson(req): ApiJson<GlrtRequest>) -> ApiResult<GlrtResponse> {
    let response = blocking(None, move || {
        req.config.validate()?;
        let patches = patches_from_wire(&req.patches, req.a, req.b)?;
        let dims = patches.first().ok_or(Error::EmptyInput("patch stack"))?.dims();
        kron_existence(req.detector.effective_dims(dims), 1)?;
        if req.detector.is_online() {
            let running: Vec<f64> = glrt_online(&patches, req.detector, dims, &req.config)?
                .into_iter()
                .map(|r| r.log_glrt)
                .collect();
            Ok(GlrtResponse {
                log_glrt: *running.last().expect("nonempty stream"),
                running: Some(running),
            })
        } else {
            Ok(GlrtResponse {
                log_glrt: glrt_offline(&patches, req.detector, dims, &req.config)?.log_glrt,
                running: None,
            })
        }
    })
    .await?;
    Ok(Json(response))
}

async fn detect(ApiJson(req): ApiJson<DetectRequest>) -> ApiResult<DetectResponse> {
    let map = blocking(req.threads, move || {
        let stack = req.stack.to_stack()?;
        let dims = ModelDims::new(req.a, req.b, 1)?;
        detection_map(&stack, req.window, req.detector, dims, &req.config)
    })
    .await?;
    tracing::info!(rows = map.rows, cols = map.cols, nan = map.nan_count(), "detection map");
    Ok(Json(DetectResponse {
        map: WireMap::from_map(&map),
    }))
}

async fn mse_bench(ApiJson(req): ApiJson<MseBenchRequest>) -> ApiResult<MseBenchResponse> {
    let report = blocking(req.threads, move || mse_benchmark(&req.config)).await?;
    Ok(Json(report))
}

async fn roc_bench(ApiJson(req): ApiJson<RocBenchRequest>) -> ApiResult<RocBenchResponse> {
    let report = blocking(req.threads, move || roc_benchmark(&req.scenario)).await?;
    Ok(Json(report))
}

async fn gen_stack(ApiJson(req): ApiJson<GenStackRequest>) -> ApiResult<GenStackResponse> {
    let stack = blocking(None, move || synthetic_stack(&req.spec)).await?;
    Ok(Json(GenStackResponse {
        stack: WireStack::from_stack(&stack),
    }))
}

async fn create_session(
    State(app): State<AppState>,
    ApiJson(req): ApiJson<CreateSessionRequest>,
) -> Result<(StatusCode, Json<SessionInfo>), ApiError> {
    if !req.detector.is_online() {
        return Err(ApiError::new(
            ErrorKind::Config,
            format!("{} is not an online detector", req.detector),
        ));
    }
    let dims = req.detector.effective_dims(ModelDims::new(req.a, req.b, req.n)?);
    req.sgd.validate()?;
    req.fixed_point.validate()?;
    kron_existence(dims, 1)?;
    let id = Uuid::new_v4();
    let session = Session {
        detector: req.detector,
        dims,
        sgd: req.sgd,
        fixed_point: req.fixed_point,
        state: None,
    };
    let info = session.info(id);
    app.sessions
        .lock()
        .expect("session table poisoned")
        .insert(id, Arc::new(Mutex::new(session)));
    Ok((StatusCode::CREATED, Json(info)))
}

async fn get_session(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<SessionInfo> {
    let (uuid, session) = app.session(&id)?;
    let session = session.lock().await;
    Ok(Json(session.info(uuid)))
}

async fn delete_session(State(app): State<AppState>, Path(id): Path<String>) -> Result<StatusCode, ApiError> {
    let (uuid, _) = app.session(&id)?;
    app.sessions.lock().expect("session table poisoned").remove(&uuid);
    Ok(StatusCode::NO_CONTENT)
}

async fn push_frame(
    State(app): State<AppState>,
    Path(id): Path<String>,
    ApiJson(req): ApiJson<PushFrameRequest>,
) -> ApiResult<SessionInfo> {
    let (uuid, session) = app.session(&id)?;
    let mut session = session.lock().await;
    let (dims, sgd, fixed_point, state) = (session.dims, session.sgd, session.fixed_point, session.state.clone());
    let next = blocking(None, move || {
        let patch = req.patch.to_patch(dims.a(), dims.b())?;
        if patch.dims() != dims {
            return Err(Error::DimensionMismatch(format!(
                "session expects p={} and n={}, got p={} and n={}",
                dims.p(),
                dims.n(),
                patch.dims().p(),
                patch.dims().n()
            )));
        }
        match state {
            None => init_state(&patch, dims, &fixed_point),
            Some(state) => Ok(online_glrt_update(&state, &patch, &sgd, &fixed_point)?.0),
        }
    })
    .await?;
    session.state = Some(next);
    Ok(Json(session.info(uuid)))
}
