use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use http_body_util::BodyExt;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};
use tower::ServiceExt;

use kroncd::detectors::{detection_map, glrt_offline, DetectorConfig, DetectorKind};
use kroncd::linalg::{hermitian_toeplitz, C64};
use kroncd::model::{KronSampler, ModelDims, Patch, SimNoise};
use kroncd::online::run_stream;
use kroncd::simlab::{synthetic_stack, trial_rng, StackSpec};
use kroncd::wire::*;
use kroncd_service::router;

async fn send(method: Method, uri: &str, body: Option<String>) -> (StatusCode, Value) {
    let builder = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => builder.header("content-type", "application/json").body(Body::from(b)),
        None => builder.body(Body::empty()),
    }
    .unwrap();
    let resp = router().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, value)
}

async fn post<B: Serialize, R: DeserializeOwned>(uri: &str, body: &B) -> R {
    let (status, value) = send(Method::POST, uri, Some(serde_json::to_string(body).unwrap())).await;
    assert!(status.is_success(), "{uri}: {status} {value}");
    serde_json::from_value(value).unwrap()
}

fn series(dims: ModelDims, frames: usize, seed: u64) -> Vec<Patch> {
    let mut rng = trial_rng(seed, 0);
    let a = hermitian_toeplitz(C64::new(0.3, 0.5), dims.a()).unwrap();
    let b = hermitian_toeplitz(C64::new(0.4, 0.2), dims.b()).unwrap();
    let sampler = KronSampler::new(&a, &b).unwrap();
    let tau = SimNoise::new(1.0).unwrap().draw_textures(dims.n(), &mut rng);
    (0..frames).map(|_| sampler.sample(&tau, &mut rng).unwrap()).collect()
}

#[tokio::test]
async fn health_reports_ok() {
    let (status, value) = send(Method::GET, "/health", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(value["status"], "ok");
}

#[tokio::test]
async fn icrb_matches_closed_form() {
    let r: IcrbResponse = post("/v1/icrb", &IcrbRequest { a: 4, b: 3, n: 8, frames: 1 }).await;
    assert!((r.total - 31.0 / 96.0).abs() < 1e-15);
    assert!((r.bound_a - 15.0 / 24.0).abs() < 1e-15);
    assert!((r.bound_b - 8.0 / 32.0).abs() < 1e-15);
    assert!((r.bound_tau - 1.0 / 12.0).abs() < 1e-15);
}

#[tokio::test]
async fn malformed_body_is_a_config_error() {
    let (status, value) = send(Method::POST, "/v1/icrb", Some("{\"a\": 4".into())).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(value["kind"], "config");
    let (status, value) = send(Method::POST, "/v1/icrb", Some(json!({"a": 0, "b": 3, "n": 8, "T": 1}).to_string())).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(value["kind"], "config");
}

#[tokio::test]
async fn glrt_matches_library() {
    let dims = ModelDims::new(2, 3, 16).unwrap();
    let patches = series(dims, 4, 5);
    let req = GlrtRequest {
        detector: DetectorKind::Ksg,
        a: 2,
        b: 3,
        patches: patches.iter().map(WirePatch::from_patch).collect(),
        config: DetectorConfig::default(),
    };
    let r: GlrtResponse = post("/v1/glrt", &req).await;
    let direct = glrt_offline(&patches, DetectorKind::Ksg, dims, &DetectorConfig::default()).unwrap();
    assert_eq!(r.log_glrt.to_bits(), direct.log_glrt.to_bits());
    assert!(r.running.is_none());

    let online: GlrtResponse = post(
        "/v1/glrt",
        &GlrtRequest {
            detector: DetectorKind::KsgOnline,
            ..req
        },
    )
    .await;
    assert_eq!(online.running.as_ref().unwrap().len(), 4);
    assert_eq!(online.running.unwrap()[3], online.log_glrt);
}

#[tokio::test]
async fn glrt_on_single_frame_offline_is_rejected() {
    let dims = ModelDims::new(2, 3, 16).unwrap();
    let req = GlrtRequest {
        detector: DetectorKind::Sg,
        a: 2,
        b: 3,
        patches: series(dims, 1, 1).iter().map(WirePatch::from_patch).collect(),
        config: DetectorConfig::default(),
    };
    let (status, value) = send(Method::POST, "/v1/glrt", Some(serde_json::to_string(&req).unwrap())).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(value["kind"], "config");
}

#[tokio::test]
async fn estimate_returns_unit_det_factors() {
    let dims = ModelDims::new(2, 2, 12).unwrap();
    let patches = series(dims, 3, 2);
    let r: EstimateResponse = post(
        "/v1/estimate",
        &EstimateRequest {
            a: 2,
            b: 2,
            patches: patches.iter().map(WirePatch::from_patch).collect(),
            fixed_point: Default::default(),
        },
    )
    .await;
    let f = &r.theta.a_factor;
    let det = f[0][0] * f[1][1] - f[0][1] * f[1][0];
    assert!((det.re - 1.0).abs() < 1e-9 && det.im.abs() < 1e-9);
    assert_eq!(r.theta.textures.len(), 12);
    assert!(r.residual < 1e-9);
}

#[tokio::test]
async fn detect_matches_library_map() {
    let spec = StackSpec {
        frames: 3,
        height: 7,
        width: 6,
        a: 2,
        b: 2,
        seed: 4,
        ..Default::default()
    };
    let stack = synthetic_stack(&spec).unwrap();
    let req = DetectRequest {
        stack: WireStack::from_stack(&stack),
        detector: DetectorKind::Ksg,
        a: 2,
        b: 2,
        window: 3,
        config: DetectorConfig::default(),
        threads: Some(2),
    };
    let r: DetectResponse = post("/v1/detect", &req).await;
    let map = r.map.to_map().unwrap();
    let direct = detection_map(&stack, 3, DetectorKind::Ksg, ModelDims::new(2, 2, 1).unwrap(), &DetectorConfig::default()).unwrap();
    assert_eq!((map.rows, map.cols), (5, 4));
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&map.values), bits(&direct.values));
}

#[tokio::test]
async fn detect_rejects_even_window_and_zero_threads() {
    let stack = synthetic_stack(&StackSpec {
        frames: 2,
        height: 5,
        width: 5,
        a: 2,
        b: 2,
        ..Default::default()
    })
    .unwrap();
    let mut req = DetectRequest {
        stack: WireStack::from_stack(&stack),
        detector: DetectorKind::Sg,
        a: 2,
        b: 2,
        window: 4,
        config: DetectorConfig::default(),
        threads: None,
    };
    let (status, value) = send(Method::POST, "/v1/detect", Some(serde_json::to_string(&req).unwrap())).await;
    assert_eq!((status, value["kind"].as_str()), (StatusCode::UNPROCESSABLE_ENTITY, Some("config")));
    req.window = 3;
    req.threads = Some(0);
    let (status, value) = send(Method::POST, "/v1/detect", Some(serde_json::to_string(&req).unwrap())).await;
    assert_eq!((status, value["kind"].as_str()), (StatusCode::UNPROCESSABLE_ENTITY, Some("config")));
}

#[tokio::test]
async fn corrupt_stack_payload_is_a_data_error() {
    let stack = synthetic_stack(&StackSpec {
        frames: 2,
        height: 5,
        width: 5,
        a: 2,
        b: 2,
        ..Default::default()
    })
    .unwrap();
    let mut wire = WireStack::from_stack(&stack);
    wire.header.height = 6;
    let req = DetectRequest {
        stack: wire,
        detector: DetectorKind::Sg,
        a: 2,
        b: 2,
        window: 3,
        config: DetectorConfig::default(),
        threads: None,
    };
    let (status, value) = send(Method::POST, "/v1/detect", Some(serde_json::to_string(&req).unwrap())).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(value["kind"], "data");
}

#[tokio::test]
async fn gen_stack_is_deterministic() {
    let req = GenStackRequest {
        spec: StackSpec {
            frames: 2,
            height: 4,
            width: 4,
            seed: 9,
            ..Default::default()
        },
    };
    let a: GenStackResponse = post("/v1/gen-stack", &req).await;
    let b: GenStackResponse = post("/v1/gen-stack", &req).await;
    assert_eq!(a, b);
    assert_eq!(a.stack.header.p, 12);
}

#[tokio::test]
async fn session_follows_the_streaming_recursion() {
    let app = router();
    let call = |method: Method, uri: String, body: Option<String>| {
        let app = app.clone();
        async move {
            let builder = Request::builder().method(method).uri(uri);
            let req = match body {
                Some(b) => builder.header("content-type", "application/json").body(Body::from(b)),
                None => builder.body(Body::empty()),
            }
            .unwrap();
            let resp = app.oneshot(req).await.unwrap();
            let status = resp.status();
            let bytes = resp.into_body().collect().await.unwrap().to_bytes();
            let value: Value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
            (status, value)
        }
    };

    let dims = ModelDims::new(2, 3, 16).unwrap();
    let patches = series(dims, 5, 8);
    let create = CreateSessionRequest {
        detector: DetectorKind::KsgOnline,
        a: 2,
        b: 3,
        n: 16,
        sgd: Default::default(),
        fixed_point: Default::default(),
    };
    let (status, value) = call(Method::POST, "/v1/sessions".into(), Some(serde_json::to_string(&create).unwrap())).await;
    assert_eq!(status, StatusCode::CREATED);
    let info: SessionInfo = serde_json::from_value(value).unwrap();
    assert_eq!(info.frames_seen, 0);

    let mut last = info.clone();
    for patch in &patches {
        let body = serde_json::to_string(&PushFrameRequest {
            patch: WirePatch::from_patch(patch),
        })
        .unwrap();
        let (status, value) = call(Method::POST, format!("/v1/sessions/{}/frames", info.id), Some(body)).await;
        assert_eq!(status, StatusCode::OK, "{value}");
        last = serde_json::from_value(value).unwrap();
    }
    let (_, scores) = run_stream(&patches, dims, &Default::default(), &Default::default()).unwrap();
    assert_eq!(last.frames_seen, 5);
    assert_eq!(last.log_glrt.to_bits(), scores[4].to_bits());

    let (status, value) = call(Method::GET, format!("/v1/sessions/{}", info.id), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(value["frames_seen"], 5);

    let wrong = series(ModelDims::new(2, 3, 9).unwrap(), 1, 1);
    let body = serde_json::to_string(&PushFrameRequest {
        patch: WirePatch::from_patch(&wrong[0]),
    })
    .unwrap();
    let (status, value) = call(Method::POST, format!("/v1/sessions/{}/frames", info.id), Some(body)).await;
    assert_eq!((status, value["kind"].as_str()), (StatusCode::UNPROCESSABLE_ENTITY, Some("config")));

    let (status, _) = call(Method::DELETE, format!("/v1/sessions/{}", info.id), None).await;
    assert_eq!(status, StatusCode::NO_CONTENT);
    let (status, value) = call(Method::GET, format!("/v1/sessions/{}", info.id), None).await;
    assert_eq!((status, value["kind"].as_str()), (StatusCode::NOT_FOUND, Some("not_found")));
}

#[tokio::test]
async fn offline_detector_cannot_open_a_session() {
    let create = CreateSessionRequest {
        detector: DetectorKind::Ksg,
        a: 2,
        b: 3,
        n: 16,
        sgd: Default::default(),
        fixed_point: Default::default(),
    };
    let (status, value) = send(Method::POST, "/v1/sessions", Some(serde_json::to_string(&create).unwrap())).await;
    assert_eq!((status, value["kind"].as_str()), (StatusCode::UNPROCESSABLE_ENTITY, Some("config")));
}
