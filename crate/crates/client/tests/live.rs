use kroncd::detectors::{DetectorConfig, DetectorKind};
use kroncd::simlab::{MseBenchConfig, RocScenario, StackSpec};
use kroncd::wire::*;
use kroncd_client::{Client, ClientError};

async fn start() -> (Client, tokio::sync::oneshot::Sender<()>) {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let (stop, stopped) = tokio::sync::oneshot::channel::<()>();
    tokio::spawn(kroncd_service::serve(listener, async {
        let _ = stopped.await;
    }));
    (Client::new(format!("http://{addr}/")), stop)
}

#[tokio::test]
async fn health_and_base_url() {
    let (client, _stop) = start().await;
    assert!(!client.base_url().ends_with('/'));
    assert_eq!(client.health().await.unwrap().status, "ok");
}

#[tokio::test]
async fn service_errors_carry_their_kind() {
    let (client, _stop) = start().await;
    let err = client
        .icrb(&IcrbRequest {
            a: 4,
            b: 0,
            n: 8,
            frames: 1,
        })
        .await
        .unwrap_err();
    assert_eq!(err.kind(), Some(ErrorKind::Config));
    assert!(matches!(err, ClientError::Api { status: 422, .. }));

    let err = client.session("not-a-session").await.unwrap_err();
    assert_eq!(err.kind(), Some(ErrorKind::NotFound));
    let err = client.delete_session("00000000-0000-0000-0000-000000000000").await.unwrap_err();
    assert_eq!(err.kind(), Some(ErrorKind::NotFound));
}

#[tokio::test]
async fn unreachable_service_is_a_transport_error() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    let err = Client::new(format!("http://{addr}")).health().await.unwrap_err();
    assert!(matches!(err, ClientError::Transport(_)));
    assert_eq!(err.kind(), None);
}

#[tokio::test]
async fn stack_survives_the_wire() {
    let (client, _stop) = start().await;
    let spec = StackSpec {
        frames: 2,
        height: 6,
        width: 5,
        a: 2,
        b: 3,
        seed: 21,
        ..Default::default()
    };
    let stack = client
        .gen_stack(&GenStackRequest { spec: spec.clone() })
        .await
        .unwrap()
        .stack
        .to_stack()
        .unwrap();
    assert_eq!(stack, kroncd::simlab::synthetic_stack(&spec).unwrap());

    let map = client
        .detect(&DetectRequest {
            stack: WireStack::from_stack(&stack),
            detector: DetectorKind::Ksg,
            a: 2,
            b: 3,
            window: 3,
            config: DetectorConfig::default(),
            threads: None,
        })
        .await
        .unwrap()
        .map;
    assert_eq!((map.rows, map.cols, map.nan_count), (4, 3, 0));
}

#[tokio::test]
async fn benchmarks_match_the_library() {
    let (client, _stop) = start().await;
    let config = MseBenchConfig {
        trials: 4,
        t_grid: vec![10, 20],
        seed: 2,
        ..Default::default()
    };
    let remote = client
        .mse_bench(&MseBenchRequest {
            config: config.clone(),
            threads: Some(1),
        })
        .await
        .unwrap();
    assert_eq!(remote, kroncd::simlab::mse_benchmark(&config).unwrap());

    let scenario = RocScenario {
        trials: 3,
        frames: 8,
        detectors: vec![DetectorKind::Ksg, DetectorKind::KsgOnline],
        ..Default::default()
    };
    let remote = client
        .roc_bench(&RocBenchRequest {
            scenario: scenario.clone(),
            threads: Some(2),
        })
        .await
        .unwrap();
    assert_eq!(remote, kroncd::simlab::roc_benchmark(&scenario).unwrap());
}

#[tokio::test]
async fn streaming_session_round_trip() {
    let (client, _stop) = start().await;
    let info = client
        .create_session(&CreateSessionRequest {
            detector: DetectorKind::SgOnline,
            a: 2,
            b: 2,
            n: 10,
            sgd: Default::default(),
            fixed_point: Default::default(),
        })
        .await
        .unwrap();
    assert_eq!((info.a, info.b), (4, 1));
    let stack = kroncd::simlab::synthetic_stack(&StackSpec {
        frames: 3,
        height: 2,
        width: 5,
        a: 2,
        b: 2,
        ..Default::default()
    })
    .unwrap();
    for t in 0..3 {
        let samples = (0..10).map(|k| stack.pixel(t, k / 5, k % 5).to_vec()).collect();
        let info = client
            .push_frame(&info.id, &PushFrameRequest { patch: WirePatch { samples } })
            .await
            .unwrap();
        assert_eq!(info.frames_seen, t + 1);
        assert!(info.theta.is_some());
    }
    client.delete_session(&info.id).await.unwrap();
}
