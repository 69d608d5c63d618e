use std::sync::Arc;

use forge_core::targets::{Target, TargetKind};
use forge_core::Mask;
use forge_enhance::mock::{MockMode, MockServer};
use forge_enhance::{validate_enhancement, DiskCache, EndpointConfig, EnhanceError, Enhancer, ItemFlag, PromptPayload};
use image::RgbImage;

fn payloads(n: usize) -> Vec<PromptPayload> {
    let tile = RgbImage::from_fn(96, 96, |x, y| image::Rgb([x as u8, y as u8, 90]));
    (0..n)
        .map(|i| {
            let mask = Mask::rect(96, 96, 5 + i as u32 * 10, 20, 8, 8);
            let t = Target {
                id: format!("img-t{i:03}"),
                kind: TargetKind::Instance,
                category: "plane".into(),
                bbox: mask.bbox().unwrap(),
                mask,
                members: vec![],
            };
            let inputs = vec![format!("the plane number {i}"), format!("the light plane number {i}")];
            PromptPayload::build(&tile, "img", &t, inputs).unwrap()
        })
        .collect()
}

fn enhancer(url: String, cache: &std::path::Path) -> Arc<Enhancer> {
    let config = EndpointConfig {
        url,
        model: "mock-model".into(),
        base_delay_ms: 5,
        requests_per_second: 1000.0,
        ..Default::default()
    };
    Arc::new(Enhancer::new(config, DiskCache::open(cache).unwrap()).unwrap())
}

#[tokio::test]
async fn valid_replies_parse_and_are_cached() {
    let server = MockServer::start(MockMode::Valid).await.unwrap();
    let dir = tempfile::tempdir().unwrap();
    let batch = payloads(6);

    let first = enhancer(server.url(), dir.path()).enhance_all(batch.clone()).await;
    assert_eq!(server.requests(), 6);
    for (p, r) in &first {
        let fetched = r.as_ref().unwrap();
        assert!(!fetched.from_cache);
        let v = validate_enhancement(&fetched.result, &p.task1_inputs, &[]);
        assert!(v.schema_valid);
        assert_eq!(v.language.iter().flatten().count(), p.task1_inputs.len());
        assert_eq!(v.visual.len(), 2);
    }

    let client = enhancer(server.url(), dir.path());
    let second = client.enhance_all(batch).await;
    assert_eq!(server.requests(), 6);
    assert_eq!(client.requests_issued(), 0);
    for ((_, a), (_, b)) in first.iter().zip(&second) {
        let b = b.as_ref().unwrap();
        assert!(b.from_cache);
        assert_eq!(a.as_ref().unwrap().result, b.result);
    }
}

#[tokio::test]
async fn forbidden_and_oversized_replies_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let server = MockServer::start(MockMode::Forbidden).await.unwrap();
    let p = &payloads(1)[0];
    let r = enhancer(server.url(), &dir.path().join("a")).enhance(p).await.unwrap();
    let v = validate_enhancement(&r.result, &p.task1_inputs, &[]);
    assert!(v.language.iter().all(Option::is_none));
    assert!(v.visual.is_empty());
    assert!(v.language_flags.iter().chain(&v.visual_flags).all(|f| *f == ItemFlag::Forbidden));

    let server = MockServer::start(MockMode::TooManyVisual).await.unwrap();
    let r = enhancer(server.url(), &dir.path().join("b")).enhance(p).await.unwrap();
    let v = validate_enhancement(&r.result, &p.task1_inputs, &[]);
    assert!(!v.schema_valid);
}

#[tokio::test]
async fn transient_failures_are_retried() {
    let dir = tempfile::tempdir().unwrap();
    let server = MockServer::start(MockMode::FailThenSucceed(3)).await.unwrap();
    let client = enhancer(server.url(), dir.path());
    let r = client.enhance(&payloads(1)[0]).await.unwrap();
    assert!(!r.from_cache);
    assert_eq!(server.requests(), 4);

    let server = MockServer::start(MockMode::AlwaysFail(503)).await.unwrap();
    let client = enhancer(server.url(), &dir.path().join("x"));
    let err = client.enhance(&payloads(1)[0]).await.unwrap_err();
    assert!(matches!(err, EnhanceError::Exhausted { attempts: 5, .. }), "{err}");
    assert_eq!(server.requests(), 5);
}

#[tokio::test]
async fn permanent_failures_are_not_retried() {
    let dir = tempfile::tempdir().unwrap();
    let server = MockServer::start(MockMode::AlwaysFail(400)).await.unwrap();
    let client = enhancer(server.url(), dir.path());
    let err = client.enhance(&payloads(1)[0]).await.unwrap_err();
    assert!(matches!(err, EnhanceError::Http { status: 400, .. }));
    assert_eq!(server.requests(), 1);
    assert!(std::fs::read_dir(dir.path()).unwrap().next().is_none());
}
