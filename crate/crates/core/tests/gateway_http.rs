use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use chrono::Utc;
use rust_decimal::Decimal;
use sentinel_core::gateway::{ApiFlavor, AttemptCache, BackendProfile, Gateway, HttpTransport, RateCard};
use sentinel_core::prompt::{PromptInstance, PromptKind};
use sentinel_mock::{MockServer, Reply};
use serde_json::json;

fn profile(url: &str) -> BackendProfile {
    BackendProfile {
        name: "mock".into(),
        endpoint_url: url.into(),
        api_flavor: ApiFlavor::ChatCompletions,
        model_id: "mock-model".into(),
        default_temperature: 0.8,
        auth_token_env: None,
        rate_card: RateCard {
            input_cost_per_1k_tokens: Decimal::new(10, 2),
            output_cost_per_1k_tokens: Decimal::new(20, 2),
        },
        max_retries: 2,
        timeout_secs: 5.0,
        backoff_base_ms: 1,
        max_in_flight: 2,
    }
}

fn prompt(text: &str) -> PromptInstance {
    PromptInstance {
        case_id: "super_call".into(),
        kind: PromptKind::Type1Check,
        text: text.into(),
        rendered_at: Utc::now(),
    }
}

fn gateway(cache: AttemptCache) -> Gateway {
    Gateway::new(Arc::new(HttpTransport::new().unwrap()), cache)
}

#[test]
fn chat_completions_round_trip_and_cache() {
    let server = MockServer::start(|_| Reply::Text {
        text: "NO\nBehavior changes because super.k() now binds to B.k().".into(),
        prompt_tokens: 321,
        completion_tokens: 12,
    });
    let dir = tempfile::tempdir().unwrap();
    let gw = gateway(AttemptCache::dir(dir.path()).unwrap());
    let p = profile(&server.url());
    let rec = gw.complete(&p, &prompt("Is it equivalent?"), 0.5, 1).unwrap();
    assert_eq!(rec.raw_response, "NO\nBehavior changes because super.k() now binds to B.k().");
    assert!(!rec.from_cache);
    assert_eq!((rec.prompt_tokens, rec.completion_tokens), (321, 12));

    let reqs = server.requests();
    assert_eq!(reqs.len(), 1);
    assert_eq!(reqs[0].path, "/chat/completions");
    assert_eq!(
        reqs[0].body,
        json!({
            "model": "mock-model",
            "messages": [{"role": "user", "content": "Is it equivalent?"}],
            "temperature": 0.5,
            "stream": false,
        })
    );
    assert!(reqs[0].header("authorization").is_none());

    let again = gw.complete(&p, &prompt("Is it equivalent?"), 0.5, 1).unwrap();
    assert!(again.from_cache);
    assert_eq!(again.raw_response, rec.raw_response);
    assert_eq!(server.request_count(), 1);

    // A fresh gateway over the same directory still hits the cache.
    let reopened = gateway(AttemptCache::dir(dir.path()).unwrap());
    assert!(reopened.complete(&p, &prompt("Is it equivalent?"), 0.5, 1).unwrap().from_cache);
    // Another attempt index is a distinct request.
    assert!(!gw.complete(&p, &prompt("Is it equivalent?"), 0.5, 2).unwrap().from_cache);
    assert_eq!(server.request_count(), 2);
}

#[test]
fn local_daemon_flavor() {
    let server = MockServer::start(|_| Reply::Text {
        text: "YES".into(),
        prompt_tokens: 7,
        completion_tokens: 1,
    });
    let mut p = profile(&server.url());
    p.api_flavor = ApiFlavor::LocalDaemon;
    let rec = gateway(AttemptCache::memory()).complete(&p, &prompt("q"), 0.0, 1).unwrap();
    assert_eq!((rec.raw_response.as_str(), rec.prompt_tokens, rec.completion_tokens), ("YES", 7, 1));
    let req = &server.requests()[0];
    assert_eq!(req.path, "/api/chat");
    assert_eq!(
        req.body,
        json!({
            "model": "mock-model",
            "messages": [{"role": "user", "content": "q"}],
            "stream": false,
            "options": {"temperature": 0.0},
        })
    );
}

#[test]
fn bearer_token_from_environment() {
    let server = MockServer::start(|_| Reply::text("NO"));
    let mut p = profile(&server.url());
    p.auth_token_env = Some("SENTINEL_GATEWAY_TEST_TOKEN".into());
    std::env::set_var("SENTINEL_GATEWAY_TEST_TOKEN", "s3cret");
    gateway(AttemptCache::memory()).complete(&p, &prompt("q"), 0.8, 1).unwrap();
    assert_eq!(server.requests()[0].header("authorization"), Some("Bearer s3cret"));

    p.auth_token_env = Some("SENTINEL_GATEWAY_TEST_TOKEN_UNSET".into());
    let err = gateway(AttemptCache::memory()).complete(&p, &prompt("q"), 0.8, 1).unwrap_err();
    assert_eq!(err.code(), "AUTH_FAILED");
}

#[test]
fn unreachable_after_retries() {
    let port = {
        let l = TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap().port()
    };
    let p = profile(&format!("http://127.0.0.1:{port}"));
    let err = gateway(AttemptCache::memory()).complete(&p, &prompt("q"), 0.8, 1).unwrap_err();
    assert_eq!(err.code(), "BACKEND_UNREACHABLE");
    assert!(err.to_string().contains("after 3 attempt(s)"), "{err}");
}

#[test]
fn transient_status_is_retried() {
    let n = Arc::new(AtomicUsize::new(0));
    let seen = n.clone();
    let server = MockServer::start(move |_| match seen.fetch_add(1, Ordering::SeqCst) {
        0 => Reply::Status(503, "busy".into()),
        1 => Reply::Hangup,
        _ => Reply::text("YES"),
    });
    let rec = gateway(AttemptCache::memory()).complete(&profile(&server.url()), &prompt("q"), 0.8, 1).unwrap();
    assert_eq!(rec.raw_response, "YES");
    assert_eq!(server.request_count(), 3);
}

#[test]
fn auth_and_malformed_replies_are_not_retried() {
    let server = MockServer::start(|_| Reply::Status(401, "{\"error\":\"bad key\"}".into()));
    let err = gateway(AttemptCache::memory()).complete(&profile(&server.url()), &prompt("q"), 0.8, 1).unwrap_err();
    assert_eq!(err.code(), "AUTH_FAILED");
    assert_eq!(server.request_count(), 1);

    for body in ["not json", "{\"choices\":[]}", "{\"choices\":[{\"message\":{\"content\":\"YES\"}}]}"] {
        let server = MockServer::start(move |_| Reply::Raw(body.into()));
        let err = gateway(AttemptCache::memory()).complete(&profile(&server.url()), &prompt("q"), 0.8, 1).unwrap_err();
        assert_eq!(err.code(), "MALFORMED_BACKEND_REPLY", "{body}");
        assert_eq!(server.request_count(), 1);
    }
}

#[test]
fn slow_backend_times_out() {
    let server = MockServer::start(|_| Reply::Delayed(Duration::from_secs(3), Box::new(Reply::text("YES"))));
    let mut p = profile(&server.url());
    p.timeout_secs = 0.2;
    p.max_retries = 1;
    let err = gateway(AttemptCache::memory()).complete(&p, &prompt("q"), 0.8, 1).unwrap_err();
    assert_eq!(err.code(), "TIMEOUT");
    assert_eq!(server.request_count(), 2);
}

#[test]
fn concurrent_identical_requests_make_one_call() {
    let server = MockServer::start(|_| Reply::Delayed(Duration::from_millis(50), Box::new(Reply::text("NO"))));
    let gw = gateway(AttemptCache::memory());
    let p = profile(&server.url());
    std::thread::scope(|s| {
        for _ in 0..8 {
            s.spawn(|| gw.complete(&p, &prompt("same"), 0.8, 1).unwrap());
        }
    });
    assert_eq!(server.request_count(), 1);
}

#[test]
fn in_flight_limit_per_backend() {
    let now = Arc::new(AtomicUsize::new(0));
    let peak = Arc::new(AtomicUsize::new(0));
    let (n, pk) = (now.clone(), peak.clone());
    let server = MockServer::start(move |_| {
        let cur = n.fetch_add(1, Ordering::SeqCst) + 1;
        pk.fetch_max(cur, Ordering::SeqCst);
        std::thread::sleep(Duration::from_millis(60));
        n.fetch_sub(1, Ordering::SeqCst);
        Reply::text("NO")
    });
    let gw = gateway(AttemptCache::memory());
    let p = profile(&server.url());
    std::thread::scope(|s| {
        for i in 0..6 {
            let (gw, p) = (&gw, &p);
            s.spawn(move || gw.complete(p, &prompt(&format!("q{i}")), 0.8, 1).unwrap());
        }
    });
    assert_eq!(server.request_count(), 6);
    assert!(peak.load(Ordering::SeqCst) <= 2, "peak {}", peak.load(Ordering::SeqCst));
}
