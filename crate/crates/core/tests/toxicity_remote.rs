mod common;

#[path = "common/mock.rs"]
mod mock;

use mock::MockServer;
use replytriage::toxicity::{
    is_toxic, score_toxicity, PerspectiveScorer, ToxicityConfig, ToxicityError, ToxicityScorer,
};

fn config() -> ToxicityConfig {
    ToxicityConfig {
        backoff_base_ms: 1,
        timeout_secs: 5.0,
        ..ToxicityConfig::default()
    }
}

fn ok_body(v: f64) -> String {
    format!(r#"{{"attributeScores":{{"TOXICITY":{{"summaryScore":{{"value":{v}}}}}}}}}"#)
}

#[test]
fn passes_the_mocked_score_through() {
    let server = MockServer::start(vec![(200, ok_body(0.74))], None);
    let scorer = PerspectiveScorer::new(&format!("{}/v1alpha1", server.base_url), Some("k3y".into()), &config());
    let s = score_toxicity("you are wrong", &scorer, &config(), common::fixed_clock().as_ref()).unwrap();
    assert_eq!(s.value, 0.74);
    assert_eq!(s.model_id, "perspective:TOXICITY");
    assert!(is_toxic(&s, &config()));
    let reqs = server.requests();
    assert_eq!(reqs.len(), 1);
    assert_eq!(reqs[0].path_and_query, "/v1alpha1/comments:analyze?key=k3y");
}

#[test]
fn payload_text_is_byte_exact() {
    let text = "  Leading spaces,\ttabs, “curly quotes”, émoji 🙂 and a very long tail ".repeat(40);
    let server = MockServer::start(vec![(200, ok_body(0.1))], None);
    let scorer = PerspectiveScorer::new(&server.base_url, None, &config());
    score_toxicity(&text, &scorer, &config(), common::fixed_clock().as_ref()).unwrap();
    let reqs = server.requests();
    assert_eq!(reqs[0].path_and_query, "/comments:analyze");
    let sent: serde_json::Value = serde_json::from_slice(&reqs[0].body).unwrap();
    assert_eq!(sent["comment"]["text"].as_str().unwrap().as_bytes(), text.as_bytes());
    assert_eq!(sent["requestedAttributes"], serde_json::json!({"TOXICITY": {}}));
}

#[test]
fn retries_rate_limits_then_succeeds() {
    let server = MockServer::start(
        vec![(429, "slow down".into()), (503, "busy".into()), (200, ok_body(0.3))],
        None,
    );
    let scorer = PerspectiveScorer::new(&server.base_url, None, &config());
    let s = score_toxicity("hello", &scorer, &config(), common::fixed_clock().as_ref()).unwrap();
    assert_eq!(s.value, 0.3);
    assert_eq!(server.requests().len(), 3);
}

#[test]
fn gives_up_after_max_retries() {
    let server = MockServer::start(vec![], Some((503, "down".into())));
    let scorer = PerspectiveScorer::new(&server.base_url, None, &config());
    let err = score_toxicity("hello", &scorer, &config(), common::fixed_clock().as_ref()).unwrap_err();
    assert!(matches!(err, ToxicityError::ScoringFailed { attempts: 4, .. }), "{err:?}");
    assert_eq!(server.requests().len(), 4);
}

#[test]
fn malformed_response_fails_without_retry() {
    let server = MockServer::start(vec![], Some((200, r#"{"attributeScores":{}}"#.into())));
    let scorer = PerspectiveScorer::new(&server.base_url, None, &config());
    let err = score_toxicity("hello", &scorer, &config(), common::fixed_clock().as_ref()).unwrap_err();
    assert!(matches!(err, ToxicityError::ScoringFailed { attempts: 1, .. }), "{err:?}");
    assert_eq!(server.requests().len(), 1);
}

#[test]
fn client_errors_are_not_retried() {
    let server = MockServer::start(vec![], Some((400, "bad".into())));
    let scorer = PerspectiveScorer::new(&server.base_url, None, &config());
    assert!(scorer.analyze("x").is_err());
    assert!(score_toxicity("x", &scorer, &config(), common::fixed_clock().as_ref()).is_err());
    assert_eq!(server.requests().len(), 2);
}

#[test]
fn unreachable_server_is_a_scoring_failure() {
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let scorer = PerspectiveScorer::new(&format!("http://127.0.0.1:{port}"), None, &config());
    let err = score_toxicity("x", &scorer, &config(), common::fixed_clock().as_ref()).unwrap_err();
    assert!(matches!(err, ToxicityError::ScoringFailed { attempts: 4, .. }), "{err:?}");
}
