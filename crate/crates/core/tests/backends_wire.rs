mod support;

use std::net::SocketAddr;

use entail_guard::backends::{
    lm_complete, nli_classify, BackendError, HttpLm, HttpNli, LmBackend, MockServer, NliTable,
    RetryPolicy, SamplingParams, ScriptedLm, ServeError, ServerFixture,
};
use support::*;

fn local() -> SocketAddr {
    "127.0.0.1:0".parse().unwrap()
}

fn server() -> MockServer {
    MockServer::start(ServerFixture::from_path(fixture("server.json")).unwrap(), local()).unwrap()
}

#[test]
fn completions_match_the_in_process_script() {
    let server = server();
    let http = HttpLm::new(&server.base_url());
    let local = ScriptedLm::from_path(fixture("lm.json")).unwrap();
    for seed in 0..10 {
        let params = SamplingParams {
            seed: Some(seed),
            ..Default::default()
        };
        let prompt = format!("Prompt {seed}. More text.");
        let a = lm_complete(&http, &prompt, &params).unwrap();
        let b = lm_complete(&local, &prompt, &params).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn nli_matches_the_in_process_table() {
    let server = server();
    let http = HttpNli::new(&server.base_url());
    let table = NliTable::from_path(fixture("nli.json")).unwrap();
    let pairs = [
        ("The sky is clear.", "The sky is clear."),
        ("A.", "It never rains."),
        ("Rain is coming.", "The crowd cheered again."),
        ("Anything.", "Something else."),
    ];
    for (p, h) in pairs {
        assert_eq!(nli_classify(&http, p, h).unwrap(), nli_classify(&table, p, h).unwrap());
    }
}

#[test]
fn missing_pair_is_not_found() {
    let fixture = ServerFixture {
        lm: None,
        nli: Some(NliTable::new().with_pair("A.", "B.", d(0.1, 0.2, 0.7))),
    };
    let server = MockServer::start(fixture, local()).unwrap();
    let http = HttpNli::new(&server.base_url());
    assert_eq!(nli_classify(&http, "A.", "B.").unwrap(), d(0.1, 0.2, 0.7));
    assert!(matches!(nli_classify(&http, "A.", "C."), Err(BackendError::NotFound(_))));
}

#[test]
fn raw_endpoints_follow_the_wire_format() {
    let server = server();
    let client = reqwest::blocking::Client::new();
    let body: serde_json::Value = client
        .post(format!("{}/v1/completions", server.base_url()))
        .json(&serde_json::json!({"prompt": "Hello there.", "max_tokens": 16, "top_p": 0.4, "temperature": 1.0, "seed": 3}))
        .send()
        .unwrap()
        .json()
        .unwrap();
    assert!(body["choices"][0]["text"].is_string());
    assert_eq!(body["usage"]["prompt_tokens"], 3);

    let bad = client
        .post(format!("{}/nli", server.base_url()))
        .body("not json")
        .send()
        .unwrap();
    assert_eq!(bad.status(), 400);
    let health = client.get(format!("{}/healthz", server.base_url())).send().unwrap();
    assert_eq!(health.text().unwrap(), "ok");
}

#[test]
fn occupied_port_is_reported() {
    let first = server();
    let second = MockServer::start(ServerFixture::default(), first.addr());
    assert!(matches!(second, Err(ServeError::PortInUse(_))));
}

#[test]
fn transport_errors_exhaust_retries() {
    let addr = {
        let l = std::net::TcpListener::bind(local()).unwrap();
        l.local_addr().unwrap()
    };
    let http = HttpLm::new(&format!("http://{addr}")).with_retry(RetryPolicy {
        max_attempts: 3,
        base_delay: std::time::Duration::from_millis(1),
    });
    let err = http
        .complete(&entail_guard::backends::CompletionRequest {
            prompt: "x".into(),
            max_tokens: 4,
            top_p: 0.9,
            temperature: 1.0,
            seed: None,
        })
        .unwrap_err();
    assert!(matches!(err, BackendError::Transport { attempts: 3, .. }));
}
