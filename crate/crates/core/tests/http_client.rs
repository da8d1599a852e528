use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::time::Duration;
use valuenav_core::dcon::PlannerBackend;
use valuenav_core::llmclient::{
    ApiKey, CallBudget, ChatClient, ChatMessage, EndpointConfig, RecordingSleeper, RemoteBackend,
    Transcript,
};
use valuenav_core::BackendError;

const SECRET: &str = "sk-test-0123456789abcdef";

/// Serves the canned `(status, body)` replies to successive connections and
/// keeps each raw request.
fn stub_server(replies: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<String>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let base = format!("http://{}/v1", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = seen.clone();
    std::thread::spawn(move || {
        for (status, body) in replies {
            let Ok((stream, _)) = listener.accept() else {
                return;
            };
            let mut reader = BufReader::new(stream);
            let mut head = String::new();
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap_or(0);
                }
                head.push_str(&line);
            }
            let mut payload = vec![0; len];
            reader.read_exact(&mut payload).unwrap();
            log.lock()
                .unwrap()
                .push(format!("{head}\r\n{}", String::from_utf8_lossy(&payload)));
            let reason = if status == 200 { "OK" } else { "Error" };
            let resp = format!(
                "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
            let mut stream = reader.into_inner();
            let _ = stream.write_all(resp.as_bytes());
        }
    });
    (base, seen)
}

fn completion(text: &str) -> String {
    serde_json::json!({
        "choices": [{"message": {"role": "assistant", "content": text}}],
        "usage": {"prompt_tokens": 12, "completion_tokens": 3}
    })
    .to_string()
}

fn config(base: &str) -> EndpointConfig {
    let mut cfg = EndpointConfig::new(base, "test-model");
    cfg.api_key = Some(ApiKey::new(SECRET));
    cfg.timeout = Duration::from_secs(5);
    cfg.backoff_base = Duration::from_millis(100);
    cfg.seed = Some(7);
    cfg
}

#[test]
fn retries_rate_limits_with_backoff() {
    let (base, seen) = stub_server(vec![
        (429, "{}".into()),
        (429, "{}".into()),
        (200, completion("Decision: Stop")),
    ]);
    let sleeper = Arc::new(RecordingSleeper::default());
    let client = ChatClient::with_sleeper(config(&base), sleeper.clone()).unwrap();
    let c = client.chat_complete(&[ChatMessage::user("hello")]).unwrap();
    assert_eq!(c.text, "Decision: Stop");
    let usage = c.usage.unwrap();
    assert_eq!(
        (usage.prompt_tokens, usage.completion_tokens),
        (Some(12), Some(3))
    );
    assert_eq!(
        sleeper.sleeps(),
        vec![Duration::from_millis(100), Duration::from_millis(200)]
    );

    let reqs = seen.lock().unwrap();
    assert_eq!(reqs.len(), 3);
    assert!(
        reqs[0].starts_with("POST /v1/chat/completions "),
        "{}",
        reqs[0]
    );
    assert!(reqs[0].contains(&format!("Bearer {SECRET}")));
    let body: serde_json::Value =
        serde_json::from_str(reqs[0].split("\r\n\r\n").nth(1).unwrap()).unwrap();
    assert_eq!(body["model"], "test-model");
    assert_eq!(body["seed"], 7);
    assert_eq!(body["messages"][0]["content"], "hello");
    assert!(body.get("temperature").is_none());
}

#[test]
fn gives_up_after_max_retries() {
    let (base, seen) = stub_server(vec![(503, "{}".into()); 3]);
    let sleeper = Arc::new(RecordingSleeper::default());
    let client = ChatClient::with_sleeper(config(&base), sleeper.clone()).unwrap();
    let err = client
        .chat_complete(&[ChatMessage::user("hi")])
        .unwrap_err();
    assert_eq!(err, BackendError::Transport("HTTP 503".into()));
    assert_eq!(sleeper.sleeps().len(), 2);
    assert_eq!(seen.lock().unwrap().len(), 3);
}

#[test]
fn malformed_bodies_are_protocol_errors() {
    let (base, _) = stub_server(vec![
        (200, "not json".into()),
        (200, r#"{"choices": []}"#.into()),
        (400, r#"{"error": "bad model"}"#.into()),
    ]);
    let sleeper = Arc::new(RecordingSleeper::default());
    let client = ChatClient::with_sleeper(config(&base), sleeper.clone()).unwrap();
    for _ in 0..3 {
        let err = client
            .chat_complete(&[ChatMessage::user("hi")])
            .unwrap_err();
        assert!(matches!(err, BackendError::Protocol(_)), "{err:?}");
        assert!(!err.to_string().contains(SECRET));
    }
    assert!(
        sleeper.sleeps().is_empty(),
        "protocol errors are not retried"
    );
}

#[test]
fn transport_failure_is_reported() {
    // Bind then drop so the port refuses connections.
    let port = TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port();
    let mut cfg = config(&format!("http://127.0.0.1:{port}"));
    cfg.max_retries = 1;
    let client = ChatClient::with_sleeper(cfg, Arc::new(RecordingSleeper::default())).unwrap();
    assert!(matches!(
        client.chat_complete(&[ChatMessage::user("hi")]),
        Err(BackendError::Transport(_))
    ));
}

#[test]
fn api_key_never_leaks() {
    let key = ApiKey::new(SECRET);
    assert_eq!(format!("{key:?}"), "ApiKey(<redacted>)");
    let cfg = config("http://localhost:1");
    assert!(!format!("{cfg:?}").contains(SECRET));
    let client = ChatClient::new(cfg).unwrap();
    assert!(!format!("{client:?}").contains(SECRET));

    let (base, seen) = stub_server(vec![(200, completion("{'Action': 'Explore'}"))]);
    let client = Arc::new(
        ChatClient::with_sleeper(config(&base), Arc::new(RecordingSleeper::default())).unwrap(),
    );
    let transcript = Transcript::shared();
    let backend = RemoteBackend::planner(
        client,
        Arc::new(CallBudget::new(5)),
        Some(transcript.clone()),
    );
    assert_eq!(
        backend.plan_step("find the sofa").unwrap(),
        "{'Action': 'Explore'}"
    );
    assert!(
        seen.lock().unwrap()[0].contains(SECRET),
        "the key is sent to the server"
    );
    let mut out = Vec::new();
    transcript.lock().unwrap().write_to(&mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert!(text.contains("find the sofa"));
    assert!(!text.contains(SECRET));
}

#[test]
fn call_budget_caps_remote_calls() {
    let (base, seen) = stub_server(vec![(200, completion("ok")); 2]);
    let client = Arc::new(
        ChatClient::with_sleeper(config(&base), Arc::new(RecordingSleeper::default())).unwrap(),
    );
    let budget = Arc::new(CallBudget::new(2));
    let backend = RemoteBackend::planner(client, budget.clone(), None);
    assert!(backend.plan_step("a").is_ok());
    assert!(backend.plan_step("b").is_ok());
    assert_eq!(
        backend.plan_step("c"),
        Err(BackendError::CallBudgetExhausted(2))
    );
    assert_eq!(budget.used(), 2);
    assert_eq!(seen.lock().unwrap().len(), 2);
}

#[test]
fn config_validation() {
    assert!(EndpointConfig::new("", "m").validate().is_err());
    assert!(EndpointConfig::new("http://x", " ").validate().is_err());
    assert!(ChatClient::new(EndpointConfig::new("", "m")).is_err());
}
