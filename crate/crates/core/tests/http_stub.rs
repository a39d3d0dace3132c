use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::mpsc;
use std::thread;

use agent_harness::policy::{BackendError, ChatMessage, GenParams, HttpConfig, HttpPolicy, Policy};
use serde_json::Value;

/// What the stub does with one incoming connection.
enum Reply {
    /// Close the socket without answering.
    Drop,
    Respond(u16, &'static str),
}

/// Serves `replies` in order on a local port and forwards each request
/// (headers lowercased, body as JSON) over the returned channel.
fn stub(replies: Vec<Reply>) -> (String, mpsc::Receiver<(Vec<String>, Value)>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        for reply in replies {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream);
            let mut headers = Vec::new();
            let mut len = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let line = line.trim_end().to_ascii_lowercase();
                if line.is_empty() {
                    break;
                }
                if let Some(v) = line.strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                headers.push(line);
            }
            let mut body = vec![0; len];
            reader.read_exact(&mut body).unwrap();
            tx.send((headers, serde_json::from_slice(&body).unwrap())).unwrap();
            let mut stream = reader.into_inner();
            if let Reply::Respond(status, text) = reply {
                let head = format!(
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
                    text.len()
                );
                stream.write_all(head.as_bytes()).unwrap();
                stream.write_all(text.as_bytes()).unwrap();
            }
        }
    });
    (url, rx)
}

fn policy(url: &str, key: Option<&str>) -> HttpPolicy {
    let cfg = HttpConfig {
        timeout_secs: 5.0,
        retry_backoff_ms: 10,
        ..HttpConfig::new(url, "tiny-model")
    };
    HttpPolicy::with_api_key(cfg, key.map(str::to_string))
}

fn messages() -> Vec<ChatMessage> {
    vec![ChatMessage::system("be brief"), ChatMessage::user("hello")]
}

#[test]
fn request_carries_model_messages_and_params() {
    let (url, rx) = stub(vec![Reply::Respond(
        200,
        r#"{"choices":[{"message":{"role":"assistant","content":"Thought: x\nAction: look"}}],"usage":{"completion_tokens":7}}"#,
    )]);
    let params = GenParams {
        max_tokens: 64,
        temperature: 0.0,
        stop: vec!["\n\n".into()],
        seed: Some(9),
    };
    let c = policy(&url, Some("sk-test")).complete(&messages(), &params).unwrap();
    assert_eq!(c.text, "Thought: x\nAction: look");
    assert_eq!(c.generated_tokens, 7);
    assert!(c.wall_seconds > 0.0);

    let (headers, body) = rx.recv().unwrap();
    assert!(headers[0].starts_with("post /v1/chat/completions "));
    assert!(headers.iter().any(|h| h == "authorization: bearer sk-test"));
    assert_eq!(body["model"], "tiny-model");
    assert_eq!(body["max_tokens"], 64);
    assert_eq!(body["temperature"], 0.0);
    assert_eq!(body["stop"], serde_json::json!(["\n\n"]));
    assert_eq!(body["seed"], 9);
    assert_eq!(body["messages"][0], serde_json::json!({"role": "system", "content": "be brief"}));
    assert_eq!(body["messages"][1], serde_json::json!({"role": "user", "content": "hello"}));
}

#[test]
fn optional_fields_are_left_out() {
    let (url, rx) = stub(vec![Reply::Respond(200, r#"{"choices":[{"message":{"content":"one two three"}}]}"#)]);
    let c = policy(&url, None).complete(&messages(), &GenParams::default()).unwrap();
    // no usage block: whitespace tokens
    assert_eq!(c.generated_tokens, 3);
    let (headers, body) = rx.recv().unwrap();
    assert!(!headers.iter().any(|h| h.starts_with("authorization:")));
    assert!(body.get("stop").is_none());
    assert!(body.get("seed").is_none());
}

#[test]
fn error_status_is_reported_without_retry() {
    let (url, rx) = stub(vec![Reply::Respond(503, r#"{"error":"busy"}"#)]);
    let err = policy(&url, None).complete(&messages(), &GenParams::default()).unwrap_err();
    match err {
        BackendError::Status { status, body } => {
            assert_eq!(status, 503);
            assert!(body.contains("busy"));
        }
        other => panic!("unexpected error {other:?}"),
    }
    rx.recv().unwrap();
    assert!(rx.recv_timeout(std::time::Duration::from_millis(200)).is_err());
}

#[test]
fn transport_error_is_retried_once() {
    let (url, rx) = stub(vec![
        Reply::Drop,
        Reply::Respond(200, r#"{"choices":[{"message":{"content":"ok"}}],"usage":{"completion_tokens":1}}"#),
    ]);
    let c = policy(&url, None).complete(&messages(), &GenParams::default()).unwrap();
    assert_eq!(c.text, "ok");
    assert_eq!(rx.iter().take(2).count(), 2);
}

#[test]
fn second_transport_error_is_returned() {
    let (url, _rx) = stub(vec![Reply::Drop, Reply::Drop]);
    let err = policy(&url, None).complete(&messages(), &GenParams::default()).unwrap_err();
    assert!(matches!(err, BackendError::Transport(_)), "{err:?}");
}

#[test]
fn malformed_body_is_an_error() {
    let (url, _rx) = stub(vec![Reply::Respond(200, "<html>")]);
    let err = policy(&url, None).complete(&messages(), &GenParams::default()).unwrap_err();
    assert!(matches!(err, BackendError::Malformed(_)), "{err:?}");
}
