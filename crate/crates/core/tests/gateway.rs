use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use probsmith_core::gateway::{
    CompletionRequest, Gateway, GatewayError, HttpProvider, RecordingProvider, RetryPolicy, ScriptedProvider,
    TranscriptEntry, ENV_ENDPOINT,
};

/// Minimal HTTP/1.1 server answering each connection with the next canned
/// (status, body) pair and recording request bodies.
fn mock_server(replies: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<String>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = seen.clone();
    thread::spawn(move || {
        for (status, body) in replies {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" || line.is_empty() {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
            }
            let mut buf = vec![0; len];
            reader.read_exact(&mut buf).unwrap();
            log.lock().unwrap().push(String::from_utf8(buf).unwrap());
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
        }
    });
    (format!("http://{addr}/v1"), seen)
}

fn chat_body(text: &str) -> String {
    serde_json::json!({
        "choices": [{"message": {"role": "assistant", "content": text}}],
        "usage": {"prompt_tokens": 11, "completion_tokens": 7}
    })
    .to_string()
}

#[test]
fn http_provider_speaks_chat_completions() {
    let (url, seen) = mock_server(vec![(200, chat_body("hello"))]);
    let provider = HttpProvider::new(&url, Some("k".into()), "base-model", Duration::from_secs(5)).unwrap();
    let gw = Gateway::new(provider);
    let out = gw.complete(&CompletionRequest::new("say hello").with_tag("model-x")).unwrap();
    assert_eq!(out, "hello");
    let body: serde_json::Value = serde_json::from_str(&seen.lock().unwrap()[0]).unwrap();
    assert_eq!(body["model"], "model-x");
    assert_eq!(body["messages"][0]["content"], "say hello");
    assert_eq!(body["temperature"], 0.2);
    let log = gw.call_log();
    assert_eq!((log[0].prompt_tokens, log[0].completion_tokens), (11, 7));
}

#[test]
fn server_errors_are_retried_with_backoff() {
    let (url, seen) = mock_server(vec![(503, "{}".into()), (500, "{}".into()), (200, chat_body("third time"))]);
    let provider = HttpProvider::new(&url, None, "m", Duration::from_secs(5)).unwrap();
    let policy = RetryPolicy { attempts: 3, base_backoff: Duration::from_millis(20) };
    let gw = Gateway::with_policy(Box::new(provider), policy, 1);
    let start = std::time::Instant::now();
    assert_eq!(gw.complete(&CompletionRequest::new("x")).unwrap(), "third time");
    assert!(start.elapsed() >= Duration::from_millis(60), "backoff 20 + 40 ms expected");
    assert_eq!(seen.lock().unwrap().len(), 3);
    assert_eq!(gw.call_log()[0].attempts, 3);
}

#[test]
fn client_errors_are_not_retried() {
    let (url, seen) = mock_server(vec![(401, "{\"error\":\"bad key\"}".into())]);
    let provider = HttpProvider::new(&url, None, "m", Duration::from_secs(5)).unwrap();
    let gw = Gateway::new(provider);
    let err = gw.complete(&CompletionRequest::new("x")).unwrap_err();
    assert!(matches!(err, GatewayError::Rejected { status: 401, .. }));
    assert!(err.is_fatal());
    assert_eq!(seen.lock().unwrap().len(), 1);
}

#[test]
fn scripted_replay_is_bit_deterministic() {
    let prompts = ["alpha", "beta", "gamma"];
    let entries: Vec<TranscriptEntry> = prompts
        .iter()
        .map(|p| TranscriptEntry { fingerprint: CompletionRequest::new(*p).fingerprint(), response: format!("{p}!") })
        .collect();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.jsonl");
    probsmith_core::dataset::write_jsonl(&path, &entries).unwrap();
    let run = || {
        let gw = Gateway::new(ScriptedProvider::load(&path).unwrap());
        prompts.iter().map(|p| gw.complete(&CompletionRequest::new(*p)).unwrap()).collect::<Vec<_>>()
    };
    assert_eq!(run(), run());
    assert_eq!(run()[0], "alpha!");
}

#[test]
fn recorder_survives_being_moved_into_gateway() {
    let inner = ScriptedProvider::new(vec![TranscriptEntry {
        fingerprint: CompletionRequest::new("a").fingerprint(),
        response: "r".into(),
    }]);
    let rec = Arc::new(RecordingProvider::new(inner));
    let gw = Gateway::new(rec.handle());
    gw.complete(&CompletionRequest::new("a")).unwrap();
    assert_eq!(rec.transcript().len(), 1);
}

/// Set PROBSMITH_LLM_ENDPOINT (and optionally the key and model variables)
/// and run with `--ignored` to check a real endpoint.
#[test]
#[ignore]
fn live_provider_smoke() {
    if std::env::var(ENV_ENDPOINT).is_err() {
        eprintln!("{ENV_ENDPOINT} unset, skipping");
        return;
    }
    let gw = Gateway::new(HttpProvider::from_env().unwrap());
    let out = gw.complete(&CompletionRequest::new("Reply with the single word: ready")).unwrap();
    assert!(!out.trim().is_empty());
}
