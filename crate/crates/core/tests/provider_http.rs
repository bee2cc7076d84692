use currikg::error::ProviderError;
use currikg::provider::*;
use serde_json::{json, Value};
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;

struct Seen {
    path: String,
    authorization: Option<String>,
    body: Value,
}

/// Serves the canned `(status, body)` replies in order, one per connection,
/// and records what each request carried.
fn serve(replies: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<Seen>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = seen.clone();
    thread::spawn(move || {
        for (status, body) in replies {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream);
            let mut line = String::new();
            reader.read_line(&mut line).unwrap();
            let path = line.split_whitespace().nth(1).unwrap_or_default().to_string();
            let (mut length, mut authorization) = (0, None);
            loop {
                let mut header = String::new();
                reader.read_line(&mut header).unwrap();
                let header = header.trim_end();
                if header.is_empty() {
                    break;
                }
                let (name, value) = header.split_once(':').unwrap();
                match name.to_ascii_lowercase().as_str() {
                    "content-length" => length = value.trim().parse().unwrap(),
                    "authorization" => authorization = Some(value.trim().to_string()),
                    _ => {}
                }
            }
            let mut buf = vec![0; length];
            reader.read_exact(&mut buf).unwrap();
            log.lock().unwrap().push(Seen {
                path,
                authorization,
                body: serde_json::from_slice(&buf).unwrap_or(Value::Null),
            });
            let mut stream = reader.into_inner();
            write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
        }
    });
    (url, seen)
}

fn fast() -> RetryPolicy {
    RetryPolicy {
        attempts: 3,
        initial_backoff_ms: 1,
    }
}

fn chat_reply(content: &str) -> String {
    json!({"choices": [{"message": {"role": "assistant", "content": content}}], "usage": {"total_tokens": 7}})
        .to_string()
}

#[test]
fn chat_request_matches_the_wire_contract() {
    let (url, seen) = serve(vec![(200, chat_reply("{\"topics\": []}"))]);
    let provider = HttpChatProvider::new(&url, Some("secret".into()), fast()).unwrap();
    let request = ProviderRequest::new("gpt-4o-mini", vec![Message::system("sys"), Message::user("hi")]);
    let response = provider.complete(&request).unwrap();
    assert_eq!(response.content, "{\"topics\": []}");
    assert_eq!(response.metadata["usage"]["total_tokens"], 7);

    let seen = seen.lock().unwrap();
    assert_eq!(seen.len(), 1);
    assert_eq!(seen[0].path, "/v1/chat/completions");
    assert_eq!(seen[0].authorization.as_deref(), Some("Bearer secret"));
    assert_eq!(
        seen[0].body,
        json!({
            "model": "gpt-4o-mini",
            "messages": [{"role": "system", "content": "sys"}, {"role": "user", "content": "hi"}],
            "temperature": 0.0,
            "response_format": {"type": "json_object"}
        })
    );
}

#[test]
fn server_errors_are_retried() {
    let (url, seen) = serve(vec![(500, "{}".into()), (503, "{}".into()), (200, chat_reply("ok"))]);
    let provider = HttpChatProvider::new(&url, None, fast()).unwrap();
    let response = provider
        .complete(&ProviderRequest::new("m", vec![Message::user("x")]))
        .unwrap();
    assert_eq!(response.content, "ok");
    assert_eq!(seen.lock().unwrap().len(), 3);
}

#[test]
fn exhausted_retries_are_unavailable() {
    let (url, seen) = serve(vec![(500, "{}".into()), (500, "{}".into()), (500, "{}".into())]);
    let provider = HttpChatProvider::new(&url, None, fast()).unwrap();
    let err = provider
        .complete(&ProviderRequest::new("m", vec![Message::user("x")]))
        .unwrap_err();
    assert!(matches!(err, ProviderError::Unavailable(_)), "{err:?}");
    assert_eq!(seen.lock().unwrap().len(), 3);
}

#[test]
fn format_errors_are_not_retried() {
    let (url, seen) = serve(vec![(200, "not json".into()), (200, chat_reply("late"))]);
    let provider = HttpChatProvider::new(&url, None, fast()).unwrap();
    let err = provider
        .complete(&ProviderRequest::new("m", vec![Message::user("x")]))
        .unwrap_err();
    assert!(matches!(err, ProviderError::Format { .. }), "{err:?}");
    assert_eq!(seen.lock().unwrap().len(), 1);
}

#[test]
fn embeddings_are_batched_in_order() {
    let reply =
        |vs: &[[f64; 2]]| json!({"data": vs.iter().map(|v| json!({"embedding": v})).collect::<Vec<_>>()}).to_string();
    let (url, seen) = serve(vec![
        (200, reply(&[[1.0, 0.0], [0.0, 1.0]])),
        (200, reply(&[[0.5, 0.5]])),
    ]);
    let provider = HttpEmbeddingProvider::new(&url, None, "emb", 2, fast()).unwrap();
    let texts: Vec<String> = ["a", "b", "c"].map(String::from).to_vec();
    let vectors = provider.embed(&texts).unwrap();
    assert_eq!(vectors, vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.5, 0.5]]);
    let seen = seen.lock().unwrap();
    assert_eq!(seen[0].path, "/v1/embeddings");
    assert_eq!(seen[0].body, json!({"model": "emb", "input": ["a", "b"]}));
    assert_eq!(seen[1].body, json!({"model": "emb", "input": ["c"]}));
}

#[test]
fn inconsistent_dimensions_are_rejected() {
    let body = json!({"data": [{"embedding": vec![0.1; 384]}, {"embedding": vec![0.1; 512]}]}).to_string();
    let (url, _) = serve(vec![(200, body)]);
    let provider = HttpEmbeddingProvider::new(&url, None, "emb", 8, fast()).unwrap();
    let err = provider.embed(&["a".into(), "b".into()]).unwrap_err();
    assert!(
        matches!(
            err,
            ProviderError::DimensionMismatch {
                expected: 384,
                found: 512
            }
        ),
        "{err:?}"
    );
}
