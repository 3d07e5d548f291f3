//! Wire-level tests for the two remote HTTP clients, run against a
//! scripted localhost server. Each incoming connection consumes the next
//! canned response from the script; the server keeps every raw request it
//! received so tests can inspect what actually went over the socket.

use std::io::{Read, Write};
use std::net::TcpListener;
use std::thread;

use hippograph::embed::{EmbeddingProvider, RemoteEmbedder, RemoteEmbedderConfig};
use hippograph::extract::{ExtractionBackend, PromptSet, RemoteBackend, RemoteLlmConfig};

/// One canned reply: status code plus JSON body.
type Reply = (u16, &'static str);

struct ScriptedServer {
    url: String,
    handle: thread::JoinHandle<Vec<String>>,
}

impl ScriptedServer {
    /// Serves exactly `script.len()` connections, then stops listening.
    /// Every response closes its connection, so retries reconnect and
    /// consume the next scripted reply.
    fn start(script: Vec<Reply>) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind loopback");
        let url = format!("http://{}/v1/endpoint", listener.local_addr().unwrap());
        let handle = thread::spawn(move || {
            let mut seen = Vec::new();
            for (status, body) in script {
                let (mut stream, _) = listener.accept().expect("accept");
                seen.push(read_request(&mut stream));
                let reason = match status {
                    200 => "OK",
                    400 => "Bad Request",
                    401 => "Unauthorized",
                    429 => "Too Many Requests",
                    500 => "Internal Server Error",
                    _ => "Other",
                };
                let response = format!(
                    "HTTP/1.1 {status} {reason}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                    body.len()
                );
                stream.write_all(response.as_bytes()).expect("write response");
            }
            seen
        });
        ScriptedServer { url, handle }
    }

    /// Waits for the whole script to be consumed and returns the raw
    /// requests, headers included.
    fn requests(self) -> Vec<String> {
        self.handle.join().expect("server thread")
    }
}

/// Reads one HTTP/1.1 request: headers up to the blank line, then exactly
/// content-length body bytes.
fn read_request(stream: &mut std::net::TcpStream) -> String {
    let mut raw = Vec::new();
    let mut byte = [0u8; 1];
    while !raw.ends_with(b"\r\n\r\n") {
        stream.read_exact(&mut byte).expect("read header byte");
        raw.push(byte[0]);
    }
    let head = String::from_utf8_lossy(&raw).to_string();
    let length: usize = head
        .lines()
        .find_map(|line| {
            let (name, value) = line.split_once(':')?;
            name.eq_ignore_ascii_case("content-length")
                .then(|| value.trim().parse().ok())?
        })
        .unwrap_or(0);
    let mut body = vec![0u8; length];
    stream.read_exact(&mut body).expect("read body");
    head + &String::from_utf8_lossy(&body)
}

fn llm_config(url: &str, max_retries: u32, api_key_env: &str) -> RemoteLlmConfig {
    RemoteLlmConfig {
        endpoint: url.to_string(),
        model: "test-model".to_string(),
        api_key_env: api_key_env.to_string(),
        timeout_secs: 10,
        max_retries,
    }
}

fn embed_config(url: &str, dimension: usize, max_retries: u32) -> RemoteEmbedderConfig {
    RemoteEmbedderConfig {
        endpoint: url.to_string(),
        model: "test-embed".to_string(),
        dimension,
        api_key_env: "HG_TEST_NO_SUCH_KEY".to_string(),
        timeout_secs: 10,
        max_retries,
    }
}

fn chat_body(content: &str, prompt_tokens: u64, completion_tokens: u64) -> String {
    format!(
        r#"{{"choices":[{{"message":{{"role":"assistant","content":"{content}"}}}}],"usage":{{"prompt_tokens":{prompt_tokens},"completion_tokens":{completion_tokens}}}}}"#
    )
}

#[test]
fn chat_client_round_trips_text_usage_and_auth() {
    let body: &'static str = Box::leak(chat_body("found it", 11, 3).into_boxed_str());
    let server = ScriptedServer::start(vec![(200, body)]);
    std::env::set_var("HG_TEST_KEY_ROUND_TRIP", "sekrit");
    let backend = RemoteBackend::new(
        llm_config(&server.url, 0, "HG_TEST_KEY_ROUND_TRIP"),
        PromptSet::default(),
    )
    .unwrap();

    let response = backend.query_ner("Who wrote the notes?").unwrap();
    assert_eq!(response.text, "found it");
    assert_eq!(response.usage.prompt_tokens, 11);
    assert_eq!(response.usage.completion_tokens, 3);
    assert_eq!(response.usage.calls, 1);

    let requests = server.requests();
    assert_eq!(requests.len(), 1);
    let lowered = requests[0].to_lowercase();
    assert!(lowered.contains("authorization: bearer sekrit"), "{}", requests[0]);
    assert!(requests[0].contains(r#""temperature":0"#));
    assert!(requests[0].contains(r#""model":"test-model""#));
    assert!(requests[0].contains("Who wrote the notes?"));
}

#[test]
fn chat_client_treats_auth_rejection_as_fatal() {
    let server = ScriptedServer::start(vec![(401, "{}")]);
    let backend =
        RemoteBackend::new(llm_config(&server.url, 2, "HG_TEST_NO_SUCH_KEY"), PromptSet::default())
            .unwrap();

    let err = backend.query_ner("q").unwrap_err();
    assert!(!err.is_degradable(), "{err}");
    assert!(err.to_string().contains("401"), "{err}");
    // One request on the wire: auth failures must not be retried.
    assert_eq!(server.requests().len(), 1);
}

#[test]
fn chat_client_retries_rate_limits_until_one_lands() {
    let body: &'static str = Box::leak(chat_body("late but fine", 1, 1).into_boxed_str());
    let server = ScriptedServer::start(vec![(429, ""), (500, ""), (200, body)]);
    let backend =
        RemoteBackend::new(llm_config(&server.url, 2, "HG_TEST_NO_SUCH_KEY"), PromptSet::default())
            .unwrap();

    let response = backend.query_ner("q").unwrap();
    assert_eq!(response.text, "late but fine");
    assert_eq!(server.requests().len(), 3);
}

#[test]
fn chat_client_gives_up_after_its_retry_budget() {
    let server = ScriptedServer::start(vec![(500, ""), (500, ""), (500, "")]);
    let backend =
        RemoteBackend::new(llm_config(&server.url, 2, "HG_TEST_NO_SUCH_KEY"), PromptSet::default())
            .unwrap();

    let err = backend.query_ner("q").unwrap_err();
    assert!(err.is_degradable(), "{err}");
    assert!(err.to_string().contains("after 3 attempts"), "{err}");
    assert_eq!(server.requests().len(), 3);
}

#[test]
fn chat_client_rejects_bad_requests_without_retrying() {
    let server = ScriptedServer::start(vec![(400, "{}")]);
    let backend =
        RemoteBackend::new(llm_config(&server.url, 2, "HG_TEST_NO_SUCH_KEY"), PromptSet::default())
            .unwrap();

    let err = backend.query_ner("q").unwrap_err();
    assert!(err.is_degradable(), "{err}");
    assert_eq!(server.requests().len(), 1);
}

#[test]
fn chat_client_surfaces_malformed_payloads() {
    let server = ScriptedServer::start(vec![(200, "this is not json")]);
    let backend =
        RemoteBackend::new(llm_config(&server.url, 0, "HG_TEST_NO_SUCH_KEY"), PromptSet::default())
            .unwrap();
    let err = backend.query_ner("q").unwrap_err();
    assert!(err.is_degradable(), "{err}");
    assert!(err.to_string().contains("malformed"), "{err}");

    let server = ScriptedServer::start(vec![(200, r#"{"choices":[]}"#)]);
    let backend =
        RemoteBackend::new(llm_config(&server.url, 0, "HG_TEST_NO_SUCH_KEY"), PromptSet::default())
            .unwrap();
    let err = backend.query_ner("q").unwrap_err();
    assert!(err.to_string().contains("no choices"), "{err}");
}

#[test]
fn chat_client_reports_transport_failures() {
    // Bind a port, then drop the listener so connections are refused.
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/endpoint", listener.local_addr().unwrap());
    drop(listener);

    let backend =
        RemoteBackend::new(llm_config(&url, 0, "HG_TEST_NO_SUCH_KEY"), PromptSet::default())
            .unwrap();
    let err = backend.query_ner("q").unwrap_err();
    assert!(err.is_degradable(), "{err}");
    assert!(err.to_string().contains("transport"), "{err}");
}

#[test]
fn embedder_returns_vectors_in_input_order() {
    let server = ScriptedServer::start(vec![(
        200,
        r#"{"data":[{"embedding":[1.0,0.0]},{"embedding":[0.0,1.0]}]}"#,
    )]);
    let embedder = RemoteEmbedder::new(embed_config(&server.url, 2, 0)).unwrap();

    let rows = embedder
        .embed_batch(&["alpha".to_string(), "beta".to_string()])
        .unwrap();
    assert_eq!(rows, vec![vec![1.0, 0.0], vec![0.0, 1.0]]);

    let requests = server.requests();
    assert!(requests[0].contains(r#""input":["alpha","beta"]"#), "{}", requests[0]);
    assert!(requests[0].contains(r#""model":"test-embed""#));
}

#[test]
fn embedder_restores_order_from_explicit_indices() {
    let server = ScriptedServer::start(vec![(
        200,
        r#"{"data":[{"embedding":[0.0,1.0],"index":1},{"embedding":[1.0,0.0],"index":0}]}"#,
    )]);
    let embedder = RemoteEmbedder::new(embed_config(&server.url, 2, 0)).unwrap();

    let rows = embedder
        .embed_batch(&["alpha".to_string(), "beta".to_string()])
        .unwrap();
    assert_eq!(rows, vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
    server.requests();
}

#[test]
fn embedder_rejects_responses_with_the_wrong_shape() {
    // Fewer rows than inputs.
    let server = ScriptedServer::start(vec![(200, r#"{"data":[{"embedding":[1.0,0.0]}]}"#)]);
    let embedder = RemoteEmbedder::new(embed_config(&server.url, 2, 0)).unwrap();
    let err = embedder
        .embed_batch(&["a".to_string(), "b".to_string()])
        .unwrap_err();
    assert!(err.to_string().contains("asked for 2"), "{err}");
    server.requests();

    // Vector width disagrees with the configured dimension.
    let server = ScriptedServer::start(vec![(200, r#"{"data":[{"embedding":[1.0,0.0,0.5]}]}"#)]);
    let embedder = RemoteEmbedder::new(embed_config(&server.url, 2, 0)).unwrap();
    let err = embedder.embed_batch(&["a".to_string()]).unwrap_err();
    assert!(err.to_string().contains("dimension"), "{err}");
    server.requests();

    // Duplicate index slots.
    let server = ScriptedServer::start(vec![(
        200,
        r#"{"data":[{"embedding":[1.0,0.0],"index":0},{"embedding":[0.0,1.0],"index":0}]}"#,
    )]);
    let embedder = RemoteEmbedder::new(embed_config(&server.url, 2, 0)).unwrap();
    let err = embedder
        .embed_batch(&["a".to_string(), "b".to_string()])
        .unwrap_err();
    assert!(err.to_string().contains("bad index"), "{err}");
    server.requests();
}

#[test]
fn embedder_retries_transient_failures_then_gives_up() {
    let server = ScriptedServer::start(vec![(429, ""), (429, "")]);
    let embedder = RemoteEmbedder::new(embed_config(&server.url, 2, 1)).unwrap();
    let err = embedder.embed_batch(&["a".to_string()]).unwrap_err();
    assert!(err.to_string().contains("after 2 attempts"), "{err}");
    assert_eq!(server.requests().len(), 2);

    // Non-transient rejections fail on the spot.
    let server = ScriptedServer::start(vec![(401, "{}")]);
    let embedder = RemoteEmbedder::new(embed_config(&server.url, 2, 3)).unwrap();
    let err = embedder.embed_batch(&["a".to_string()]).unwrap_err();
    assert!(err.to_string().contains("401"), "{err}");
    assert_eq!(server.requests().len(), 1);
}

#[test]
fn embedder_skips_the_network_for_empty_batches() {
    // No server at all: an empty batch must not touch the endpoint.
    let embedder = RemoteEmbedder::new(embed_config("http://127.0.0.1:9/none", 2, 0)).unwrap();
    assert_eq!(embedder.embed_batch(&[]).unwrap(), Vec::<Vec<f32>>::new());
}
