//! Generic chat-with-tools HTTP adapter.
//!
//! Speaks the common chat-completions wire shape: the four-turn sequence is
//! sent as system / user / assistant-tool-call / tool messages, and the
//! assistant text is read from `choices[0].message.content`. Vendor
//! differences live entirely in this request/response mapping.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{Backend, BackendError, BackendReply, MessageSequence, TrialContext};

/// Configuration for one HTTP backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpBackendConfig {
    /// Base URL up to and including the API root, e.g.
    /// `https://api.example/v1`; the adapter posts to
    /// `{base_url}/chat/completions`.
    pub base_url: String,
    /// Model name sent in the request body.
    pub model: String,
    /// Environment variable holding the bearer token; unset means no auth
    /// header (local inference servers).
    #[serde(default)]
    pub auth_env: Option<String>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    /// Sampling temperature where the API allows it; omitted otherwise so the
    /// backend default applies.
    #[serde(default)]
    pub temperature: Option<f64>,
    /// Output-length cap, held fixed across trials.
    #[serde(default)]
    pub max_tokens: Option<u32>,
}

fn default_timeout_secs() -> u64 {
    60
}

pub struct HttpBackend {
    id: String,
    config: HttpBackendConfig,
    token: Option<String>,
    client: reqwest::blocking::Client,
}

impl HttpBackend {
    /// Build the adapter, resolving the auth token from the environment once.
    /// A configured but missing token variable fails fast.
    pub fn new(id: impl Into<String>, config: HttpBackendConfig) -> Result<Self, BackendError> {
        let token = match &config.auth_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                BackendError::Auth(format!("environment variable {var} is not set"))
            })?),
            None => None,
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| BackendError::Fatal(format!("http client: {e}")))?;
        Ok(Self {
            id: id.into(),
            config,
            token,
            client,
        })
    }

    fn request_body(&self, messages: &MessageSequence) -> serde_json::Value {
        let tool_arguments =
            serde_json::to_string(&json!({ "query": messages.tool_call.query }))
                .expect("serializable arguments");
        let tool_content = serde_json::to_string(
            &messages
                .tool_response
                .iter()
                .map(|s| json!({ "title": s.title, "url": s.url, "content": s.body }))
                .collect::<Vec<_>>(),
        )
        .expect("serializable tool content");
        let mut body = json!({
            "model": self.config.model,
            "messages": [
                { "role": "system", "content": messages.system },
                { "role": "user", "content": messages.user },
                {
                    "role": "assistant",
                    "content": serde_json::Value::Null,
                    "tool_calls": [{
                        "id": "call_1",
                        "type": "function",
                        "function": { "name": messages.tool_call.name, "arguments": tool_arguments }
                    }]
                },
                { "role": "tool", "tool_call_id": "call_1", "content": tool_content }
            ]
        });
        if let Some(t) = self.config.temperature {
            body["temperature"] = json!(t);
        }
        if let Some(m) = self.config.max_tokens {
            body["max_tokens"] = json!(m);
        }
        body
    }
}

#[derive(Debug, Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Debug, Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Debug, Deserialize)]
struct ChatMessage {
    content: Option<String>,
}

impl Backend for HttpBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn run(&self, ctx: &TrialContext<'_>) -> Result<BackendReply, BackendError> {
        let url = format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'));
        let mut request = self.client.post(&url).json(&self.request_body(ctx.messages));
        if let Some(token) = &self.token {
            request = request.bearer_auth(token);
        }
        let response = request
            .send()
            .map_err(|e| BackendError::Transient(format!("transport: {e}")))?;

        let status = response.status();
        if status.as_u16() == 401 || status.as_u16() == 403 {
            return Err(BackendError::Auth(format!("status {status}")));
        }
        if status.as_u16() == 408 || status.as_u16() == 429 || status.is_server_error() {
            return Err(BackendError::Transient(format!("status {status}")));
        }
        if !status.is_success() {
            return Err(BackendError::Fatal(format!("status {status}")));
        }

        let parsed: ChatResponse = response
            .json()
            .map_err(|e| BackendError::Fatal(format!("malformed response body: {e}")))?;
        let text = parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| BackendError::Fatal("response carries no assistant text".into()))?;
        Ok(BackendReply {
            text,
            meta: format!("http model={}", self.config.model),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Corpus, Scenario, VariantDoc};
    use crate::factors::VariantId;
    use crate::plan::{self, Order, TrialSpec};
    use crate::run::{build_messages, run_trial, RetryPolicy, TrialLog};
    use serde_json::Map;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    /// Tiny scripted HTTP/1.1 server: serves one canned (status, body) per
    /// connection in order, capturing request bodies.
    struct ScriptedServer {
        addr: String,
        requests: Arc<std::sync::Mutex<Vec<String>>>,
        hits: Arc<AtomicUsize>,
        handle: Option<std::thread::JoinHandle<()>>,
    }

    impl ScriptedServer {
        fn start(responses: Vec<(u16, String)>) -> Self {
            let listener = TcpListener::bind("127.0.0.1:0").unwrap();
            let addr = format!("http://{}", listener.local_addr().unwrap());
            let requests = Arc::new(std::sync::Mutex::new(Vec::new()));
            let hits = Arc::new(AtomicUsize::new(0));
            let requests_inner = requests.clone();
            let hits_inner = hits.clone();
            let handle = std::thread::spawn(move || {
                for (status, body) in responses {
                    let (mut stream, _) = match listener.accept() {
                        Ok(pair) => pair,
                        Err(_) => return,
                    };
                    let mut reader = BufReader::new(stream.try_clone().unwrap());
                    let mut content_length = 0usize;
                    loop {
                        let mut line = String::new();
                        if reader.read_line(&mut line).is_err() || line == "\r\n" || line.is_empty()
                        {
                            break;
                        }
                        let lower = line.to_lowercase();
                        if let Some(rest) = lower.strip_prefix("content-length:") {
                            content_length = rest.trim().parse().unwrap_or(0);
                        }
                    }
                    let mut body_bytes = vec![0u8; content_length];
                    reader.read_exact(&mut body_bytes).ok();
                    requests_inner
                        .lock()
                        .unwrap()
                        .push(String::from_utf8_lossy(&body_bytes).to_string());
                    hits_inner.fetch_add(1, Ordering::SeqCst);
                    let reason = match status {
                        200 => "OK",
                        401 => "Unauthorized",
                        429 => "Too Many Requests",
                        500 => "Internal Server Error",
                        _ => "Status",
                    };
                    let response = format!(
                        "HTTP/1.1 {status} {reason}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                        body.len()
                    );
                    stream.write_all(response.as_bytes()).ok();
                }
            });
            Self {
                addr,
                requests,
                hits,
                handle: Some(handle),
            }
        }
    }

    impl Drop for ScriptedServer {
        fn drop(&mut self) {
            if let Some(h) = self.handle.take() {
                // Server thread ends once its script is exhausted.
                let _ = h.join();
            }
        }
    }

    fn ok_body(text: &str) -> String {
        serde_json::to_string(&serde_json::json!({
            "choices": [{ "message": { "role": "assistant", "content": text } }]
        }))
        .unwrap()
    }

    fn corpus() -> Corpus {
        Corpus::new(vec![Scenario {
            scenario_id: "s1".into(),
            factor_id: 1,
            blog_id: "b".into(),
            variant_a: VariantDoc::new(
                VariantId::A,
                "A".into(),
                "https://a.example/a".into(),
                "body a".into(),
            ),
            variant_b: VariantDoc::new(
                VariantId::B,
                "B".into(),
                "https://b.example/b".into(),
                "body b".into(),
            ),
            queries: vec!["q0".into(), "q1".into(), "q2".into()],
            tool_query: "best widget".into(),
            extra: Map::new(),
        }])
        .unwrap()
    }

    fn spec() -> TrialSpec {
        TrialSpec {
            trial_id: plan::trial_id("s1", 0, Order::Ab, 1, "remote"),
            scenario_id: "s1".into(),
            paraphrase_index: 0,
            order: Order::Ab,
            replicate: 1,
            model_id: "remote".into(),
        }
    }

    fn config(base_url: &str) -> HttpBackendConfig {
        HttpBackendConfig {
            base_url: base_url.to_string(),
            model: "test-model".into(),
            auth_env: None,
            timeout_secs: 5,
            temperature: Some(0.0),
            max_tokens: Some(256),
        }
    }

    #[test]
    fn sends_four_turn_sequence_and_reads_answer() {
        let server = ScriptedServer::start(vec![(200, ok_body("cited https://a.example/a"))]);
        let backend = HttpBackend::new("remote", config(&server.addr)).unwrap();
        let corpus = corpus();
        let spec = spec();
        let messages = build_messages(&spec, &corpus).unwrap();
        let scenario = corpus.get("s1").unwrap();
        let ctx = TrialContext {
            spec: &spec,
            scenario,
            factor: crate::factors::by_id(1).unwrap(),
            messages: &messages,
        };
        let reply = backend.run(&ctx).unwrap();
        assert_eq!(reply.text, "cited https://a.example/a");

        let requests = server.requests.lock().unwrap();
        let body: serde_json::Value = serde_json::from_str(&requests[0]).unwrap();
        assert_eq!(body["model"], "test-model");
        let msgs = body["messages"].as_array().unwrap();
        assert_eq!(msgs.len(), 4);
        assert_eq!(msgs[0]["role"], "system");
        assert_eq!(msgs[0]["content"], crate::run::SYSTEM_PROMPT);
        assert_eq!(msgs[1]["role"], "user");
        assert_eq!(msgs[2]["tool_calls"][0]["function"]["name"], "web_search");
        assert_eq!(msgs[3]["role"], "tool");
        let tool_content: serde_json::Value =
            serde_json::from_str(msgs[3]["content"].as_str().unwrap()).unwrap();
        assert_eq!(tool_content.as_array().unwrap().len(), 2);
        assert_eq!(tool_content[0]["url"], "https://a.example/a");
        assert_eq!(body["temperature"], 0.0);
        assert_eq!(body["max_tokens"], 256);
    }

    #[test]
    fn transient_statuses_are_retried_to_success() {
        let server = ScriptedServer::start(vec![
            (500, "{}".into()),
            (429, "{}".into()),
            (200, ok_body("answer https://a.example/a")),
        ]);
        let backend = HttpBackend::new("remote", config(&server.addr)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let log = TrialLog::open(&dir.path().join("t.jsonl")).unwrap();
        let retry = RetryPolicy {
            max_attempts: 3,
            base_delay: std::time::Duration::from_millis(1),
            max_delay: std::time::Duration::from_millis(2),
            jitter: 0.0,
        };
        let result = run_trial(&spec(), &corpus(), &backend, &retry, None, &log).unwrap();
        assert_eq!(result.attempts, 3);
        assert_eq!(server.hits.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn auth_status_fails_fast() {
        let server = ScriptedServer::start(vec![(401, "{}".into())]);
        let backend = HttpBackend::new("remote", config(&server.addr)).unwrap();
        let corpus = corpus();
        let spec = spec();
        let messages = build_messages(&spec, &corpus).unwrap();
        let ctx = TrialContext {
            spec: &spec,
            scenario: corpus.get("s1").unwrap(),
            factor: crate::factors::by_id(1).unwrap(),
            messages: &messages,
        };
        assert!(matches!(backend.run(&ctx), Err(BackendError::Auth(_))));
    }

    #[test]
    fn missing_auth_env_fails_at_construction() {
        let mut cfg = config("http://127.0.0.1:1");
        cfg.auth_env = Some("CITEPREF_TEST_TOKEN_THAT_IS_UNSET".into());
        assert!(matches!(
            HttpBackend::new("remote", cfg),
            Err(BackendError::Auth(_))
        ));
    }
}
