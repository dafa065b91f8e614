//! HTTP policy: drives an episode against an OpenAI-compatible
//! chat-completions endpoint. Transport faults and 5xx responses are retried
//! with backoff; 4xx responses and retry exhaustion end the episode as a
//! fatal failure. The bearer token is held in a [`SecretToken`] that never
//! prints or serializes its value.

use std::fmt;
use std::thread;
use std::time::Duration;

use serde_json::{json, Value};

use crate::engine::{Policy, PolicyFailure, PolicyStep, PolicyView};

use super::wire::{parse_completion, to_wire};

/// Bearer token wrapper. `Debug` redacts; there is no `Display`, no
/// `Serialize`, and the value is only readable inside this module, so it
/// cannot leak into trajectories, manifests, or logs.
#[derive(Clone, PartialEq, Eq)]
pub struct SecretToken(String);

impl SecretToken {
    pub fn new(token: impl Into<String>) -> Self {
        SecretToken(token.into())
    }

    /// Reads the token from an environment variable; `None` when unset or
    /// empty.
    pub fn from_env(var: &str) -> Option<Self> {
        match std::env::var(var) {
            Ok(v) if !v.is_empty() => Some(SecretToken(v)),
            _ => None,
        }
    }

    fn expose(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for SecretToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SecretToken(redacted)")
    }
}

/// Decoding sampling knobs sent with every request.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingParams {
    pub temperature: f64,
    pub top_p: f64,
    pub top_k: u32,
}

impl Default for SamplingParams {
    fn default() -> Self {
        SamplingParams {
            temperature: 0.7,
            top_p: 0.8,
            top_k: 20,
        }
    }
}

/// Where and how to reach the model server.
#[derive(Debug, Clone)]
pub struct RemoteEndpoint {
    /// Base URL up to but excluding `/chat/completions`.
    pub base_url: String,
    pub model: String,
    pub sampling: SamplingParams,
    pub timeout: Duration,
    /// Total tries per round, counting the first.
    pub max_attempts: u32,
    /// Sleep before retry `n` is `retry_backoff * n`.
    pub retry_backoff: Duration,
    /// Extra top-level request fields (e.g. `max_tokens`), merged last.
    pub extra_params: serde_json::Map<String, Value>,
    auth_token: Option<SecretToken>,
}

impl RemoteEndpoint {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        RemoteEndpoint {
            base_url: base_url.into(),
            model: model.into(),
            sampling: SamplingParams::default(),
            timeout: Duration::from_secs(120),
            max_attempts: 3,
            retry_backoff: Duration::from_millis(250),
            extra_params: serde_json::Map::new(),
            auth_token: None,
        }
    }

    pub fn with_auth(mut self, token: SecretToken) -> Self {
        self.auth_token = Some(token);
        self
    }

    fn completions_url(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }
}

/// [`Policy`] implementation that forwards each round to the endpoint.
pub struct RemotePolicy {
    endpoint: RemoteEndpoint,
    agent: ureq::Agent,
}

impl fmt::Debug for RemotePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // Inherits the endpoint's token redaction; the agent is opaque.
        f.debug_struct("RemotePolicy")
            .field("endpoint", &self.endpoint)
            .finish_non_exhaustive()
    }
}

pub(crate) enum CallError {
    /// Transport fault or 5xx: worth another try.
    Retryable(String),
    /// 4xx: the request itself is rejected; retrying cannot help.
    Permanent(String),
}

pub(crate) fn build_agent(endpoint: &RemoteEndpoint) -> ureq::Agent {
    ureq::Agent::config_builder()
        .timeout_global(Some(endpoint.timeout))
        .build()
        .new_agent()
}

/// One POST to the endpoint's completions URL. Returns the raw response
/// text of a 2xx reply; the judge grader shares this transport path.
pub(crate) fn post_completions(
    agent: &ureq::Agent,
    endpoint: &RemoteEndpoint,
    body: &Value,
) -> Result<String, CallError> {
    let mut req = agent.post(&endpoint.completions_url());
    if let Some(token) = &endpoint.auth_token {
        req = req.header("authorization", &format!("Bearer {}", token.expose()));
    }
    match req.send_json(body) {
        Ok(mut resp) => resp
            .body_mut()
            .read_to_string()
            .map_err(|e| CallError::Retryable(format!("reading response body: {e}"))),
        Err(ureq::Error::StatusCode(code)) if (400..500).contains(&code) => {
            Err(CallError::Permanent(format!("endpoint returned {code}")))
        }
        Err(ureq::Error::StatusCode(code)) => {
            Err(CallError::Retryable(format!("endpoint returned {code}")))
        }
        Err(e) => Err(CallError::Retryable(format!("transport: {e}"))),
    }
}

impl RemotePolicy {
    pub fn new(endpoint: RemoteEndpoint) -> Self {
        let agent = build_agent(&endpoint);
        RemotePolicy { endpoint, agent }
    }

    fn request_body(&self, view: &PolicyView<'_>) -> Value {
        let mut body = serde_json::Map::new();
        body.insert("model".into(), json!(self.endpoint.model));
        body.insert(
            "messages".into(),
            to_wire(view.state, view.system_block),
        );
        body.insert("tools".into(), view.manifest.clone());
        body.insert("tool_choice".into(), json!("required"));
        let s = self.endpoint.sampling;
        body.insert("temperature".into(), json!(s.temperature));
        body.insert("top_p".into(), json!(s.top_p));
        body.insert("top_k".into(), json!(s.top_k));
        for (k, v) in &self.endpoint.extra_params {
            body.insert(k.clone(), v.clone());
        }
        Value::Object(body)
    }

}

impl Policy for RemotePolicy {
    fn step(&mut self, view: &PolicyView<'_>) -> Result<PolicyStep, PolicyFailure> {
        let body = self.request_body(view);
        let mut last_error = String::new();
        for attempt in 1..=self.endpoint.max_attempts.max(1) {
            if attempt > 1 {
                thread::sleep(self.endpoint.retry_backoff * (attempt - 1));
            }
            match post_completions(&self.agent, &self.endpoint, &body) {
                Ok(text) => {
                    let parsed: Value = serde_json::from_str(&text)
                        .map_err(|_| PolicyFailure::Malformed { raw: text.clone() })?;
                    return parse_completion(&parsed, &format!("call_auto_{}", view.round));
                }
                Err(CallError::Permanent(msg)) => {
                    return Err(PolicyFailure::Fatal { message: msg });
                }
                Err(CallError::Retryable(msg)) => {
                    log::warn!("attempt {attempt}/{}: {msg}", self.endpoint.max_attempts);
                    last_error = msg;
                }
            }
        }
        Err(PolicyFailure::Fatal {
            message: format!(
                "giving up after {} attempts: {last_error}",
                self.endpoint.max_attempts
            ),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::{Budgets, InteractionState};
    use crate::testhttp::{completion_json, stub_server};
    use crate::tools::{tool_manifest, ToolName, ToolSet};

    fn drive(endpoint: RemoteEndpoint) -> Result<PolicyStep, PolicyFailure> {
        let state = InteractionState::new("q", Budgets::default());
        let serialized = state.serialize("sys");
        let manifest = tool_manifest(&ToolSet::default());
        let view = PolicyView {
            state: &state,
            serialized: &serialized,
            system_block: "sys",
            manifest: &manifest,
            round: 1,
        };
        RemotePolicy::new(endpoint).step(&view)
    }

    fn fast(mut e: RemoteEndpoint) -> RemoteEndpoint {
        e.retry_backoff = Duration::from_millis(1);
        e.timeout = Duration::from_secs(5);
        e
    }

    #[test]
    fn round_trip_sends_messages_and_parses_the_tool_call() {
        let (base, handle) =
            stub_server(vec![(200, completion_json("checkBudget", "{}"))]);
        let endpoint = fast(RemoteEndpoint::new(&base, "test-model"))
            .with_auth(SecretToken::new("sekrit-token"));
        let step = drive(endpoint).unwrap();
        assert_eq!(step.thought, "thinking");
        assert_eq!(step.call.name, ToolName::CheckBudget);
        assert_eq!(step.call.call_id, "call_srv");

        let seen = handle.join().unwrap();
        assert_eq!(seen.len(), 1);
        assert!(seen[0].head.starts_with("post /chat/completions"));
        assert!(seen[0].head.contains("authorization: bearer sekrit-token"));
        let body: Value = serde_json::from_str(&seen[0].body).unwrap();
        assert_eq!(body["model"], "test-model");
        assert_eq!(body["messages"][0]["role"], "system");
        assert_eq!(body["temperature"], 0.7);
        assert_eq!(body["top_p"], 0.8);
        assert_eq!(body["top_k"], 20);
        assert!(body["tools"].is_array());
    }

    #[test]
    fn no_token_means_no_authorization_header() {
        let (base, handle) =
            stub_server(vec![(200, completion_json("analyzeText", "{}"))]);
        drive(fast(RemoteEndpoint::new(&base, "m"))).unwrap();
        let seen = handle.join().unwrap();
        assert!(!seen[0].head.contains("authorization"));
    }

    #[test]
    fn server_errors_are_retried_until_success() {
        let (base, handle) = stub_server(vec![
            (500, "{\"error\":\"overloaded\"}".into()),
            (503, "{\"error\":\"busy\"}".into()),
            (200, completion_json("analyzeText", "{}")),
        ]);
        let step = drive(fast(RemoteEndpoint::new(&base, "m"))).unwrap();
        assert_eq!(step.call.name, ToolName::AnalyzeText);
        assert_eq!(handle.join().unwrap().len(), 3);
    }

    #[test]
    fn retry_exhaustion_is_fatal() {
        let (base, handle) = stub_server(vec![
            (500, "{}".into()),
            (500, "{}".into()),
            (500, "{}".into()),
        ]);
        let err = drive(fast(RemoteEndpoint::new(&base, "m"))).unwrap_err();
        assert!(matches!(
            err,
            PolicyFailure::Fatal { ref message } if message.contains("3 attempts")
        ));
        assert_eq!(handle.join().unwrap().len(), 3);
    }

    #[test]
    fn client_errors_are_fatal_without_retry() {
        let (base, handle) = stub_server(vec![(401, "{}".into())]);
        let err = drive(fast(RemoteEndpoint::new(&base, "m"))).unwrap_err();
        assert!(matches!(
            err,
            PolicyFailure::Fatal { ref message } if message.contains("401")
        ));
        assert_eq!(handle.join().unwrap().len(), 1);
    }

    #[test]
    fn non_json_success_body_is_malformed_not_fatal() {
        let (base, _handle) = stub_server(vec![(200, "oops not json".into())]);
        let err = drive(fast(RemoteEndpoint::new(&base, "m"))).unwrap_err();
        assert!(matches!(
            err,
            PolicyFailure::Malformed { ref raw } if raw == "oops not json"
        ));
    }

    #[test]
    fn token_never_appears_in_debug_output() {
        let endpoint = RemoteEndpoint::new("http://x", "m")
            .with_auth(SecretToken::new("hunter2-very-secret"));
        let dump = format!("{endpoint:?}");
        assert!(!dump.contains("hunter2"));
        assert!(dump.contains("SecretToken(redacted)"));
    }

    #[test]
    fn extra_params_are_merged_into_the_request() {
        let (base, handle) =
            stub_server(vec![(200, completion_json("analyzeText", "{}"))]);
        let mut endpoint = fast(RemoteEndpoint::new(&base, "m"));
        endpoint
            .extra_params
            .insert("max_tokens".into(), json!(4096));
        drive(endpoint).unwrap();
        let seen = handle.join().unwrap();
        let body: Value = serde_json::from_str(&seen[0].body).unwrap();
        assert_eq!(body["max_tokens"], 4096);
    }
}
