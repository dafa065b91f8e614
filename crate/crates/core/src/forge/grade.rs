//! Answer grading, two-layer: rule graders for closed-form answers
//! (multiple-choice letters, needle values) and an LLM judge for open-ended
//! ones. Graders fail loudly — an unreachable judge aborts filtering rather
//! than silently passing or failing trajectories.

use serde_json::{json, Value};

use crate::policy::remote::{build_agent, post_completions, CallError};
use crate::policy::{render_judge_prompt, RemoteEndpoint};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GraderError {
    #[error("grader unavailable: {0}")]
    Unavailable(String),
}

/// Judges whether `answer` resolves `query` the same way `golden` does.
pub trait Grader {
    fn grade(&mut self, query: &str, golden: &str, answer: &str) -> Result<bool, GraderError>;
}

/// Exact match after normalization: trims, lowercases, strips wrapping
/// punctuation. Covers multiple-choice ("B" == "(B)" == "b.") and other
/// closed-form answers.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExactGrader;

fn normalize(s: &str) -> String {
    s.trim()
        .trim_matches(|c: char| "()[]{}.:;,\"'".contains(c))
        .to_lowercase()
}

impl Grader for ExactGrader {
    fn grade(&mut self, _query: &str, golden: &str, answer: &str) -> Result<bool, GraderError> {
        let gold = normalize(golden);
        Ok(!gold.is_empty() && normalize(answer) == gold)
    }
}

/// Correct iff the golden value appears in the answer, compared with
/// collapsed whitespace and case folded. The retrieval benchmark's grader:
/// "the value is 93177201" matches golden "93177201".
#[derive(Debug, Clone, Copy, Default)]
pub struct ContainmentGrader;

fn squash(s: &str) -> String {
    s.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

impl Grader for ContainmentGrader {
    fn grade(&mut self, _query: &str, golden: &str, answer: &str) -> Result<bool, GraderError> {
        let gold = squash(golden);
        Ok(!gold.is_empty() && squash(answer).contains(&gold))
    }
}

/// Extracts the verdict from the judge's reply: the last `\boxed{...}`
/// wins, and it must contain `True` or `False` (any case).
pub(crate) fn parse_verdict(reply: &str) -> Option<bool> {
    let start = reply.rfind("boxed{")? + "boxed{".len();
    let rest = &reply[start..];
    let end = rest.find('}')?;
    let verdict = rest[..end].trim();
    if verdict.eq_ignore_ascii_case("true") {
        Some(true)
    } else if verdict.eq_ignore_ascii_case("false") {
        Some(false)
    } else {
        None
    }
}

/// LLM judge for open-ended answers: renders the equivalence prompt, asks
/// the endpoint, reads the boxed verdict. Deterministic sampling
/// (temperature 0); endpoint retry budget applies.
pub struct JudgeGrader {
    endpoint: RemoteEndpoint,
    agent: ureq::Agent,
}

impl JudgeGrader {
    pub fn new(endpoint: RemoteEndpoint) -> Self {
        let agent = build_agent(&endpoint);
        JudgeGrader { endpoint, agent }
    }
}

impl Grader for JudgeGrader {
    fn grade(&mut self, query: &str, golden: &str, answer: &str) -> Result<bool, GraderError> {
        let prompt = render_judge_prompt(query, golden, answer);
        let body = json!({
            "model": self.endpoint.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": 0.0,
        });
        let mut last_error = String::new();
        for attempt in 1..=self.endpoint.max_attempts.max(1) {
            if attempt > 1 {
                std::thread::sleep(self.endpoint.retry_backoff * (attempt - 1));
            }
            match post_completions(&self.agent, &self.endpoint, &body) {
                Ok(text) => {
                    let reply = serde_json::from_str::<Value>(&text)
                        .ok()
                        .and_then(|v| {
                            v.pointer("/choices/0/message/content")
                                .and_then(Value::as_str)
                                .map(str::to_string)
                        })
                        .ok_or_else(|| {
                            GraderError::Unavailable("judge reply is not a completion".into())
                        })?;
                    return parse_verdict(&reply).ok_or_else(|| {
                        GraderError::Unavailable(
                            "judge verdict missing \\boxed{True|False}".into(),
                        )
                    });
                }
                Err(CallError::Permanent(msg)) => return Err(GraderError::Unavailable(msg)),
                Err(CallError::Retryable(msg)) => last_error = msg,
            }
        }
        Err(GraderError::Unavailable(format!(
            "judge unreachable after {} attempts: {last_error}",
            self.endpoint.max_attempts
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testhttp::{stub_server, text_completion_json};
    use std::time::Duration;

    #[test]
    fn exact_grader_accepts_wrapped_mc_letters() {
        let mut g = ExactGrader;
        for ans in ["B", "(B)", "b.", " B "] {
            assert!(g.grade("q", "B", ans).unwrap(), "{ans:?} should match");
        }
        assert!(!g.grade("q", "B", "C").unwrap());
        assert!(!g.grade("q", "B", "").unwrap());
        assert!(!g.grade("q", "", "").unwrap(), "empty gold never passes");
    }

    #[test]
    fn containment_grader_finds_values_inside_prose() {
        let mut g = ContainmentGrader;
        assert!(g
            .grade("q", "93177201", "The special magic number is 93177201.")
            .unwrap());
        assert!(g.grade("q", "two words", "it says TWO   WORDS here").unwrap());
        assert!(!g.grade("q", "93177201", "I could not find it").unwrap());
        assert!(!g.grade("q", "93177201", "").unwrap());
    }

    #[test]
    fn verdict_parsing_takes_the_last_boxed_answer() {
        assert_eq!(parse_verdict(r"\boxed{True}"), Some(true));
        assert_eq!(parse_verdict(r"maybe \boxed{False}... no, \boxed{true}"), Some(true));
        assert_eq!(parse_verdict("boxed{FALSE}"), Some(false));
        assert_eq!(parse_verdict(r"\boxed{maybe}"), None);
        assert_eq!(parse_verdict("True"), None);
    }

    fn fast_endpoint(base: &str) -> RemoteEndpoint {
        let mut e = RemoteEndpoint::new(base, "judge-model");
        e.retry_backoff = Duration::from_millis(1);
        e.timeout = Duration::from_secs(5);
        e
    }

    #[test]
    fn judge_grader_round_trips_the_prompt_and_verdict() {
        let (base, handle) = stub_server(vec![(
            200,
            text_completion_json(r"Comparing both answers... \boxed{True}"),
        )]);
        let mut judge = JudgeGrader::new(fast_endpoint(&base));
        assert!(judge.grade("Who wrote it?", "Borges", "J. L. Borges").unwrap());
        let seen = handle.join().unwrap();
        let body: Value = serde_json::from_str(&seen[0].body).unwrap();
        let prompt = body["messages"][0]["content"].as_str().unwrap();
        assert!(prompt.contains("Who wrote it?"));
        assert!(prompt.contains("Borges"));
        assert_eq!(body["temperature"], 0.0);
    }

    #[test]
    fn unreachable_judge_is_unavailable_not_a_silent_fail() {
        // Nothing listens on this endpoint; refusal must surface as an error.
        let mut e = fast_endpoint("http://127.0.0.1:9");
        e.max_attempts = 2;
        let err = JudgeGrader::new(e).grade("q", "g", "a").unwrap_err();
        assert!(matches!(err, GraderError::Unavailable(_)));
    }

    #[test]
    fn unparseable_verdict_is_unavailable() {
        let (base, _h) = stub_server(vec![(200, text_completion_json("it is correct."))]);
        let err = JudgeGrader::new(fast_endpoint(&base))
            .grade("q", "g", "a")
            .unwrap_err();
        assert!(matches!(err, GraderError::Unavailable(m) if m.contains("boxed")));
    }
}
