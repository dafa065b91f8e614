//! Policies: the decision side of an episode. A policy sees the serialized
//! state and the tool manifest, and returns one thought plus one tool call
//! per round. Shipped implementations: a deterministic scripted baseline for
//! benchmarks ([`OraclePolicy`]) and an HTTP client for chat-completions
//! endpoints ([`RemotePolicy`]).

mod oracle;
mod prompts;
pub(crate) mod remote;
mod wire;

pub use oracle::{OraclePlan, OraclePolicy, PlanError, Strategy};
pub use prompts::{
    render_judge_prompt, system_preset, AGENTIC_SYSTEM_PROMPT, JUDGE_PROMPT_TEMPLATE,
    STATE_SYSTEM_PROMPT,
};
pub use remote::{RemoteEndpoint, RemotePolicy, SamplingParams, SecretToken};
pub use wire::{from_wire, parse_completion, to_wire, WireError, WireMessage};
