//! Runtime for stateful, self-pruning tool agents over long inputs.
//!
//! The core loop: a policy reads a serialized interaction state, emits one
//! tool action per round, the environment executes it, and the state evolves
//! by appending the action and its observation and then applying any
//! requested deletions. Deleted messages stay in the record as stubs, so the
//! visible context stays under a fixed token budget while the full history
//! remains replayable.
//!
//! Module map:
//!
//! * [`counter`] - token counting schemes.
//! * [`state`] - message state, visibility, serialization, event journal.
//! * [`index`] - corpus chunking and BM25 retrieval.
//! * [`tools`] - the ten-tool surface and its execution environment.
//! * [`engine`] - the episode loop, trajectories, replay.
//! * [`policy`] - scripted and HTTP-backed policies.
//! * [`forge`] - training-data construction: filters, samples, rewards.
//! * [`niah`] - synthetic needle-in-a-haystack benchmark generation.
//! * [`parallel`] - data-parallel map with a sequential fallback.

#![forbid(unsafe_code)]

pub mod counter;
pub mod engine;
pub mod forge;
pub mod index;
pub mod niah;
pub mod parallel;
pub mod policy;
pub mod state;
pub mod tools;

#[cfg(test)]
pub(crate) mod testhttp;

pub use counter::TokenCounter;
pub use state::{Budgets, InteractionState, MsgId};
