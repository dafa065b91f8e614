//! Mutable interaction state: the message sequence a policy conditions on,
//! plus the edit operations (append, delete) that evolve it.
//!
//! Deletion never removes a message physically. Everything is retained for
//! replay and training-data construction; deletion only changes how a message
//! serializes:
//!
//! * `Visible` — full text, tool calls included.
//! * `Stubbed` — the whole message renders as `[deleted msg {id}]`.
//! * `ToolcallsStubbed` — assistant text kept, tool-call block dropped.
//!
//! Every mutation is recorded as a [`StateEvent`], so replaying the event log
//! from an empty state reproduces the serialization byte for byte.

mod event;

pub use event::{read_events, write_events, StateEvent};

use serde::{Deserialize, Serialize};

use crate::counter::TokenCounter;
use crate::tools::ToolCall;

pub type MsgId = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
    Tool,
}

impl Role {
    pub fn as_str(&self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
            Role::Tool => "tool",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Visibility {
    Visible,
    Stubbed,
    ToolcallsStubbed,
}

/// How `deleteContext` treats its targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeletionMode {
    /// Replace the whole message with a stub.
    Full,
    /// Drop only the tool-call block of an assistant message; the thought
    /// text stays visible. Valid solely for assistant messages carrying
    /// tool calls.
    ToolcallsOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub msg_id: MsgId,
    pub role: Role,
    pub content: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tool_calls: Vec<ToolCall>,
    /// For tool messages: the call this observation answers. Not rendered in
    /// the text serialization; carried for the chat wire protocol.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub call_id: Option<String>,
    pub visibility: Visibility,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stub_text: Option<String>,
}

/// A message before the state has assigned it an id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MessageDraft {
    pub role: Role,
    pub content: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tool_calls: Vec<ToolCall>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub call_id: Option<String>,
}

impl MessageDraft {
    pub fn user(content: impl Into<String>) -> Self {
        MessageDraft {
            role: Role::User,
            content: content.into(),
            tool_calls: Vec::new(),
            call_id: None,
        }
    }

    pub fn assistant(content: impl Into<String>, tool_calls: Vec<ToolCall>) -> Self {
        MessageDraft {
            role: Role::Assistant,
            content: content.into(),
            tool_calls,
            call_id: None,
        }
    }

    pub fn tool(content: impl Into<String>) -> Self {
        MessageDraft {
            role: Role::Tool,
            content: content.into(),
            tool_calls: Vec::new(),
            call_id: None,
        }
    }

    pub fn system(content: impl Into<String>) -> Self {
        MessageDraft {
            role: Role::System,
            content: content.into(),
            tool_calls: Vec::new(),
            call_id: None,
        }
    }

    pub fn with_call_id(mut self, call_id: impl Into<String>) -> Self {
        self.call_id = Some(call_id.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StateError {
    #[error("unknown msg_id {0}")]
    UnknownMsgId(MsgId),
    #[error("msg_id {0} is protected and cannot be deleted")]
    ProtectedMessage(MsgId),
    #[error("msg_id {0} has no tool-call block to stub")]
    InvalidMode(MsgId),
    #[error("event log assigns msg_id {expected} but replay produced {got}")]
    ReplayOutOfOrder { expected: MsgId, got: MsgId },
}

/// Serialized text plus the byte span each message occupies in it. Spans are
/// what loss masks are built from.
#[derive(Debug, Clone)]
pub struct Rendered {
    pub text: String,
    pub spans: Vec<MsgSpan>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MsgSpan {
    pub msg_id: MsgId,
    pub start: usize,
    pub end: usize,
}

/// Budgets an episode runs under. `rounds_budget` is advisory (reported by
/// `checkBudget`); `max_rounds` is the hard stop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budgets {
    pub token_budget: usize,
    pub rounds_budget: u32,
    pub max_rounds: u32,
}

impl Default for Budgets {
    fn default() -> Self {
        Budgets {
            token_budget: 32_000,
            rounds_budget: 150,
            max_rounds: 200,
        }
    }
}

#[derive(Debug, Clone)]
pub struct InteractionState {
    query: String,
    messages: Vec<Message>,
    round: u32,
    budgets: Budgets,
    first_user: Option<MsgId>,
    events: Vec<StateEvent>,
}

impl InteractionState {
    pub fn new(query: impl Into<String>, budgets: Budgets) -> Self {
        InteractionState {
            query: query.into(),
            messages: Vec::new(),
            round: 0,
            budgets,
            first_user: None,
            events: Vec::new(),
        }
    }

    pub fn query(&self) -> &str {
        &self.query
    }

    pub fn budgets(&self) -> Budgets {
        self.budgets
    }

    /// Number of assistant messages appended so far.
    pub fn round(&self) -> u32 {
        self.round
    }

    pub fn messages(&self) -> &[Message] {
        &self.messages
    }

    pub fn message(&self, id: MsgId) -> Option<&Message> {
        self.messages.get(id as usize)
    }

    /// The id the next appended message will receive.
    pub fn next_msg_id(&self) -> MsgId {
        self.messages.len() as MsgId
    }

    pub fn events(&self) -> &[StateEvent] {
        &self.events
    }

    /// Appends a message, assigning the next id. Ids are dense and strictly
    /// increasing; they are never reused even after deletion.
    pub fn append(&mut self, draft: MessageDraft) -> MsgId {
        let msg_id = self.next_msg_id();
        if draft.role == Role::Assistant {
            self.round += 1;
        }
        if draft.role == Role::User && self.first_user.is_none() {
            self.first_user = Some(msg_id);
        }
        self.events.push(StateEvent::Append {
            msg_id,
            payload: draft.clone(),
        });
        self.messages.push(Message {
            msg_id,
            role: draft.role,
            content: draft.content,
            tool_calls: draft.tool_calls,
            call_id: draft.call_id,
            visibility: Visibility::Visible,
            stub_text: None,
        });
        msg_id
    }

    /// The system message and the original user query must survive every
    /// deletion; without them the remaining context is unanchored.
    pub fn is_protected(&self, id: MsgId) -> bool {
        match self.message(id) {
            Some(m) => m.role == Role::System || Some(id) == self.first_user,
            None => false,
        }
    }

    /// Marks a message deleted. Deleting an already-stubbed message is a
    /// no-op returning `Ok`. A `Full` delete of a `ToolcallsStubbed` message
    /// escalates to a full stub.
    pub fn delete_message(&mut self, id: MsgId, mode: DeletionMode) -> Result<(), StateError> {
        if self.message(id).is_none() {
            return Err(StateError::UnknownMsgId(id));
        }
        if self.is_protected(id) {
            return Err(StateError::ProtectedMessage(id));
        }
        let msg = &mut self.messages[id as usize];
        match mode {
            DeletionMode::Full => {
                if msg.visibility != Visibility::Stubbed {
                    msg.visibility = Visibility::Stubbed;
                    msg.stub_text = Some(format!("[deleted msg {id}]"));
                }
            }
            DeletionMode::ToolcallsOnly => {
                if msg.visibility == Visibility::Stubbed
                    || msg.visibility == Visibility::ToolcallsStubbed
                {
                    // Already pruned at least this far.
                } else if msg.role != Role::Assistant || msg.tool_calls.is_empty() {
                    return Err(StateError::InvalidMode(id));
                } else {
                    msg.visibility = Visibility::ToolcallsStubbed;
                }
            }
        }
        self.events.push(StateEvent::Delete { msg_id: id, mode });
        Ok(())
    }

    /// Deterministic plain-text serialization: the system block first, then
    /// every message in id order. Also returns the byte span each message
    /// rendered into, which downstream loss masks use.
    pub fn render(&self, system_block: &str) -> Rendered {
        let mut text = String::with_capacity(system_block.len() + 256);
        text.push_str(system_block);
        text.push_str("\n\n");
        let mut spans = Vec::with_capacity(self.messages.len());
        for msg in &self.messages {
            let start = text.len();
            render_message(&mut text, msg);
            spans.push(MsgSpan {
                msg_id: msg.msg_id,
                start,
                end: text.len(),
            });
        }
        Rendered { text, spans }
    }

    pub fn serialize(&self, system_block: &str) -> String {
        self.render(system_block).text
    }

    /// Token count of the serialized visible state under `counter`. Stub
    /// text counts: the stub occupies context like any other text.
    pub fn visible_tokens(&self, counter: &TokenCounter, system_block: &str) -> usize {
        counter.count(&self.serialize(system_block))
    }

    /// Rebuilds a state by replaying an event log from empty. Append events
    /// must carry the ids the replay assigns, in order.
    pub fn replay(
        query: impl Into<String>,
        budgets: Budgets,
        events: &[StateEvent],
    ) -> Result<Self, StateError> {
        let mut state = InteractionState::new(query, budgets);
        for ev in events {
            match ev {
                StateEvent::Append { msg_id, payload } => {
                    let got = state.append(payload.clone());
                    if got != *msg_id {
                        return Err(StateError::ReplayOutOfOrder {
                            expected: *msg_id,
                            got,
                        });
                    }
                }
                StateEvent::Delete { msg_id, mode } => {
                    state.delete_message(*msg_id, *mode)?;
                }
            }
        }
        Ok(state)
    }
}

/// One message's segment. The segment always ends with a blank line, so the
/// serialization of `state + message` is exactly the serialization of
/// `state` followed by the new segment.
fn render_message(out: &mut String, msg: &Message) {
    match msg.visibility {
        Visibility::Stubbed => {
            // Single newline, not a blank line: the stub segment must never
            // be longer than the shortest possible original segment (an
            // empty user message), or deletion could grow the char count.
            out.push_str(msg.stub_text.as_deref().unwrap_or("[deleted msg ?]"));
            out.push('\n');
        }
        Visibility::Visible | Visibility::ToolcallsStubbed => {
            out.push_str(&format!("[msg {}] {}:\n", msg.msg_id, msg.role.as_str()));
            out.push_str(&msg.content);
            out.push('\n');
            if msg.visibility == Visibility::Visible {
                for call in &msg.tool_calls {
                    out.push_str(&format!(
                        "[tool_call] {} {}\n",
                        call.name.as_str(),
                        call.args
                    ));
                }
            }
            out.push('\n');
        }
    }
}
