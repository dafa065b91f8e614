//! Event-sourced journal of state mutations, stored as JSON lines.
//!
//! The journal is the canonical persistence format for an interaction: one
//! object per line, either an append (with full message payload) or a
//! delete (with mode). Replaying the lines in order against an empty state
//! reproduces the live state exactly.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{DeletionMode, MessageDraft, MsgId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum StateEvent {
    Append { msg_id: MsgId, payload: MessageDraft },
    Delete { msg_id: MsgId, mode: DeletionMode },
}

pub fn write_events<W: Write>(mut w: W, events: &[StateEvent]) -> io::Result<()> {
    for ev in events {
        let line = serde_json::to_string(ev)?;
        w.write_all(line.as_bytes())?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_events<R: BufRead>(r: R) -> io::Result<Vec<StateEvent>> {
    let mut events = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        events.push(serde_json::from_str(&line)?);
    }
    Ok(events)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::{Budgets, InteractionState};

    #[test]
    fn journal_round_trips_through_jsonl() {
        let mut s = InteractionState::new("q", Budgets::default());
        s.append(MessageDraft::user("the query"));
        let a = s.append(MessageDraft::assistant("thought", vec![]));
        s.append(MessageDraft::tool("observation text"));
        s.delete_message(a + 1, DeletionMode::Full).unwrap();

        let mut buf = Vec::new();
        write_events(&mut buf, s.events()).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.lines().next().unwrap().contains("\"op\":\"append\""));
        assert!(text.lines().last().unwrap().contains("\"op\":\"delete\""));

        let events = read_events(buf.as_slice()).unwrap();
        assert_eq!(events, s.events());
        let replayed = InteractionState::replay("q", s.budgets(), &events).unwrap();
        assert_eq!(replayed.serialize("sys"), s.serialize("sys"));
    }

    #[test]
    fn wire_format_is_the_documented_shape() {
        let ev = StateEvent::Delete {
            msg_id: 7,
            mode: DeletionMode::ToolcallsOnly,
        };
        assert_eq!(
            serde_json::to_string(&ev).unwrap(),
            r#"{"op":"delete","msg_id":7,"mode":"toolcalls_only"}"#
        );
        let ev = StateEvent::Append {
            msg_id: 0,
            payload: MessageDraft::user("hi"),
        };
        assert_eq!(
            serde_json::to_string(&ev).unwrap(),
            r#"{"op":"append","msg_id":0,"payload":{"role":"user","content":"hi"}}"#
        );
    }

    #[test]
    fn blank_lines_are_skipped_on_read() {
        let text = "\n{\"op\":\"append\",\"msg_id\":0,\"payload\":{\"role\":\"user\",\"content\":\"x\"}}\n\n";
        let events = read_events(text.as_bytes()).unwrap();
        assert_eq!(events.len(), 1);
    }
}
