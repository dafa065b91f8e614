//! Scripted single-thread HTTP stub for unit tests: serves canned
//! `(status, body)` responses in order, one connection each, and reports the
//! requests it saw.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::thread::{self, JoinHandle};

use serde_json::json;

pub(crate) struct Captured {
    /// Request line + headers, lowercased.
    pub head: String,
    pub body: String,
}

pub(crate) fn stub_server(responses: Vec<(u16, String)>) -> (String, JoinHandle<Vec<Captured>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    let handle = thread::spawn(move || {
        let mut seen = Vec::new();
        for (status, body) in responses {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream);
            let mut head = String::new();
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" || line.is_empty() {
                    break;
                }
                head.push_str(&line);
            }
            let head = head.to_ascii_lowercase();
            let content_length = head
                .lines()
                .find_map(|l| l.strip_prefix("content-length:").map(str::trim))
                .and_then(|v| v.parse::<usize>().ok())
                .unwrap_or(0);
            let mut buf = vec![0u8; content_length];
            reader.read_exact(&mut buf).unwrap();
            seen.push(Captured {
                head,
                body: String::from_utf8(buf).unwrap(),
            });
            let reply = format!(
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            );
            reader.get_mut().write_all(reply.as_bytes()).unwrap();
        }
        seen
    });
    (base, handle)
}

/// Chat-completions body carrying exactly one tool call.
pub(crate) fn completion_json(name: &str, args: &str) -> String {
    json!({
        "choices": [{"message": {
            "role": "assistant",
            "content": "thinking",
            "tool_calls": [{
                "id": "call_srv",
                "type": "function",
                "function": {"name": name, "arguments": args},
            }],
        }}],
    })
    .to_string()
}

/// Chat-completions body with plain text content and no tool calls.
pub(crate) fn text_completion_json(content: &str) -> String {
    json!({
        "choices": [{"message": {"role": "assistant", "content": content}}],
    })
    .to_string()
}
