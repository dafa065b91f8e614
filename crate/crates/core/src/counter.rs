//! Token counting schemes used for budget enforcement and chunk sizing.
//!
//! Counts approximate a model tokenizer. Every scheme must be deterministic
//! and monotone under concatenation: `count(a + b) >= max(count(a), count(b))`.

use std::fmt;
use std::sync::Arc;

/// Counting scheme applied to serialized text.
#[derive(Clone, Default)]
pub enum TokenCounter {
    /// Whitespace-delimited word count. Default for tests and synthetic corpora.
    #[default]
    Whitespace,
    /// `ceil(chars / 4)`, a crude length approximation.
    CharsDiv4,
    /// Caller-provided counter, e.g. a real tokenizer behind FFI.
    External(Arc<dyn Fn(&str) -> usize + Send + Sync>),
}

impl TokenCounter {
    pub fn count(&self, text: &str) -> usize {
        match self {
            TokenCounter::Whitespace => text.split_whitespace().count(),
            TokenCounter::CharsDiv4 => text.chars().count().div_ceil(4),
            TokenCounter::External(f) => f(text),
        }
    }

    /// Stable name used in manifests and trajectory files.
    pub fn scheme_name(&self) -> &'static str {
        match self {
            TokenCounter::Whitespace => "whitespace",
            TokenCounter::CharsDiv4 => "chars_div4",
            TokenCounter::External(_) => "external",
        }
    }

    /// Parses a scheme name; external counters cannot be named into existence.
    pub fn from_scheme_name(name: &str) -> Option<Self> {
        match name {
            "whitespace" => Some(TokenCounter::Whitespace),
            "chars_div4" => Some(TokenCounter::CharsDiv4),
            _ => None,
        }
    }
}


impl fmt::Debug for TokenCounter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.scheme_name())
    }
}
