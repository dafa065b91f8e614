//! Splits a corpus into contiguous chunks bounded by a token budget.
//!
//! Chunks are byte ranges over the original text: concatenating them in id
//! order reconstructs the corpus exactly. The splitter prefers paragraph
//! boundaries, degrading to sentence, then whitespace, then raw character
//! boundaries only when a single unit alone exceeds the budget.

use std::ops::Range;

use crate::counter::TokenCounter;

use super::{Chunk, IndexError, CHUNK_SIZE_RANGE};

pub fn chunk_corpus(
    corpus: &str,
    chunk_size: usize,
    counter: &TokenCounter,
) -> Result<Vec<Chunk>, IndexError> {
    if !CHUNK_SIZE_RANGE.contains(&chunk_size) {
        return Err(IndexError::InvalidChunkSize(chunk_size));
    }
    if corpus.is_empty() {
        return Ok(Vec::new());
    }

    // Pre-split any unit that alone exceeds the budget down to the finest
    // level that fits, then pack the resulting atoms greedily in order.
    let mut atoms: Vec<Range<usize>> = Vec::new();
    for p in paragraph_spans(corpus) {
        push_atoms(corpus, p, chunk_size, counter, Level::Paragraph, &mut atoms);
    }

    let mut chunks = Vec::new();
    let mut start = 0usize;
    let mut acc = Accumulator::default();
    for atom in &atoms {
        let unit = Accumulator::of(&corpus[atom.clone()]);
        if atom.start == start
            || acc
                .joined(&unit)
                .fits(chunk_size, counter, corpus, start, atom.end)
        {
            acc = acc.joined(&unit);
            continue;
        }
        chunks.push(make_chunk(corpus, chunks.len(), start, atom.start, counter));
        start = atom.start;
        acc = unit;
    }
    if start < corpus.len() {
        chunks.push(make_chunk(corpus, chunks.len(), start, corpus.len(), counter));
    }
    Ok(chunks)
}

fn make_chunk(
    corpus: &str,
    chunk_id: usize,
    start: usize,
    end: usize,
    counter: &TokenCounter,
) -> Chunk {
    Chunk {
        chunk_id,
        start,
        end,
        token_count: counter.count(&corpus[start..end]),
    }
}

/// Additive size measures. Whitespace tokens add exactly across atoms because
/// every atom below ends at a whitespace boundary (or at end of corpus);
/// character counts add unconditionally.
#[derive(Default, Clone, Copy)]
struct Accumulator {
    ws_tokens: usize,
    chars: usize,
}

impl Accumulator {
    fn of(text: &str) -> Self {
        Accumulator {
            ws_tokens: text.split_whitespace().count(),
            chars: text.chars().count(),
        }
    }

    fn joined(&self, other: &Accumulator) -> Accumulator {
        Accumulator {
            ws_tokens: self.ws_tokens + other.ws_tokens,
            chars: self.chars + other.chars,
        }
    }

    fn fits(
        &self,
        chunk_size: usize,
        counter: &TokenCounter,
        corpus: &str,
        start: usize,
        end: usize,
    ) -> bool {
        match counter {
            TokenCounter::Whitespace => self.ws_tokens <= chunk_size,
            TokenCounter::CharsDiv4 => self.chars <= 4 * chunk_size,
            TokenCounter::External(_) => counter.count(&corpus[start..end]) <= chunk_size,
        }
    }
}

#[derive(Clone, Copy)]
enum Level {
    Paragraph,
    Sentence,
    Word,
}

fn push_atoms(
    corpus: &str,
    span: Range<usize>,
    chunk_size: usize,
    counter: &TokenCounter,
    level: Level,
    out: &mut Vec<Range<usize>>,
) {
    if counter.count(&corpus[span.clone()]) <= chunk_size {
        out.push(span);
        return;
    }
    let (finer, next) = match level {
        Level::Paragraph => (sentence_spans(corpus, span.clone()), Level::Sentence),
        Level::Sentence => (word_spans(corpus, span.clone()), Level::Word),
        Level::Word => {
            hard_spans(corpus, span, chunk_size, counter, out);
            return;
        }
    };
    if finer.len() <= 1 {
        // No boundary at this level; try the next one on the whole span.
        let span = finer.into_iter().next().unwrap_or(span);
        push_atoms(corpus, span, chunk_size, counter, next, out);
        return;
    }
    for r in finer {
        push_atoms(corpus, r, chunk_size, counter, next, out);
    }
}

/// Paragraph spans include their trailing blank-line run.
fn paragraph_spans(corpus: &str) -> Vec<Range<usize>> {
    let bytes = corpus.as_bytes();
    let mut spans = Vec::new();
    let mut start = 0usize;
    let mut i = 0usize;
    while i + 1 < bytes.len() {
        if bytes[i] == b'\n' && bytes[i + 1] == b'\n' {
            let mut end = i + 2;
            while end < bytes.len() && bytes[end] == b'\n' {
                end += 1;
            }
            spans.push(start..end);
            start = end;
            i = end;
        } else {
            i += 1;
        }
    }
    if start < corpus.len() {
        spans.push(start..corpus.len());
    }
    spans
}

/// Sentence spans end after the whitespace run following `.`, `!`, or `?`.
/// Terminators not followed by whitespace (decimals, abbreviations glued to
/// text) do not split, which keeps whitespace token counts additive.
fn sentence_spans(corpus: &str, span: Range<usize>) -> Vec<Range<usize>> {
    let text = &corpus[span.clone()];
    let mut spans = Vec::new();
    let mut start = span.start;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if matches!(c, '.' | '!' | '?') {
            if let Some(&(_, next)) = chars.peek() {
                if next.is_whitespace() {
                    let mut end = span.start + i + c.len_utf8();
                    while let Some(&(j, w)) = chars.peek() {
                        if w.is_whitespace() {
                            end = span.start + j + w.len_utf8();
                            chars.next();
                        } else {
                            break;
                        }
                    }
                    spans.push(start..end);
                    start = end;
                }
            }
        }
    }
    if start < span.end {
        spans.push(start..span.end);
    }
    spans
}

/// Word spans are a word plus its trailing whitespace run.
fn word_spans(corpus: &str, span: Range<usize>) -> Vec<Range<usize>> {
    let text = &corpus[span.clone()];
    let mut spans = Vec::new();
    let mut start = span.start;
    let mut in_ws = false;
    for (i, c) in text.char_indices() {
        let ws = c.is_whitespace();
        if in_ws && !ws {
            let end = span.start + i;
            spans.push(start..end);
            start = end;
        }
        in_ws = ws;
    }
    if start < span.end {
        spans.push(start..span.end);
    }
    spans
}

/// Last resort for a single unbreakable unit: bisect at character boundaries
/// until each piece fits the budget (or is a single character).
fn hard_spans(
    corpus: &str,
    span: Range<usize>,
    chunk_size: usize,
    counter: &TokenCounter,
    out: &mut Vec<Range<usize>>,
) {
    let text = &corpus[span.clone()];
    let n_chars = text.chars().count();
    if n_chars <= 1 || counter.count(text) <= chunk_size {
        out.push(span);
        return;
    }
    let mid_char = n_chars / 2;
    let mid = text
        .char_indices()
        .nth(mid_char)
        .map(|(i, _)| span.start + i)
        .unwrap_or(span.end);
    hard_spans(corpus, span.start..mid, chunk_size, counter, out);
    hard_spans(corpus, mid..span.end, chunk_size, counter, out);
}
