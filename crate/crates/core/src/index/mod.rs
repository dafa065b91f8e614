//! Chunked corpus index: greedy chunking plus a BM25 inverted index.
//!
//! The index owns its corpus text, serves chunk reads by id, and answers
//! ranked keyword queries. It persists to a versioned JSON sidecar keyed by
//! the corpus content hash, so repeated runs over the same corpus skip the
//! build.

mod bm25;
mod chunker;

pub use bm25::{bm25_tokenize, Bm25Params};
pub use chunker::chunk_corpus;

use std::collections::BTreeMap;
use std::io;
use std::ops::RangeInclusive;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::counter::TokenCounter;

/// Permitted chunk sizes in tokens.
pub const CHUNK_SIZE_RANGE: RangeInclusive<usize> = 512..=12_000;

const SIDECAR_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub chunk_id: usize,
    /// Byte offsets into the corpus, always on character boundaries.
    pub start: usize,
    pub end: usize,
    pub token_count: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum IndexError {
    #[error("chunk_size {0} outside permitted range 512..=12000")]
    InvalidChunkSize(usize),
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("chunk_id {0} does not exist")]
    UnknownChunk(usize),
    #[error("sidecar version {found} unsupported (expected {SIDECAR_VERSION})")]
    Version { found: u32 },
    #[error("sidecar was built from a different corpus (hash mismatch)")]
    CorpusHashMismatch,
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Hex SHA-256 of the corpus bytes; the cache key for sidecars.
pub fn corpus_hash(corpus: &str) -> String {
    let digest = Sha256::digest(corpus.as_bytes());
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Posting {
    chunk_id: usize,
    tf: u32,
}

#[derive(Debug, Clone)]
pub struct ChunkIndex {
    corpus: Arc<str>,
    corpus_sha256: String,
    chunk_size: usize,
    counter_scheme: String,
    chunks: Vec<Chunk>,
    params: Bm25Params,
    /// term -> postings sorted by chunk_id (build order guarantees it).
    postings: BTreeMap<String, Vec<Posting>>,
    /// BM25 document lengths: term occurrences per chunk.
    doc_lens: Vec<usize>,
    avgdl: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchHit {
    pub chunk_id: usize,
    pub score: f64,
}

impl ChunkIndex {
    pub fn build(
        corpus: impl Into<Arc<str>>,
        chunk_size: usize,
        counter: &TokenCounter,
    ) -> Result<Self, IndexError> {
        Self::build_with_params(corpus, chunk_size, counter, Bm25Params::default())
    }

    pub fn build_with_params(
        corpus: impl Into<Arc<str>>,
        chunk_size: usize,
        counter: &TokenCounter,
        params: Bm25Params,
    ) -> Result<Self, IndexError> {
        let corpus: Arc<str> = corpus.into();
        if corpus.is_empty() {
            return Err(IndexError::EmptyCorpus);
        }
        let chunks = chunk_corpus(&corpus, chunk_size, counter)?;
        let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
        let mut doc_lens = Vec::with_capacity(chunks.len());
        for chunk in &chunks {
            let mut tfs: BTreeMap<String, u32> = BTreeMap::new();
            let mut len = 0usize;
            for term in bm25_tokenize(&corpus[chunk.start..chunk.end]) {
                *tfs.entry(term).or_insert(0) += 1;
                len += 1;
            }
            doc_lens.push(len);
            for (term, tf) in tfs {
                postings.entry(term).or_default().push(Posting {
                    chunk_id: chunk.chunk_id,
                    tf,
                });
            }
        }
        let avgdl = if chunks.is_empty() {
            0.0
        } else {
            doc_lens.iter().sum::<usize>() as f64 / chunks.len() as f64
        };
        Ok(ChunkIndex {
            corpus_sha256: corpus_hash(&corpus),
            corpus,
            chunk_size,
            counter_scheme: counter.scheme_name().to_string(),
            chunks,
            params,
            postings,
            doc_lens,
            avgdl,
        })
    }

    pub fn corpus(&self) -> &str {
        &self.corpus
    }

    pub fn corpus_sha256(&self) -> &str {
        &self.corpus_sha256
    }

    pub fn chunk_size(&self) -> usize {
        self.chunk_size
    }

    pub fn counter_scheme(&self) -> &str {
        &self.counter_scheme
    }

    pub fn chunks(&self) -> &[Chunk] {
        &self.chunks
    }

    pub fn chunk(&self, chunk_id: usize) -> Result<&Chunk, IndexError> {
        self.chunks
            .get(chunk_id)
            .ok_or(IndexError::UnknownChunk(chunk_id))
    }

    pub fn chunk_text(&self, chunk_id: usize) -> Result<&str, IndexError> {
        let c = self.chunk(chunk_id)?;
        Ok(&self.corpus[c.start..c.end])
    }

    fn df(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, |p| p.len())
    }

    /// `ln(1 + (N - n + 0.5) / (n + 0.5))`, always positive.
    pub fn idf(&self, term: &str) -> f64 {
        let n = self.df(term) as f64;
        let total = self.chunks.len() as f64;
        (1.0 + (total - n + 0.5) / (n + 0.5)).ln()
    }

    fn tf_in(&self, term: &str, chunk_id: usize) -> u32 {
        self.postings
            .get(term)
            .and_then(|p| {
                p.binary_search_by_key(&chunk_id, |e| e.chunk_id)
                    .ok()
                    .map(|i| p[i].tf)
            })
            .unwrap_or(0)
    }

    fn term_contribution(&self, term: &str, tf: u32, chunk_id: usize) -> f64 {
        if tf == 0 {
            return 0.0;
        }
        let Bm25Params { k1, b } = self.params;
        let tf = tf as f64;
        let dl = self.doc_lens[chunk_id] as f64;
        let norm = tf + k1 * (1.0 - b + b * dl / self.avgdl);
        self.idf(term) * (tf * (k1 + 1.0)) / norm
    }

    /// BM25 score of one chunk for a raw query string. Query terms are taken
    /// as a sequence: a term appearing twice contributes twice.
    pub fn bm25_score(&self, query: &str, chunk_id: usize) -> Result<f64, IndexError> {
        if chunk_id >= self.chunks.len() {
            return Err(IndexError::UnknownChunk(chunk_id));
        }
        let mut score = 0.0;
        for term in bm25_tokenize(query) {
            score += self.term_contribution(&term, self.tf_in(&term, chunk_id), chunk_id);
        }
        Ok(score)
    }

    /// The `k` best-scoring chunks, descending score, ties broken by lower
    /// chunk_id. Chunks scoring zero (no query term present) are not hits.
    pub fn top_k(&self, query: &str, k: usize) -> Vec<SearchHit> {
        if self.avgdl == 0.0 || k == 0 {
            return Vec::new();
        }
        // Accumulate per-chunk sums in query-term order so floating-point
        // addition order matches a per-chunk scan of the same formula.
        let mut scores: BTreeMap<usize, f64> = BTreeMap::new();
        for term in bm25_tokenize(query) {
            if let Some(postings) = self.postings.get(&term) {
                for p in postings {
                    *scores.entry(p.chunk_id).or_insert(0.0) +=
                        self.term_contribution(&term, p.tf, p.chunk_id);
                }
            }
        }
        let mut hits: Vec<SearchHit> = scores
            .into_iter()
            .filter(|(_, s)| *s > 0.0)
            .map(|(chunk_id, score)| SearchHit { chunk_id, score })
            .collect();
        hits.sort_by(|a, b| {
            b.score
                .partial_cmp(&a.score)
                .expect("BM25 scores are finite")
                .then(a.chunk_id.cmp(&b.chunk_id))
        });
        hits.truncate(k);
        hits
    }

    /// Writes a self-contained sidecar next to nothing in particular; the
    /// caller picks the path (conventionally `{corpus_hash}-{chunk_size}.idx.json`).
    pub fn save(&self, path: &Path) -> Result<(), IndexError> {
        let file = SidecarFile {
            version: SIDECAR_VERSION,
            corpus_sha256: self.corpus_sha256.clone(),
            chunk_size: self.chunk_size,
            counter_scheme: self.counter_scheme.clone(),
            k1: self.params.k1,
            b: self.params.b,
            chunks: self.chunks.clone(),
            postings: self.postings.clone(),
            doc_lens: self.doc_lens.clone(),
        };
        let json = serde_json::to_string(&file)?;
        std::fs::write(path, json)?;
        Ok(())
    }

    /// Loads a sidecar and re-attaches the corpus text, verifying the content
    /// hash so a stale sidecar can never serve wrong chunks.
    pub fn load(path: &Path, corpus: impl Into<Arc<str>>) -> Result<Self, IndexError> {
        let corpus: Arc<str> = corpus.into();
        let file: SidecarFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if file.version != SIDECAR_VERSION {
            return Err(IndexError::Version {
                found: file.version,
            });
        }
        if file.corpus_sha256 != corpus_hash(&corpus) {
            return Err(IndexError::CorpusHashMismatch);
        }
        let avgdl = if file.chunks.is_empty() {
            0.0
        } else {
            file.doc_lens.iter().sum::<usize>() as f64 / file.chunks.len() as f64
        };
        Ok(ChunkIndex {
            corpus,
            corpus_sha256: file.corpus_sha256,
            chunk_size: file.chunk_size,
            counter_scheme: file.counter_scheme,
            chunks: file.chunks,
            params: Bm25Params {
                k1: file.k1,
                b: file.b,
            },
            postings: file.postings,
            doc_lens: file.doc_lens,
            avgdl,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct SidecarFile {
    version: u32,
    corpus_sha256: String,
    chunk_size: usize,
    counter_scheme: String,
    k1: f64,
    b: f64,
    chunks: Vec<Chunk>,
    postings: BTreeMap<String, Vec<Posting>>,
    doc_lens: Vec<usize>,
}

/// Process-wide cache so concurrent episodes over the same corpus share one
/// immutable index instead of rebuilding per episode.
#[derive(Debug, Default)]
pub struct IndexCache {
    inner: std::sync::Mutex<std::collections::HashMap<(String, usize, String), Arc<ChunkIndex>>>,
}

impl IndexCache {
    pub fn get_or_build(
        &self,
        corpus: &Arc<str>,
        chunk_size: usize,
        counter: &TokenCounter,
    ) -> Result<Arc<ChunkIndex>, IndexError> {
        let key = (
            corpus_hash(corpus),
            chunk_size,
            counter.scheme_name().to_string(),
        );
        if let Some(hit) = self.inner.lock().unwrap().get(&key) {
            return Ok(Arc::clone(hit));
        }
        // Built outside the lock: index construction over a multi-megabyte
        // corpus must not serialize every other episode.
        let built = Arc::new(ChunkIndex::build(Arc::clone(corpus), chunk_size, counter)?);
        let mut map = self.inner.lock().unwrap();
        let entry = map.entry(key).or_insert_with(|| Arc::clone(&built));
        Ok(Arc::clone(entry))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ws() -> TokenCounter {
        TokenCounter::Whitespace
    }

    fn para(words: &[&str], reps: usize) -> String {
        let mut out = Vec::new();
        for _ in 0..reps {
            out.extend(words.iter().copied());
        }
        out.join(" ")
    }

    /// Corpus whose paragraphs each exceed half the minimum chunk size, so
    /// every paragraph lands in its own chunk.
    fn one_para_per_chunk(paras: &[String]) -> String {
        paras.join("\n\n")
    }

    #[test]
    fn build_rejects_empty_corpus() {
        assert!(matches!(
            ChunkIndex::build("", 1024, &ws()),
            Err(IndexError::EmptyCorpus)
        ));
    }

    #[test]
    fn single_chunk_single_term_score_matches_formula() {
        // One chunk "alpha beta beta": N=1, df(beta)=1, tf=2, dl=3, avgdl=3.
        let idx = ChunkIndex::build("alpha beta beta", 512, &ws()).unwrap();
        assert_eq!(idx.chunks().len(), 1);
        let idf = (1.0f64 + (1.0 - 1.0 + 0.5) / (1.0 + 0.5)).ln();
        let tf_norm = (2.0 * 2.2) / (2.0 + 1.2 * (1.0 - 0.75 + 0.75 * 1.0));
        let expected = idf * tf_norm;
        let got = idx.bm25_score("beta", 0).unwrap();
        assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
        let hits = idx.top_k("beta", 5);
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].chunk_id, 0);
        assert!((hits[0].score - expected).abs() < 1e-12);
    }

    #[test]
    fn duplicate_chunks_tie_break_by_lower_id() {
        let p = para(&["match", "filler", "words", "here"], 80);
        let corpus = one_para_per_chunk(&[p.clone(), p.clone(), p]);
        let idx = ChunkIndex::build(corpus, 512, &ws()).unwrap();
        assert_eq!(idx.chunks().len(), 3);
        let hits = idx.top_k("match", 2);
        assert_eq!(hits.len(), 2);
        assert_eq!((hits[0].chunk_id, hits[1].chunk_id), (0, 1));
        assert_eq!(hits[0].score, hits[1].score);
    }

    #[test]
    fn absent_terms_produce_no_hits() {
        let idx = ChunkIndex::build(para(&["alpha", "beta"], 40), 512, &ws()).unwrap();
        assert!(idx.top_k("zeta", 10).is_empty());
    }

    #[test]
    fn k_beyond_matches_returns_all_ranked() {
        let a = para(&["shared", "alpha"], 150);
        let b = para(&["shared", "beta"], 150);
        let idx = ChunkIndex::build(one_para_per_chunk(&[a, b]), 512, &ws()).unwrap();
        assert_eq!(idx.chunks().len(), 2);
        let hits = idx.top_k("shared", 99);
        assert_eq!(hits.len(), 2);
        assert!(hits[0].score >= hits[1].score);
    }

    #[test]
    fn repeated_query_terms_contribute_per_occurrence() {
        let idx = ChunkIndex::build("alpha beta beta", 512, &ws()).unwrap();
        let once = idx.bm25_score("beta", 0).unwrap();
        let twice = idx.bm25_score("beta beta", 0).unwrap();
        assert!((twice - 2.0 * once).abs() < 1e-12);
    }

    #[test]
    fn tokenization_is_lowercase_alnum_runs() {
        let idx = ChunkIndex::build("Alpha-BETA, gamma42 x", 512, &ws()).unwrap();
        assert!(idx.top_k("ALPHA", 5).len() == 1);
        assert!(idx.top_k("beta", 5).len() == 1);
        assert!(idx.top_k("gamma42", 5).len() == 1);
        // "gamma" alone is a different term than "gamma42": no stemming.
        assert!(idx.top_k("gamma", 5).is_empty());
    }

    #[test]
    fn sidecar_round_trips_and_verifies_hash() {
        let corpus = para(&["alpha", "beta", "gamma"], 60);
        let idx = ChunkIndex::build(corpus.clone(), 512, &ws()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir
            .path()
            .join(format!("{}-512.idx.json", idx.corpus_sha256()));
        idx.save(&path).unwrap();

        let loaded = ChunkIndex::load(&path, corpus.clone()).unwrap();
        assert_eq!(loaded.chunks(), idx.chunks());
        assert_eq!(loaded.top_k("beta", 3), idx.top_k("beta", 3));

        let other = para(&["different", "text"], 60);
        assert!(matches!(
            ChunkIndex::load(&path, other),
            Err(IndexError::CorpusHashMismatch)
        ));
    }

    #[test]
    fn sidecar_version_is_checked() {
        let corpus = para(&["alpha"], 40);
        let idx = ChunkIndex::build(corpus.clone(), 512, &ws()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("idx.json");
        idx.save(&path).unwrap();
        let mut raw: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        raw["version"] = serde_json::json!(99);
        std::fs::write(&path, serde_json::to_string(&raw).unwrap()).unwrap();
        assert!(matches!(
            ChunkIndex::load(&path, corpus),
            Err(IndexError::Version { found: 99 })
        ));
    }
}
