//! Chat-history reuse: answers to earlier questions are returned again when a
//! new question embeds close enough to an old one.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::embedding::{cosine_similarity, Embedder, EmbeddingVector};
use crate::error::{Error, Result};
use crate::generation::AnswerRecord;

/// Cosines this close to the threshold count as reaching it.
pub const SCORE_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CacheConfig {
    pub threshold: f64,
    pub capacity: usize,
}

impl Default for CacheConfig {
    fn default() -> Self {
        Self {
            threshold: 0.85,
            capacity: 1024,
        }
    }
}

impl CacheConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Config(format!(
                "cache threshold must be within [0, 1], got {}",
                self.threshold
            )));
        }
        if self.capacity == 0 {
            return Err(Error::Config("cache capacity must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug)]
pub struct ChatCacheEntry {
    pub query_text: String,
    pub query_embedding: EmbeddingVector,
    pub answer: AnswerRecord,
    pub created_at: DateTime<Utc>,
    hits: AtomicU64,
    last_used: AtomicU64,
}

impl ChatCacheEntry {
    pub fn hits(&self) -> u64 {
        self.hits.load(Ordering::Relaxed)
    }

    fn recency(&self) -> u64 {
        self.last_used.load(Ordering::Relaxed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CacheLookup {
    /// `answer` is the stored record with `cache_hit` set.
    Hit {
        answer: AnswerRecord,
        score: f64,
        matched_query: String,
    },
    /// `best_score` is `None` when nothing comparable is cached.
    Miss { best_score: Option<f64> },
}

impl CacheLookup {
    pub fn is_hit(&self) -> bool {
        matches!(self, CacheLookup::Hit { .. })
    }
}

#[derive(Serialize, Deserialize)]
struct EntryLine {
    query: String,
    embedding: EmbeddingVector,
    answer: AnswerRecord,
    created_at: DateTime<Utc>,
    #[serde(default)]
    hits: u64,
}

/// Linear-scan semantic cache with least-recently-used eviction. Lookups
/// take `&self`: recency and hit counters are atomics, so a shared lock is
/// enough for readers.
#[derive(Debug, Default)]
pub struct SemanticCache {
    config: CacheConfig,
    entries: Vec<ChatCacheEntry>,
    clock: AtomicU64,
}

impl SemanticCache {
    pub fn new(config: CacheConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            ..Self::default()
        })
    }

    pub fn config(&self) -> &CacheConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[ChatCacheEntry] {
        &self.entries
    }

    fn tick(&self) -> u64 {
        self.clock.fetch_add(1, Ordering::Relaxed) + 1
    }

    pub fn lookup(&self, query: &str, embedder: &dyn Embedder) -> Result<CacheLookup> {
        Ok(self.lookup_embedding(&embedder.embed(query)?))
    }

    /// Hit iff the best cosine reaches the threshold. Equal scores prefer the
    /// most recently used entry. Entries of another dimension are ignored.
    pub fn lookup_embedding(&self, query: &EmbeddingVector) -> CacheLookup {
        self.lookup_embedding_where(query, |_| true)
    }

    /// Like [`SemanticCache::lookup_embedding`], restricted to entries
    /// accepted by `filter`.
    pub fn lookup_embedding_where(
        &self,
        query: &EmbeddingVector,
        filter: impl Fn(&ChatCacheEntry) -> bool,
    ) -> CacheLookup {
        let mut best: Option<(f64, &ChatCacheEntry)> = None;
        for entry in self.entries.iter().filter(|e| filter(e)) {
            let Ok(score) = cosine_similarity(query, &entry.query_embedding) else {
                continue;
            };
            let better = match best {
                None => true,
                Some((s, e)) => score > s || (score == s && entry.recency() > e.recency()),
            };
            if better {
                best = Some((score, entry));
            }
        }
        match best {
            Some((score, entry)) if score + SCORE_EPSILON >= self.config.threshold => {
                entry.last_used.store(self.tick(), Ordering::Relaxed);
                entry.hits.fetch_add(1, Ordering::Relaxed);
                let mut answer = entry.answer.clone();
                answer.cache_hit = true;
                CacheLookup::Hit {
                    answer,
                    score,
                    matched_query: entry.query_text.clone(),
                }
            }
            other => CacheLookup::Miss {
                best_score: other.map(|(s, _)| s),
            },
        }
    }

    pub fn insert(&mut self, query: &str, embedding: EmbeddingVector, answer: AnswerRecord) {
        self.insert_entry(query.to_string(), embedding, answer, Utc::now(), 0);
    }

    fn insert_entry(
        &mut self,
        query_text: String,
        query_embedding: EmbeddingVector,
        mut answer: AnswerRecord,
        created_at: DateTime<Utc>,
        hits: u64,
    ) {
        answer.cache_hit = false;
        let tick = self.tick();
        self.entries.push(ChatCacheEntry {
            query_text,
            query_embedding,
            answer,
            created_at,
            hits: AtomicU64::new(hits),
            last_used: AtomicU64::new(tick),
        });
        while self.entries.len() > self.config.capacity {
            let (oldest, _) = self
                .entries
                .iter()
                .enumerate()
                .min_by_key(|(_, e)| e.recency())
                .expect("non-empty");
            self.entries.remove(oldest);
        }
    }

    pub fn flush(&mut self) {
        self.entries.clear();
    }

    /// Writes JSON lines, least recently used first, so loading restores
    /// the recency order.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut ordered: Vec<&ChatCacheEntry> = self.entries.iter().collect();
        ordered.sort_by_key(|e| e.recency());
        let mut out = Vec::new();
        for e in ordered {
            serde_json::to_writer(
                &mut out,
                &EntryLine {
                    query: e.query_text.clone(),
                    embedding: e.query_embedding.clone(),
                    answer: e.answer.clone(),
                    created_at: e.created_at,
                    hits: e.hits(),
                },
            )?;
            out.write_all(b"\n")?;
        }
        let tmp = path.with_extension("jsonl.tmp");
        fs::write(&tmp, out)?;
        fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path, config: CacheConfig) -> Result<Self> {
        let mut cache = Self::new(config)?;
        if !path.exists() {
            return Ok(cache);
        }
        for line in fs::read_to_string(path)?.lines().filter(|l| !l.trim().is_empty()) {
            let e: EntryLine = serde_json::from_str(line)?;
            cache.insert_entry(e.query, e.embedding, e.answer, e.created_at, e.hits);
        }
        Ok(cache)
    }
}
