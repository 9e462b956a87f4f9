//! Course documents and their fixed-size token chunks.
//!
//! A token is a maximal run of non-whitespace characters. Chunks are windows
//! over a document's token sequence; with zero overlap they partition it.
//! A chunk's `text` is its tokens joined by single spaces.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_CHUNK_SIZE: usize = 1000;

const CHUNKS_FILE: &str = "chunks.csv";
const DOCS_DIR: &str = "docs";

/// Splits text into whitespace-delimited tokens.
pub fn tokenize(text: &str) -> Vec<&str> {
    text.split_whitespace().collect()
}

pub fn token_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Returns the prefix of `text` ending with its `max_tokens`-th token.
///
/// Whitespace between kept tokens is preserved as-is.
pub fn truncate_to_tokens(text: &str, max_tokens: usize) -> &str {
    if max_tokens == 0 {
        return "";
    }
    let mut seen = 0;
    let mut in_token = false;
    for (i, c) in text.char_indices() {
        if c.is_whitespace() {
            if in_token {
                in_token = false;
                if seen == max_tokens {
                    return &text[..i];
                }
            }
        } else if !in_token {
            in_token = true;
            seen += 1;
        }
    }
    text
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub title: String,
    pub body: String,
}

impl Document {
    /// Builds a document, taking the title from a leading `# ` heading when
    /// there is one and falling back to the id.
    pub fn new(doc_id: impl Into<String>, body: impl Into<String>) -> Self {
        let doc_id = doc_id.into();
        let body = body.into();
        let title = body
            .lines()
            .find(|l| !l.trim().is_empty())
            .and_then(|l| l.trim().strip_prefix("# "))
            .map(|t| t.trim().to_string())
            .unwrap_or_else(|| doc_id.clone());
        Self { doc_id, title, body }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub chunk_id: String,
    pub doc_id: String,
    pub ordinal: usize,
    pub token_count: usize,
    pub text: String,
}

pub fn chunk_id(doc_id: &str, ordinal: usize) -> String {
    format!("{doc_id}_{ordinal:04}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusConfig {
    pub chunk_size: usize,
    pub overlap: usize,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            chunk_size: DEFAULT_CHUNK_SIZE,
            overlap: 0,
        }
    }
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<()> {
        if self.chunk_size == 0 {
            return Err(Error::Config("chunk_size must be at least 1".into()));
        }
        if self.overlap >= self.chunk_size {
            return Err(Error::Config(format!(
                "overlap {} must be smaller than chunk_size {}",
                self.overlap, self.chunk_size
            )));
        }
        Ok(())
    }
}

/// Splits a document into token windows of `cfg.chunk_size` tokens, each
/// starting `chunk_size - overlap` tokens after the previous one.
pub fn chunk_document(doc: &Document, cfg: &CorpusConfig) -> Vec<Chunk> {
    debug_assert!(cfg.validate().is_ok());
    let tokens = tokenize(&doc.body);
    let stride = cfg.chunk_size.saturating_sub(cfg.overlap).max(1);
    let mut chunks = Vec::new();
    let mut start = 0;
    while start < tokens.len() {
        let end = (start + cfg.chunk_size).min(tokens.len());
        let ordinal = chunks.len();
        chunks.push(Chunk {
            chunk_id: chunk_id(&doc.doc_id, ordinal),
            doc_id: doc.doc_id.clone(),
            ordinal,
            token_count: end - start,
            text: tokens[start..end].join(" "),
        });
        if end == tokens.len() {
            break;
        }
        start += stride;
    }
    chunks
}

/// Doc ids double as file names, so they are restricted to a portable set.
pub fn validate_doc_id(doc_id: &str) -> Result<()> {
    let ok = !doc_id.is_empty()
        && !doc_id.starts_with('.')
        && doc_id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidRequest(format!(
            "doc id `{doc_id}` must be non-empty and use only ASCII letters, digits, '-', '_' or '.'"
        )))
    }
}

/// Derives a doc id from a file name: the stem with unsupported characters
/// replaced by `-`.
pub fn doc_id_from_path(path: &Path) -> String {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let id: String = stem
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') {
                c
            } else {
                '-'
            }
        })
        .collect();
    let id = id.trim_start_matches('.').to_string();
    if id.is_empty() {
        "doc".to_string()
    } else {
        id
    }
}

/// The knowledge base: documents plus their chunks, ordered by doc id then
/// ordinal.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    config: CorpusConfig,
    documents: BTreeMap<String, Document>,
    chunks: Vec<Chunk>,
    index: HashMap<String, usize>,
}

impl Corpus {
    pub fn new(config: CorpusConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            ..Self::default()
        })
    }

    pub fn config(&self) -> &CorpusConfig {
        &self.config
    }

    pub fn documents(&self) -> impl Iterator<Item = &Document> {
        self.documents.values()
    }

    pub fn document(&self, doc_id: &str) -> Option<&Document> {
        self.documents.get(doc_id)
    }

    pub fn document_count(&self) -> usize {
        self.documents.len()
    }

    pub fn chunks(&self) -> &[Chunk] {
        &self.chunks
    }

    pub fn chunk(&self, chunk_id: &str) -> Option<&Chunk> {
        self.index.get(chunk_id).map(|&i| &self.chunks[i])
    }

    pub fn chunks_of<'a>(&'a self, doc_id: &'a str) -> impl Iterator<Item = &'a Chunk> + 'a {
        self.chunks.iter().filter(move |c| c.doc_id == doc_id)
    }

    /// Adds or replaces a document and re-chunks it. Returns the number of
    /// chunks produced.
    pub fn ingest(&mut self, doc: Document) -> Result<usize> {
        validate_doc_id(&doc.doc_id)?;
        let new_chunks = chunk_document(&doc, &self.config);
        let produced = new_chunks.len();
        self.chunks.retain(|c| c.doc_id != doc.doc_id);
        self.chunks.extend(new_chunks);
        self.documents.insert(doc.doc_id.clone(), doc);
        self.reindex();
        Ok(produced)
    }

    pub fn ingest_text(&mut self, doc_id: &str, body: &str) -> Result<usize> {
        self.ingest(Document::new(doc_id, body))
    }

    /// Reads a UTF-8 text or markdown file; the doc id comes from the file
    /// stem. Returns the doc id.
    pub fn ingest_path(&mut self, path: &Path) -> Result<String> {
        let bytes = fs::read(path).map_err(|source| Error::Ingest {
            path: path.to_path_buf(),
            source,
        })?;
        let body = String::from_utf8(bytes).map_err(|_| Error::Encoding {
            path: path.to_path_buf(),
        })?;
        let doc_id = doc_id_from_path(path);
        self.ingest(Document::new(doc_id.clone(), body))?;
        Ok(doc_id)
    }

    fn reindex(&mut self) {
        self.chunks
            .sort_by(|a, b| (&a.doc_id, a.ordinal).cmp(&(&b.doc_id, b.ordinal)));
        self.index = self
            .chunks
            .iter()
            .enumerate()
            .map(|(i, c)| (c.chunk_id.clone(), i))
            .collect();
    }

    /// Writes `docs/<doc_id>.txt` and `chunks.csv` under `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let docs_dir = dir.join(DOCS_DIR);
        fs::create_dir_all(&docs_dir)?;
        for entry in fs::read_dir(&docs_dir)? {
            let path = entry?.path();
            let stale = path.extension().is_some_and(|e| e == "txt")
                && path
                    .file_stem()
                    .and_then(|s| s.to_str())
                    .is_none_or(|s| !self.documents.contains_key(s));
            if stale {
                fs::remove_file(path)?;
            }
        }
        for doc in self.documents.values() {
            fs::write(docs_dir.join(format!("{}.txt", doc.doc_id)), &doc.body)?;
        }
        let mut writer = csv::Writer::from_path(dir.join(CHUNKS_FILE))?;
        writer.write_record(["chunk_id", "doc_id", "ordinal", "token_count", "text"])?;
        for c in &self.chunks {
            writer.write_record([
                c.chunk_id.as_str(),
                c.doc_id.as_str(),
                &c.ordinal.to_string(),
                &c.token_count.to_string(),
                c.text.as_str(),
            ])?;
        }
        writer.flush()?;
        Ok(())
    }

    /// Loads a corpus saved by [`Corpus::save`]. A missing directory yields an
    /// empty corpus; documents without rows in `chunks.csv` are re-chunked.
    pub fn load(dir: &Path, config: CorpusConfig) -> Result<Self> {
        let mut corpus = Self::new(config)?;
        let docs_dir = dir.join(DOCS_DIR);
        if !docs_dir.is_dir() {
            return Ok(corpus);
        }
        let mut paths: Vec<PathBuf> = fs::read_dir(&docs_dir)?
            .map(|e| e.map(|e| e.path()))
            .collect::<std::io::Result<_>>()?;
        paths.retain(|p| p.extension().is_some_and(|e| e == "txt"));
        paths.sort();
        for path in paths {
            let body = fs::read(&path).map_err(|source| Error::Ingest {
                path: path.clone(),
                source,
            })?;
            let body = String::from_utf8(body).map_err(|_| Error::Encoding { path: path.clone() })?;
            let doc = Document::new(doc_id_from_path(&path), body);
            corpus.documents.insert(doc.doc_id.clone(), doc);
        }

        let chunks_path = dir.join(CHUNKS_FILE);
        if chunks_path.is_file() {
            let mut reader = csv::Reader::from_path(&chunks_path)?;
            for row in reader.deserialize::<ChunkRow>() {
                let row = row?;
                if corpus.documents.contains_key(&row.doc_id) {
                    corpus.chunks.push(Chunk {
                        chunk_id: row.chunk_id,
                        doc_id: row.doc_id,
                        ordinal: row.ordinal,
                        token_count: row.token_count,
                        text: row.text,
                    });
                }
            }
        }
        let missing: Vec<Document> = corpus
            .documents
            .values()
            .filter(|d| !corpus.chunks.iter().any(|c| c.doc_id == d.doc_id))
            .cloned()
            .collect();
        for doc in missing {
            corpus.chunks.extend(chunk_document(&doc, &corpus.config));
        }
        corpus.reindex();
        Ok(corpus)
    }
}

#[derive(Deserialize)]
struct ChunkRow {
    chunk_id: String,
    doc_id: String,
    ordinal: usize,
    token_count: usize,
    text: String,
}
