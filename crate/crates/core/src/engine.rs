//! The tutoring engine: a data directory plus the immutable snapshots,
//! triple store and answer cache that the CLI, HTTP service and C API share.
//!
//! Data directory layout:
//!
//! ```text
//! kgrag.toml              settings (optional)
//! docs/<doc_id>.txt       ingested documents
//! chunks.csv              chunk table
//! triples.csv             extracted triples and their review state
//! extraction_runs.jsonl   report of the last extraction
//! graph.json              last built knowledge graph
//! cache.jsonl             answer cache
//! costs.csv               per-Q&A provider costs
//! ask_log.jsonl           one line per answered question
//! ```

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard, RwLock};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::cache::{CacheLookup, SemanticCache};
use crate::corpus::Corpus;
use crate::cost::CostModel;
use crate::embedding::Embedder;
use crate::error::{Error, Result};
use crate::extraction::{self, ExtractionPromptTemplate, ExtractionRun};
use crate::generation::{generate, AnswerMode, ChunkRef, NodeRef, Sources};
use crate::kg::{
    build_graph, canonical_entity_key, export_triples_csv, import_triples_csv, BuildOptions, Depth,
    GraphJson, ImportReport, KnowledgeGraph, ReviewFlags, ReviewStatus, Triple, TripleStore,
};
use crate::llm::LlmProvider;
use crate::retrieval::{
    assemble_contexts, kgr_retrieve_embedded, rag_retrieve_embedded, CorpusIndex, ExpandedContext,
    GraphIndex, RetrievalJson, RetrievalParams,
};
use crate::settings::Settings;

const TRIPLES_FILE: &str = "triples.csv";
const RUNS_FILE: &str = "extraction_runs.jsonl";
const GRAPH_FILE: &str = "graph.json";
const CACHE_FILE: &str = "cache.jsonl";
const COSTS_FILE: &str = "costs.csv";
const ASK_LOG_FILE: &str = "ask_log.jsonl";

/// The external services an engine talks to.
#[derive(Clone)]
pub struct Providers {
    pub embedder: Arc<dyn Embedder>,
    pub cache_embedder: Arc<dyn Embedder>,
    pub llm: Arc<dyn LlmProvider>,
    pub extraction_llm: Arc<dyn LlmProvider>,
}

impl Providers {
    pub fn from_settings(settings: &Settings, data_dir: &Path) -> Result<Self> {
        Ok(Self {
            embedder: settings.embedding.build()?,
            cache_embedder: settings.cache.embedding.build()?,
            llm: settings.llm.build(data_dir)?,
            extraction_llm: settings.extraction.llm.build(data_dir)?,
        })
    }
}

/// One consistent view of the corpus and graph. Never mutated; mutations
/// publish a new snapshot.
#[derive(Debug)]
pub struct Snapshot {
    pub corpus: Arc<CorpusIndex>,
    pub graph: Option<Arc<GraphIndex>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AskRequest {
    #[serde(default)]
    pub session_id: String,
    pub query: String,
    #[serde(default = "default_mode")]
    pub mode: AnswerMode,
    #[serde(default = "default_true")]
    pub use_cache: bool,
}

fn default_mode() -> AnswerMode {
    AnswerMode::Kgrag
}

fn default_true() -> bool {
    true
}

impl AskRequest {
    pub fn new(query: impl Into<String>, mode: AnswerMode) -> Self {
        Self {
            session_id: String::new(),
            query: query.into(),
            mode,
            use_cache: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AskResponse {
    pub answer_text: String,
    pub mode: AnswerMode,
    pub cache_hit: bool,
    pub chunk_refs: Vec<ChunkRef>,
    pub node_refs: Vec<NodeRef>,
    pub cost_estimate_usd: f64,
    pub timing_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub doc_ids: Vec<String>,
    pub chunks_added: usize,
    pub document_count: usize,
    pub chunk_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractReport {
    pub runs: usize,
    pub succeeded: usize,
    pub failed: usize,
    pub triples_parsed: usize,
    pub warnings: usize,
    pub pending_triples: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildReport {
    pub nodes: usize,
    pub edges: usize,
    pub built_from: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub version: String,
    pub doc_count: usize,
    pub chunk_count: usize,
    pub graph_built: bool,
    pub node_count: usize,
    pub edge_count: usize,
    pub triple_count: usize,
    pub approved_triples: usize,
    pub cache_size: usize,
}

#[derive(Serialize)]
struct AskLogLine<'a> {
    at: chrono::DateTime<chrono::Utc>,
    session_id: &'a str,
    mode: AnswerMode,
    cache_hit: bool,
    timing_ms: u64,
}

pub struct Engine {
    data_dir: PathBuf,
    settings: Settings,
    providers: Providers,
    costs: CostModel,
    snapshot: RwLock<Arc<Snapshot>>,
    triples: Mutex<TripleStore>,
    cache: RwLock<SemanticCache>,
    mutation: Mutex<()>,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

impl Engine {
    /// Opens (creating if needed) a data directory with providers taken
    /// from its settings file.
    pub fn open(data_dir: impl Into<PathBuf>) -> Result<Self> {
        let data_dir = data_dir.into();
        fs::create_dir_all(&data_dir)?;
        let settings = Settings::load(&data_dir)?;
        let providers = Providers::from_settings(&settings, &data_dir)?;
        Self::open_with(data_dir, settings, providers)
    }

    pub fn open_with(data_dir: impl Into<PathBuf>, settings: Settings, providers: Providers) -> Result<Self> {
        let data_dir = data_dir.into();
        settings.validate()?;
        fs::create_dir_all(&data_dir)?;
        let corpus = Arc::new(Corpus::load(&data_dir, settings.corpus)?);
        let corpus = Arc::new(CorpusIndex::build(corpus, providers.embedder.as_ref())?);
        let graph_path = data_dir.join(GRAPH_FILE);
        let graph = if graph_path.exists() {
            let g = Arc::new(KnowledgeGraph::load(&graph_path)?);
            Some(Arc::new(GraphIndex::build(g, providers.embedder.as_ref())?))
        } else {
            None
        };
        let (triples, row_errors) = TripleStore::load(&data_dir.join(TRIPLES_FILE))?;
        for e in row_errors {
            tracing::warn!("{TRIPLES_FILE} {e}");
        }
        let cache = SemanticCache::load(&data_dir.join(CACHE_FILE), settings.cache.config)?;
        let costs = CostModel::load_or_seed(&data_dir.join(COSTS_FILE))?;
        Ok(Self {
            data_dir,
            settings,
            providers,
            costs,
            snapshot: RwLock::new(Arc::new(Snapshot { corpus, graph })),
            triples: Mutex::new(triples),
            cache: RwLock::new(cache),
            mutation: Mutex::new(()),
        })
    }

    pub fn data_dir(&self) -> &Path {
        &self.data_dir
    }

    pub fn settings(&self) -> &Settings {
        &self.settings
    }

    pub fn costs(&self) -> &CostModel {
        &self.costs
    }

    pub fn snapshot(&self) -> Arc<Snapshot> {
        self.snapshot.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    fn publish(&self, snapshot: Snapshot) {
        *self.snapshot.write().unwrap_or_else(|e| e.into_inner()) = Arc::new(snapshot);
    }

    /// Ingests a file, or every `.txt`/`.md`/`.markdown` file under a
    /// directory.
    pub fn ingest_path(&self, path: &Path) -> Result<IngestReport> {
        let files = if path.is_dir() {
            let mut files = Vec::new();
            collect_text_files(path, &mut files)?;
            files
        } else {
            vec![path.to_path_buf()]
        };
        self.mutate_corpus(|corpus| {
            let mut ids = Vec::new();
            for f in &files {
                ids.push(corpus.ingest_path(f)?);
            }
            Ok(ids)
        })
    }

    pub fn ingest_text(&self, doc_id: &str, text: &str) -> Result<IngestReport> {
        self.mutate_corpus(|corpus| {
            corpus.ingest_text(doc_id, text)?;
            Ok(vec![doc_id.to_string()])
        })
    }

    fn mutate_corpus(&self, f: impl FnOnce(&mut Corpus) -> Result<Vec<String>>) -> Result<IngestReport> {
        let _guard = lock(&self.mutation);
        let current = self.snapshot();
        let mut corpus = Corpus::clone(current.corpus.corpus());
        let doc_ids = f(&mut corpus)?;
        let chunks_added = corpus
            .chunks()
            .iter()
            .filter(|c| doc_ids.contains(&c.doc_id))
            .count();
        corpus.save(&self.data_dir)?;
        let report = IngestReport {
            doc_ids,
            chunks_added,
            document_count: corpus.document_count(),
            chunk_count: corpus.chunks().len(),
        };
        let index = CorpusIndex::build(Arc::new(corpus), self.providers.embedder.as_ref())?;
        self.publish(Snapshot {
            corpus: Arc::new(index),
            graph: current.graph.clone(),
        });
        Ok(report)
    }

    /// Extracts triples from every chunk with the configured extraction
    /// provider.
    pub fn extract(&self) -> Result<ExtractReport> {
        let llm = self.providers.extraction_llm.clone();
        self.extract_with(llm.as_ref())
    }

    /// Runs extraction and records the report. New triples enter the store as
    /// pending, replacing earlier pending triples of the same chunk. When more
    /// than half the chunks fail, the store is left untouched.
    pub fn extract_with(&self, llm: &dyn LlmProvider) -> Result<ExtractReport> {
        let _guard = lock(&self.mutation);
        let template = match &self.settings.extraction.template {
            Some(t) => ExtractionPromptTemplate::new(t.clone())?,
            None => ExtractionPromptTemplate::default(),
        };
        let snapshot = self.snapshot();
        let runs = extraction::run_extraction(snapshot.corpus.corpus().chunks(), llm, &template);
        extraction::write_report(&self.data_dir.join(RUNS_FILE), &runs)?;
        extraction::check_failure_rate(&runs)?;

        let mut store = lock(&self.triples);
        for run in runs.iter().filter(|r| r.succeeded()) {
            store.replace_pending_for_chunk(&run.chunk_id, run.parsed.clone());
        }
        store.save(&self.data_dir.join(TRIPLES_FILE))?;
        Ok(ExtractReport {
            runs: runs.len(),
            succeeded: runs.iter().filter(|r| r.succeeded()).count(),
            failed: runs.iter().filter(|r| !r.succeeded()).count(),
            triples_parsed: runs.iter().map(|r| r.parsed.len()).sum(),
            warnings: runs.iter().map(|r| r.warnings.len()).sum(),
            pending_triples: store.count(ReviewStatus::Pending),
        })
    }

    pub fn extraction_runs(&self) -> Result<Vec<ExtractionRun>> {
        let path = self.data_dir.join(RUNS_FILE);
        if !path.exists() {
            return Ok(Vec::new());
        }
        extraction::read_report(&path)
    }

    pub fn triples(&self) -> Vec<Triple> {
        lock(&self.triples).triples().to_vec()
    }

    pub fn review(&self, id: usize, status: ReviewStatus, flags: ReviewFlags) -> Result<Triple> {
        let _guard = lock(&self.mutation);
        let mut store = lock(&self.triples);
        let triple = store.set_review_status(id, status, flags)?.clone();
        store.save(&self.data_dir.join(TRIPLES_FILE))?;
        Ok(triple)
    }

    pub fn export_triples(&self) -> Result<Vec<u8>> {
        export_triples_csv(lock(&self.triples).triples())
    }

    /// Replaces the triple store with the rows of a triple CSV. Rows that fail
    /// to parse are reported and skipped.
    pub fn import_triples(&self, bytes: &[u8]) -> Result<ImportReport> {
        let _guard = lock(&self.mutation);
        let report = import_triples_csv(bytes)?;
        let mut store = lock(&self.triples);
        *store = TripleStore::new(report.triples.clone());
        store.save(&self.data_dir.join(TRIPLES_FILE))?;
        Ok(report)
    }

    /// Builds the graph from reviewed triples and publishes it atomically.
    pub fn build_graph(&self) -> Result<BuildReport> {
        let _guard = lock(&self.mutation);
        let current = self.snapshot();
        let mut include_status = vec![ReviewStatus::Approved];
        if self.settings.graph.include_pending {
            include_status.push(ReviewStatus::Pending);
        }
        let opts = BuildOptions {
            include_status,
            node_context_cap: self.settings.graph.node_context_cap,
        };
        let triples = lock(&self.triples).triples().to_vec();
        let graph = build_graph(&triples, current.corpus.corpus(), &opts)?;
        let mut warnings = graph.warnings().to_vec();
        if graph.built_from() == 0 {
            warnings.push("no approved triples; the graph is empty".to_string());
        }
        graph.save(&self.data_dir.join(GRAPH_FILE))?;
        let report = BuildReport {
            nodes: graph.nodes().len(),
            edges: graph.edges().len(),
            built_from: graph.built_from(),
            warnings,
        };
        let index = GraphIndex::build(Arc::new(graph), self.providers.embedder.as_ref())?;
        self.publish(Snapshot {
            corpus: current.corpus.clone(),
            graph: Some(Arc::new(index)),
        });
        Ok(report)
    }

    /// Answers a question: cache first (same mode only), then retrieval and
    /// generation against a single snapshot.
    pub fn ask(&self, request: &AskRequest) -> Result<AskResponse> {
        let started = Instant::now();
        let query = request.query.trim();
        if query.is_empty() {
            return Err(Error::InvalidRequest("query must not be empty".into()));
        }
        let snapshot = self.snapshot();
        if request.mode == AnswerMode::Kgrag && snapshot.graph.is_none() {
            return Err(Error::GraphNotBuilt);
        }

        let cache_embedding = if request.use_cache {
            Some(self.providers.cache_embedder.embed(query)?)
        } else {
            None
        };
        if let Some(embedding) = &cache_embedding {
            let cache = self.cache.read().unwrap_or_else(|e| e.into_inner());
            let found = cache.lookup_embedding_where(embedding, |e| e.answer.mode == request.mode);
            if let CacheLookup::Hit { answer, .. } = found {
                return Ok(self.respond(request, answer, true, started));
            }
        }

        let sources = Sources {
            corpus: &snapshot.corpus,
            graph: snapshot.graph.as_deref(),
            embedder: self.providers.embedder.as_ref(),
            llm: self.providers.llm.as_ref(),
        };
        let answer = generate(query, request.mode, sources, &self.settings.retrieval)?;
        if let Some(embedding) = cache_embedding {
            let mut cache = self.cache.write().unwrap_or_else(|e| e.into_inner());
            cache.insert(query, embedding, answer.clone());
            cache.save(&self.data_dir.join(CACHE_FILE))?;
        }
        Ok(self.respond(request, answer, false, started))
    }

    fn respond(
        &self,
        request: &AskRequest,
        answer: crate::generation::AnswerRecord,
        cache_hit: bool,
        started: Instant,
    ) -> AskResponse {
        let cost_estimate_usd = match (&self.settings.cost_label, cache_hit) {
            (Some(label), false) => self.costs.per_qa(label).unwrap_or(0.0),
            _ => 0.0,
        };
        let response = AskResponse {
            answer_text: answer.answer_text,
            mode: answer.mode,
            cache_hit,
            chunk_refs: answer.chunk_refs,
            node_refs: answer.node_refs,
            cost_estimate_usd,
            timing_ms: started.elapsed().as_millis() as u64,
        };
        self.log_ask(request, &response);
        response
    }

    fn log_ask(&self, request: &AskRequest, response: &AskResponse) {
        let line = AskLogLine {
            at: chrono::Utc::now(),
            session_id: &request.session_id,
            mode: response.mode,
            cache_hit: response.cache_hit,
            timing_ms: response.timing_ms,
        };
        let written = serde_json::to_string(&line).map_err(Error::from).and_then(|mut s| {
            s.push('\n');
            OpenOptions::new()
                .create(true)
                .append(true)
                .open(self.data_dir.join(ASK_LOG_FILE))?
                .write_all(s.as_bytes())?;
            Ok(())
        });
        if let Err(e) = written {
            tracing::warn!("could not append to {ASK_LOG_FILE}: {e}");
        }
    }

    /// Retrieval only, without calling the LLM. The graph section is
    /// included when a graph has been built.
    pub fn retrieve(&self, query: &str, params: Option<&RetrievalParams>) -> Result<RetrievalJson> {
        let params = params.unwrap_or(&self.settings.retrieval);
        params.validate()?;
        let snapshot = self.snapshot();
        let q = self.providers.embedder.embed(query)?;
        let sim = rag_retrieve_embedded(&q, &snapshot.corpus, params)?;
        let exp = match &snapshot.graph {
            Some(g) if !g.graph().is_empty() => kgr_retrieve_embedded(&q, g, params)?,
            _ => ExpandedContext::default(),
        };
        Ok(RetrievalJson {
            context_text: assemble_contexts(&sim, &exp, params.combined_token_cap),
            chunk_ids: sim.chunk_ids,
            scores: sim.scores,
            node_ids: exp.context_node_ids,
        })
    }

    pub fn graph(&self) -> Option<Arc<KnowledgeGraph>> {
        self.snapshot().graph.as_ref().map(|g| g.graph().clone())
    }

    /// Nodes within `depth` hops of an entity (given by any surface form)
    /// plus the edges among them.
    pub fn neighborhood(&self, entity: &str, depth: Depth) -> Result<GraphJson> {
        let graph = self.graph().ok_or(Error::GraphNotBuilt)?;
        graph.neighborhood(&canonical_entity_key(entity), depth)
    }

    pub fn flush_cache(&self) -> Result<usize> {
        let mut cache = self.cache.write().unwrap_or_else(|e| e.into_inner());
        let dropped = cache.len();
        cache.flush();
        cache.save(&self.data_dir.join(CACHE_FILE))?;
        Ok(dropped)
    }

    pub fn cache_size(&self) -> usize {
        self.cache.read().unwrap_or_else(|e| e.into_inner()).len()
    }

    pub fn health(&self) -> Health {
        let snapshot = self.snapshot();
        let corpus = snapshot.corpus.corpus();
        let graph = snapshot.graph.as_ref().map(|g| g.graph());
        let store = lock(&self.triples);
        Health {
            status: "ok".to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            doc_count: corpus.document_count(),
            chunk_count: corpus.chunks().len(),
            graph_built: graph.is_some(),
            node_count: graph.map_or(0, |g| g.nodes().len()),
            edge_count: graph.map_or(0, |g| g.edges().len()),
            triple_count: store.len(),
            approved_triples: store.count(ReviewStatus::Approved),
            cache_size: self.cache_size(),
        }
    }
}

fn collect_text_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|source| Error::Ingest {
            path: dir.to_path_buf(),
            source,
        })?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    entries.sort();
    for path in entries {
        if path.is_dir() {
            collect_text_files(&path, out)?;
        } else if path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "txt" | "md" | "markdown"))
        {
            out.push(path);
        }
    }
    Ok(())
}
