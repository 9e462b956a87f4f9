//! Similarity retrieval over chunks and knowledge-guided retrieval over the
//! graph, plus assembly of the two contexts into one prompt section.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::corpus::{token_count, truncate_to_tokens, Corpus};
use crate::embedding::{cosine_similarity, top_k_indices, Embedder, EmbeddingVector};
use crate::error::{Error, Result};
use crate::kg::{Depth, KnowledgeGraph};

pub const SIMILARITY_LABEL: &str = "SIMILARITY CONTEXT:";
pub const GRAPH_LABEL: &str = "RELATED CONCEPTS (KNOWLEDGE GRAPH):";

const MAX_EMBED_WORKERS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrievalParams {
    pub k: usize,
    pub depth: Depth,
    /// Budget for each of the similarity and expanded contexts.
    pub context_token_cap: usize,
    /// Budget for the assembled two-section context.
    pub combined_token_cap: usize,
}

impl Default for RetrievalParams {
    fn default() -> Self {
        Self {
            k: 5,
            depth: Depth::Max,
            context_token_cap: 4000,
            combined_token_cap: 8000,
        }
    }
}

impl RetrievalParams {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("retrieval k must be at least 1".into()));
        }
        if self.context_token_cap == 0 || self.combined_token_cap == 0 {
            return Err(Error::Config("context token caps must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SimilarityContext {
    pub chunk_ids: Vec<String>,
    pub scores: Vec<f64>,
    pub text: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpandedContext {
    pub seed_node_ids: Vec<String>,
    /// Full traversal, before any token cap.
    pub traversed_node_ids: Vec<String>,
    /// Nodes whose context made it into `text`, in traversal order.
    pub context_node_ids: Vec<String>,
    pub text: String,
}

/// Retrieval output in the shape the service returns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalJson {
    pub chunk_ids: Vec<String>,
    pub scores: Vec<f64>,
    pub node_ids: Vec<String>,
    pub context_text: String,
}

/// Embeds texts with up to `embedder.max_in_flight()` calls at once.
pub fn embed_all(embedder: &dyn Embedder, texts: &[&str]) -> Result<Vec<EmbeddingVector>> {
    let workers = embedder.max_in_flight().min(MAX_EMBED_WORKERS).min(texts.len());
    if workers <= 1 {
        return texts.iter().map(|t| embedder.embed(t)).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<EmbeddingVector>>>> =
        Mutex::new((0..texts.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(text) = texts.get(i) else { break };
                let v = embedder.embed(text);
                slots.lock().unwrap_or_else(|e| e.into_inner())[i] = Some(v);
            });
        }
    });
    slots
        .into_inner()
        .unwrap_or_else(|e| e.into_inner())
        .into_iter()
        .map(|v| v.expect("every text embedded"))
        .collect()
}

/// A corpus snapshot with one embedding per chunk.
#[derive(Debug, Clone)]
pub struct CorpusIndex {
    corpus: Arc<Corpus>,
    embeddings: Vec<EmbeddingVector>,
}

impl CorpusIndex {
    pub fn build(corpus: Arc<Corpus>, embedder: &dyn Embedder) -> Result<Self> {
        let texts: Vec<&str> = corpus.chunks().iter().map(|c| c.text.as_str()).collect();
        let embeddings = embed_all(embedder, &texts)?;
        Ok(Self { corpus, embeddings })
    }

    pub fn corpus(&self) -> &Arc<Corpus> {
        &self.corpus
    }

    pub fn embeddings(&self) -> &[EmbeddingVector] {
        &self.embeddings
    }
}

/// A graph snapshot with one embedding per node context.
#[derive(Debug, Clone)]
pub struct GraphIndex {
    graph: Arc<KnowledgeGraph>,
    embeddings: Vec<EmbeddingVector>,
}

impl GraphIndex {
    pub fn build(graph: Arc<KnowledgeGraph>, embedder: &dyn Embedder) -> Result<Self> {
        let texts: Vec<&str> = graph.nodes().iter().map(|n| n.context.as_str()).collect();
        let embeddings = embed_all(embedder, &texts)?;
        Ok(Self { graph, embeddings })
    }

    pub fn graph(&self) -> &Arc<KnowledgeGraph> {
        &self.graph
    }
}

fn scores(query: &EmbeddingVector, embeddings: &[EmbeddingVector]) -> Result<Vec<f64>> {
    embeddings.iter().map(|e| cosine_similarity(query, e)).collect()
}

pub fn rag_retrieve(
    query: &str,
    index: &CorpusIndex,
    embedder: &dyn Embedder,
    params: &RetrievalParams,
) -> Result<SimilarityContext> {
    if index.embeddings.is_empty() {
        return Ok(SimilarityContext::default());
    }
    rag_retrieve_embedded(&embedder.embed(query)?, index, params)
}

/// Exhaustive cosine ranking of every chunk; the top `k` are concatenated
/// best first. Lower-ranked chunks are dropped whole to fit the token cap;
/// the best chunk is kept even when it alone exceeds the cap, cut to fit.
pub fn rag_retrieve_embedded(
    query: &EmbeddingVector,
    index: &CorpusIndex,
    params: &RetrievalParams,
) -> Result<SimilarityContext> {
    let scores = scores(query, &index.embeddings)?;
    let chunks = index.corpus.chunks();
    let mut out = SimilarityContext::default();
    let mut parts = Vec::new();
    let mut used = 0;
    for i in top_k_indices(&scores, params.k) {
        let chunk = &chunks[i];
        if parts.is_empty() && chunk.token_count > params.context_token_cap {
            parts.push(truncate_to_tokens(&chunk.text, params.context_token_cap));
        } else if used + chunk.token_count <= params.context_token_cap {
            parts.push(chunk.text.as_str());
        } else {
            break;
        }
        used += chunk.token_count;
        out.chunk_ids.push(chunk.chunk_id.clone());
        out.scores.push(scores[i]);
    }
    out.text = parts.join("\n\n");
    Ok(out)
}

pub fn kgr_retrieve(
    query: &str,
    index: &GraphIndex,
    embedder: &dyn Embedder,
    params: &RetrievalParams,
) -> Result<ExpandedContext> {
    if index.embeddings.is_empty() {
        return Ok(ExpandedContext::default());
    }
    kgr_retrieve_embedded(&embedder.embed(query)?, index, params)
}

/// Picks the top `k` nodes by query/context cosine as seeds, traverses from
/// them and concatenates `## <name>` sections in traversal order. Seeds are
/// always kept; later nodes are dropped from the end to fit the cap.
pub fn kgr_retrieve_embedded(
    query: &EmbeddingVector,
    index: &GraphIndex,
    params: &RetrievalParams,
) -> Result<ExpandedContext> {
    let graph = &index.graph;
    let scores = scores(query, &index.embeddings)?;
    let seeds: Vec<String> = top_k_indices(&scores, params.k)
        .into_iter()
        .map(|i| graph.nodes()[i].node_id.clone())
        .collect();
    let traversed = graph.traverse(&seeds, params.depth)?;

    let mut sections = Vec::new();
    let mut context_ids = Vec::new();
    let mut used = 0;
    for (pos, id) in traversed.iter().enumerate() {
        let node = graph.node(id).expect("traversal yields known nodes");
        let section = format!("## {}\n{}", node.display_name, node.context);
        let tokens = token_count(&section);
        if pos >= seeds.len() && used + tokens > params.context_token_cap {
            break;
        }
        used += tokens;
        sections.push(section);
        context_ids.push(id.clone());
    }
    Ok(ExpandedContext {
        seed_node_ids: seeds,
        traversed_node_ids: traversed,
        context_node_ids: context_ids,
        text: sections.join("\n\n"),
    })
}

/// Labeled similarity section followed by the labeled graph section (omitted
/// when empty). Over the cap, the graph section loses its tail first, then
/// the similarity section.
pub fn assemble_contexts(sim: &SimilarityContext, exp: &ExpandedContext, cap: usize) -> String {
    let sim_section = format!("{SIMILARITY_LABEL}\n{}", sim.text);
    if exp.text.trim().is_empty() {
        return truncate_to_tokens(&sim_section, cap).to_string();
    }
    let exp_section = format!("{GRAPH_LABEL}\n{}", exp.text);
    let sim_tokens = token_count(&sim_section);
    if sim_tokens >= cap {
        return truncate_to_tokens(&sim_section, cap).to_string();
    }
    let remaining = cap - sim_tokens;
    if remaining <= token_count(GRAPH_LABEL) {
        return sim_section;
    }
    format!("{sim_section}\n\n{}", truncate_to_tokens(&exp_section, remaining))
}
