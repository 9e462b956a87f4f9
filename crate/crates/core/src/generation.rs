//! Tutor prompts and the three answer modes: LLM only, similarity RAG, and
//! RAG plus knowledge-graph expansion.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::token_count;
use crate::embedding::Embedder;
use crate::error::{Error, Result};
use crate::llm::{LlmProvider, LlmRequest};
use crate::retrieval::{
    assemble_contexts, kgr_retrieve_embedded, rag_retrieve_embedded, CorpusIndex, ExpandedContext,
    GraphIndex, RetrievalParams,
};

pub const TUTOR_TEMPLATE: &str = "You are an expert tutor. Using the following course material: {context}, please answer the student's question: {query}. Explain concepts clearly with detail.";
pub const TUTOR_TEMPLATE_NO_CONTEXT: &str =
    "You are an expert tutor. Please answer the student's question: {query}. Explain concepts clearly with detail.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerMode {
    LlmOnly,
    Rag,
    Kgrag,
}

impl AnswerMode {
    pub const ALL: [AnswerMode; 3] = [AnswerMode::LlmOnly, AnswerMode::Rag, AnswerMode::Kgrag];

    pub fn as_str(self) -> &'static str {
        match self {
            AnswerMode::LlmOnly => "llm_only",
            AnswerMode::Rag => "rag",
            AnswerMode::Kgrag => "kgrag",
        }
    }
}

impl fmt::Display for AnswerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AnswerMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AnswerMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| {
                Error::InvalidRequest(format!(
                    "unknown mode `{s}`; allowed modes: llm_only, rag, kgrag"
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkRef {
    pub chunk_id: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeRef {
    pub node_id: String,
    pub display_name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerRecord {
    pub answer_text: String,
    pub mode: AnswerMode,
    pub chunk_refs: Vec<ChunkRef>,
    pub node_refs: Vec<NodeRef>,
    pub prompt_token_count: usize,
    pub provider_name: String,
    #[serde(default)]
    pub cache_hit: bool,
}

/// Renders the tutor prompt. An empty context selects the shorter template
/// that has no course-material sentence.
pub fn render_tutor_prompt(context: &str, query: &str) -> String {
    if context.trim().is_empty() {
        TUTOR_TEMPLATE_NO_CONTEXT.replacen("{query}", query, 1)
    } else {
        // Split first so braces inside the context are never treated as slots.
        let (head, rest) = TUTOR_TEMPLATE.split_once("{context}").expect("slot");
        let (mid, tail) = rest.split_once("{query}").expect("slot");
        format!("{head}{context}{mid}{query}{tail}")
    }
}

/// Read-only state one answer is produced from.
#[derive(Clone, Copy)]
pub struct Sources<'a> {
    pub corpus: &'a CorpusIndex,
    pub graph: Option<&'a GraphIndex>,
    pub embedder: &'a dyn Embedder,
    pub llm: &'a dyn LlmProvider,
}

pub fn generate(
    query: &str,
    mode: AnswerMode,
    sources: Sources<'_>,
    params: &RetrievalParams,
) -> Result<AnswerRecord> {
    let mut chunk_refs = Vec::new();
    let mut node_refs = Vec::new();
    let context = match mode {
        AnswerMode::LlmOnly => String::new(),
        AnswerMode::Rag | AnswerMode::Kgrag => {
            let graph = match mode {
                AnswerMode::Kgrag => Some(sources.graph.ok_or(Error::GraphNotBuilt)?),
                _ => None,
            };
            let q = sources.embedder.embed(query)?;
            let sim = rag_retrieve_embedded(&q, sources.corpus, params)?;
            let exp = match graph {
                Some(g) if !g.graph().is_empty() => kgr_retrieve_embedded(&q, g, params)?,
                _ => ExpandedContext::default(),
            };
            chunk_refs = sim
                .chunk_ids
                .iter()
                .zip(&sim.scores)
                .map(|(id, &score)| ChunkRef {
                    chunk_id: id.clone(),
                    score,
                })
                .collect();
            if let Some(g) = graph {
                node_refs = exp
                    .context_node_ids
                    .iter()
                    .map(|id| NodeRef {
                        node_id: id.clone(),
                        display_name: g
                            .graph()
                            .node(id)
                            .map(|n| n.display_name.clone())
                            .unwrap_or_default(),
                    })
                    .collect();
            }
            assemble_contexts(&sim, &exp, params.combined_token_cap)
        }
    };
    let prompt = render_tutor_prompt(&context, query);
    let answer_text = sources.llm.complete(&LlmRequest::new(&prompt))?;
    Ok(AnswerRecord {
        answer_text,
        mode,
        chunk_refs,
        node_refs,
        prompt_token_count: token_count(&prompt),
        provider_name: sources.llm.name().to_string(),
        cache_hit: false,
    })
}
