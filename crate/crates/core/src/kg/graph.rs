use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{canonical_entity_key, Depth, ReviewStatus, Triple};
use crate::corpus::{truncate_to_tokens, Corpus};
use crate::error::{Error, Result};

pub const DEFAULT_NODE_CONTEXT_CAP: usize = 2000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KgNode {
    #[serde(rename = "id")]
    pub node_id: String,
    pub display_name: String,
    pub context: String,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct KgEdge {
    #[serde(rename = "from")]
    pub from_id: String,
    #[serde(rename = "to")]
    pub to_id: String,
    pub predicate: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BuildOptions {
    pub include_status: Vec<ReviewStatus>,
    pub node_context_cap: usize,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self {
            include_status: vec![ReviewStatus::Approved],
            node_context_cap: DEFAULT_NODE_CONTEXT_CAP,
        }
    }
}

/// Wire form shared by the persisted graph and the neighborhood endpoint.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphJson {
    pub nodes: Vec<KgNode>,
    pub edges: Vec<KgEdge>,
}

#[derive(Serialize, Deserialize)]
struct GraphFile {
    built_from: usize,
    #[serde(default)]
    warnings: Vec<String>,
    nodes: Vec<KgNode>,
    edges: Vec<KgEdge>,
}

/// An immutable graph. Nodes are kept sorted by id, so node indices order
/// the same way as node ids.
#[derive(Debug, Clone, Default)]
pub struct KnowledgeGraph {
    nodes: Vec<KgNode>,
    edges: Vec<KgEdge>,
    built_from: usize,
    warnings: Vec<String>,
    index: HashMap<String, usize>,
    adjacency: Vec<Vec<usize>>,
}

struct PendingNode {
    display_name: String,
    chunk_ids: BTreeSet<String>,
}

/// Builds the graph from the triples whose status is in
/// `opts.include_status`.
pub fn build_graph(triples: &[Triple], corpus: &Corpus, opts: &BuildOptions) -> Result<KnowledgeGraph> {
    if opts.include_status.contains(&ReviewStatus::Rejected) {
        return Err(Error::Config("rejected triples cannot be included in a build".into()));
    }
    if opts.node_context_cap == 0 {
        return Err(Error::Config("node_context_cap must be at least 1".into()));
    }

    let mut pending: BTreeMap<String, PendingNode> = BTreeMap::new();
    let mut edges = BTreeSet::new();
    let mut built_from = 0;
    for t in triples.iter().filter(|t| opts.include_status.contains(&t.status)) {
        built_from += 1;
        let from = canonical_entity_key(&t.subject);
        let to = canonical_entity_key(&t.object);
        for (key, surface) in [(&from, &t.subject), (&to, &t.object)] {
            let node = pending.entry(key.clone()).or_insert_with(|| PendingNode {
                display_name: surface.trim().to_string(),
                chunk_ids: BTreeSet::new(),
            });
            node.chunk_ids.insert(t.source_chunk_id.clone());
        }
        edges.insert(KgEdge {
            from_id: from,
            to_id: to,
            predicate: t.predicate.trim().to_string(),
        });
    }

    let mut missing = BTreeSet::new();
    let nodes = pending
        .into_iter()
        .map(|(node_id, p)| {
            let texts: Vec<&str> = p
                .chunk_ids
                .iter()
                .filter_map(|id| match corpus.chunk(id) {
                    Some(c) => Some(c.text.as_str()),
                    None => {
                        missing.insert(id.clone());
                        None
                    }
                })
                .collect();
            let context = if texts.is_empty() {
                p.display_name.clone()
            } else {
                truncate_to_tokens(&texts.join("\n\n"), opts.node_context_cap).to_string()
            };
            KgNode {
                node_id,
                display_name: p.display_name,
                context,
            }
        })
        .collect();
    let warnings = missing
        .into_iter()
        .map(|id| {
            if id.is_empty() {
                "triple without a source chunk; node context falls back to its name".to_string()
            } else {
                format!("source chunk `{id}` not found; node context falls back to its name")
            }
        })
        .collect();
    Ok(KnowledgeGraph::from_parts(nodes, edges.into_iter().collect(), built_from, warnings))
}

impl KnowledgeGraph {
    fn from_parts(mut nodes: Vec<KgNode>, mut edges: Vec<KgEdge>, built_from: usize, warnings: Vec<String>) -> Self {
        nodes.sort_by(|a, b| a.node_id.cmp(&b.node_id));
        nodes.dedup_by(|a, b| a.node_id == b.node_id);
        edges.sort();
        edges.dedup();
        let index: HashMap<String, usize> = nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.node_id.clone(), i))
            .collect();
        // Edges whose endpoints are missing are dropped to keep V closed.
        edges.retain(|e| index.contains_key(&e.from_id) && index.contains_key(&e.to_id));
        let mut adjacency = vec![Vec::new(); nodes.len()];
        for e in &edges {
            let (a, b) = (index[&e.from_id], index[&e.to_id]);
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        for list in &mut adjacency {
            list.sort_unstable();
            list.dedup();
        }
        Self {
            nodes,
            edges,
            built_from,
            warnings,
            index,
            adjacency,
        }
    }

    pub fn nodes(&self) -> &[KgNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &[KgEdge] {
        &self.edges
    }

    pub fn node(&self, node_id: &str) -> Option<&KgNode> {
        self.index.get(node_id).map(|&i| &self.nodes[i])
    }

    pub fn built_from(&self) -> usize {
        self.built_from
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Undirected breadth-first expansion. Seeds come first in the order
    /// given, then each layer sorted by node id. No node appears twice.
    pub fn traverse<S: AsRef<str>>(&self, seeds: &[S], depth: Depth) -> Result<Vec<String>> {
        let mut visited = vec![false; self.nodes.len()];
        let mut frontier = Vec::new();
        for seed in seeds {
            let seed = seed.as_ref();
            let &i = self
                .index
                .get(seed)
                .ok_or_else(|| Error::UnknownNode(seed.to_string()))?;
            if !visited[i] {
                visited[i] = true;
                frontier.push(i);
            }
        }
        let mut order = frontier.clone();
        let mut level = 0;
        while !frontier.is_empty() && depth.allows(level + 1) {
            level += 1;
            let next: BTreeSet<usize> = frontier
                .iter()
                .flat_map(|&i| self.adjacency[i].iter().copied())
                .filter(|&j| !visited[j])
                .collect();
            for &j in &next {
                visited[j] = true;
            }
            frontier = next.into_iter().collect();
            order.extend_from_slice(&frontier);
        }
        Ok(order.into_iter().map(|i| self.nodes[i].node_id.clone()).collect())
    }

    /// Nodes within `depth` hops of `node_id` plus the edges among them.
    pub fn neighborhood(&self, node_id: &str, depth: Depth) -> Result<GraphJson> {
        let ids = self.traverse(&[node_id], depth)?;
        let keep: BTreeSet<&str> = ids.iter().map(String::as_str).collect();
        Ok(GraphJson {
            nodes: ids.iter().map(|id| self.node(id).expect("traversed").clone()).collect(),
            edges: self
                .edges
                .iter()
                .filter(|e| keep.contains(e.from_id.as_str()) && keep.contains(e.to_id.as_str()))
                .cloned()
                .collect(),
        })
    }

    pub fn to_json(&self) -> GraphJson {
        GraphJson {
            nodes: self.nodes.clone(),
            edges: self.edges.clone(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = GraphFile {
            built_from: self.built_from,
            warnings: self.warnings.clone(),
            nodes: self.nodes.clone(),
            edges: self.edges.clone(),
        };
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, serde_json::to_vec_pretty(&file)?)?;
        fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file: GraphFile = serde_json::from_slice(&fs::read(path)?)?;
        Ok(Self::from_parts(file.nodes, file.edges, file.built_from, file.warnings))
    }
}
