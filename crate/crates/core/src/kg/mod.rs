//! Knowledge graph: reviewed triples, the graph built from them, and the
//! connected-node traversal used for expanded retrieval.

mod graph;
mod triples;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub use graph::{
    build_graph, BuildOptions, GraphJson, KgEdge, KgNode, KnowledgeGraph, DEFAULT_NODE_CONTEXT_CAP,
};
pub use triples::{
    export_triples_csv, import_triples_csv, ImportReport, ReviewFlags, ReviewStatus, RowError,
    Triple, TripleStore, TRIPLE_CSV_HEADER,
};

/// Entity merge key: trimmed, internal whitespace collapsed, case-folded.
pub fn canonical_entity_key(surface: &str) -> String {
    surface
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// How many undirected hops a traversal may take from its seeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Depth {
    #[default]
    Max,
    Hops(usize),
}

impl Depth {
    pub fn allows(self, level: usize) -> bool {
        match self {
            Depth::Max => true,
            Depth::Hops(n) => level <= n,
        }
    }
}

impl fmt::Display for Depth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Depth::Max => f.write_str("max"),
            Depth::Hops(n) => write!(f, "{n}"),
        }
    }
}

impl FromStr for Depth {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("max") {
            return Ok(Depth::Max);
        }
        s.parse()
            .map(Depth::Hops)
            .map_err(|_| format!("depth must be `max` or a non-negative integer, got `{s}`"))
    }
}

impl Serialize for Depth {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Depth::Max => serializer.serialize_str("max"),
            Depth::Hops(n) => serializer.serialize_u64(*n as u64),
        }
    }
}

impl<'de> Deserialize<'de> for Depth {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Hops(u64),
            Text(String),
        }
        match Repr::deserialize(deserializer)? {
            Repr::Hops(n) => Ok(Depth::Hops(n as usize)),
            Repr::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}
