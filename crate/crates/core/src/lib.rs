//! Knowledge-graph enhanced retrieval-augmented tutoring engine.
//!
//! Course documents are chunked into a knowledge base, an LLM extracts
//! `[subject, predicate, object]` triples from each chunk, reviewers approve
//! them, and the approved triples form a concept graph. Questions are
//! answered from similarity-retrieved chunks plus the contexts of every
//! graph node connected to the best-matching concepts. Repeated questions
//! are served from a semantic answer cache.

pub mod cache;
pub mod corpus;
pub mod cost;
pub mod embedding;
pub mod engine;
pub mod error;
pub mod extraction;
pub mod generation;
pub mod kg;
pub mod llm;
pub mod provider;
pub mod retrieval;
pub mod service;
pub mod settings;

pub use engine::{AskRequest, AskResponse, Engine, Providers};
pub use error::{Error, Result};
pub use generation::AnswerMode;
