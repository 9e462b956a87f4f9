#![allow(dead_code)]

use std::path::{Path, PathBuf};

use serde_json::Value;

use kgrag::kg::{ReviewFlags, ReviewStatus};
use kgrag::llm::CannedLlm;
use kgrag::Engine;

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/finance")
}

pub fn expected() -> Value {
    let text = std::fs::read_to_string(fixture_dir().join("expected.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

pub fn schema(name: &str) -> Value {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("schema").join(name);
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

pub fn string_list(v: &Value) -> Vec<String> {
    v.as_array()
        .unwrap()
        .iter()
        .map(|s| s.as_str().unwrap().to_string())
        .collect()
}

pub fn is_rejected(expected: &Value, subject: &str, predicate: &str, object: &str) -> bool {
    expected["rejected"].as_array().unwrap().iter().any(|r| {
        let r = string_list(r);
        r == [subject, predicate, object]
    })
}

/// Approves every pending triple except the ones the fixture rejects.
pub fn review_fixture(engine: &Engine) {
    let expected = expected();
    let flags = ReviewFlags {
        precision: Some(true),
        completeness: Some(true),
        relevance: Some(true),
    };
    for (id, t) in engine.triples().iter().enumerate() {
        let status = if is_rejected(&expected, &t.subject, &t.predicate, &t.object) {
            ReviewStatus::Rejected
        } else {
            ReviewStatus::Approved
        };
        engine.review(id, status, flags).unwrap();
    }
}

/// Ingested, extracted (canned), reviewed but not yet built.
pub fn reviewed_engine(dir: &Path) -> Engine {
    let engine = Engine::open(dir).unwrap();
    engine.ingest_path(&fixture_dir().join("docs")).unwrap();
    engine
        .extract_with(&CannedLlm::new(fixture_dir().join("canned")))
        .unwrap();
    review_fixture(&engine);
    engine
}

pub fn finance_engine(dir: &Path) -> Engine {
    let engine = reviewed_engine(dir);
    engine.build_graph().unwrap();
    engine
}
