//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any fails.

mod common;

use std::collections::{BTreeSet, HashMap};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::strategy::ValueTree;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};

use kgrag::cache::{CacheConfig, SemanticCache};
use kgrag::corpus::{Corpus, CorpusConfig};
use kgrag::cost::CostModel;
use kgrag::embedding::{local_hash_embed, EmbeddingVector, LocalHashEmbedder};
use kgrag::extraction::parse_triples;
use kgrag::generation::{generate, AnswerMode, AnswerRecord, Sources};
use kgrag::kg::{
    build_graph, export_triples_csv, import_triples_csv, BuildOptions, Depth, ReviewFlags, ReviewStatus, Triple,
};
use kgrag::llm::{RecordingLlm, StubLlm};
use kgrag::retrieval::{rag_retrieve, CorpusIndex, RetrievalParams, GRAPH_LABEL, SIMILARITY_LABEL};
use kgrag::AskRequest;

use common::*;

fn seeded(seed: u8) -> TestRunner {
    TestRunner::new_with_rng(Config::default(), TestRng::from_seed(RngAlgorithm::ChaCha, &[seed; 32]))
}

fn sample<S: Strategy>(runner: &mut TestRunner, strategy: S) -> S::Value {
    strategy.new_tree(runner).expect("strategy").current()
}

const VOCAB: &[&str] = &[
    "bond", "yield", "coupon", "duration", "equity", "dividend", "mortgage", "default", "tranche", "swap",
    "option", "future", "hedge", "risk", "return", "portfolio", "beta", "alpha", "liquidity", "spread",
    "credit", "rating", "agency", "bank", "loan", "rate", "inflation", "market", "price", "volatility",
    "arbitrage", "leverage", "margin", "collateral", "security", "asset", "capital", "debt", "interest",
    "maturity", "principal", "premium", "discount", "index", "fund", "crisis", "sub-prime", "fixed-income",
];

fn words(runner: &mut TestRunner, n: usize) -> String {
    let picks = sample(runner, prop::collection::vec(0..VOCAB.len(), n));
    picks.iter().map(|&i| VOCAB[i]).collect::<Vec<_>>().join(" ")
}

// Independent cosine: plain dot products over the raw vectors.
fn oracle_cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb)).clamp(-1.0, 1.0)
    }
}

fn cost_table() {
    let m = CostModel::default();
    assert_eq!(m.per_qa("GPT-o1").unwrap(), 2.98e-3);
    assert_eq!(m.per_qa("Qwen-2.5-72b").unwrap(), 3.27e-4);
    assert_eq!(m.per_qa("DeepSeek-V3").unwrap(), 2.18e-4);
    let gpt = m.cost_ratio("GPT-o1", "DeepSeek-V3").unwrap();
    let qwen = m.cost_ratio("Qwen-2.5-72b", "DeepSeek-V3").unwrap();
    assert!((gpt - 13.7).abs() <= 0.05, "GPT-o1 ratio {gpt}");
    assert!((qwen - 1.5).abs() <= 0.05, "Qwen ratio {qwen}");
}

fn retrieval_oracle() {
    let mut runner = seeded(1);
    let embedder = LocalHashEmbedder::new(256);
    let params = RetrievalParams::default();
    assert_eq!(params.k, 5);
    for case in 0..200 {
        let n_chunks = sample(&mut runner, 1usize..=1000);
        let mut corpus = Corpus::new(CorpusConfig {
            chunk_size: 12,
            overlap: 0,
        })
        .unwrap();
        let mut remaining = n_chunks;
        let mut doc = 0;
        while remaining > 0 {
            let take = remaining.min(sample(&mut runner, 1usize..20));
            let len = take * 12;
            corpus.ingest_text(&format!("d{doc}"), &words(&mut runner, len)).unwrap();
            remaining -= take;
            doc += 1;
        }
        assert_eq!(corpus.chunks().len(), n_chunks);
        let query_len = sample(&mut runner, 1usize..8);
        let query = words(&mut runner, query_len);

        let index = CorpusIndex::build(Arc::new(corpus), &embedder).unwrap();
        let got = rag_retrieve(&query, &index, &embedder, &params).unwrap();

        let q = local_hash_embed(&query, 256);
        let chunks = index.corpus().chunks();
        let scores: Vec<f64> = chunks
            .iter()
            .map(|c| oracle_cosine(&q.0, &local_hash_embed(&c.text, 256).0))
            .collect();
        let mut order: Vec<usize> = (0..chunks.len()).collect();
        order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
        let want: Vec<String> = order.iter().take(5).map(|&i| chunks[i].chunk_id.clone()).collect();
        assert_eq!(got.chunk_ids, want, "corpus {case} ({n_chunks} chunks), query {query:?}");
    }
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, x: usize) -> usize {
        let mut root = x;
        while self.0[root] != root {
            root = self.0[root];
        }
        self.0[x] = root;
        root
    }
}

fn random_graph(runner: &mut TestRunner) -> (usize, Vec<(usize, usize)>, kgrag::kg::KnowledgeGraph) {
    let n = sample(runner, 1usize..=50);
    let edges = sample(runner, prop::collection::vec((0..n, 0..n), 0..=120));
    let name = |i: usize| format!("node {i}");
    let mut triples: Vec<Triple> = (0..n)
        .map(|i| Triple::new(&name(i), "self", &name(i), "c_0000").unwrap())
        .collect();
    triples.extend(
        edges
            .iter()
            .map(|&(a, b)| Triple::new(&name(a), "links", &name(b), "c_0000").unwrap()),
    );
    let triples: Vec<Triple> = triples.into_iter().map(|t| t.with_status(ReviewStatus::Approved)).collect();
    let graph = build_graph(&triples, &Corpus::default(), &BuildOptions::default()).unwrap();
    (n, edges, graph)
}

fn traversal_oracle() {
    let mut runner = seeded(2);
    for case in 0..100 {
        let (n, edges, graph) = random_graph(&mut runner);
        let seeds = sample(&mut runner, prop::collection::vec(0..n, 1..=3.min(n)));
        let mut uf = UnionFind((0..n).collect());
        for &(a, b) in &edges {
            let (ra, rb) = (uf.find(a), uf.find(b));
            uf.0[ra] = rb;
        }
        let roots: BTreeSet<usize> = seeds.iter().map(|&s| uf.find(s)).collect();
        let want: BTreeSet<String> = (0..n)
            .filter(|&i| roots.contains(&uf.find(i)))
            .map(|i| format!("node {i}"))
            .collect();
        let names: Vec<String> = seeds.iter().map(|&s| format!("node {s}")).collect();
        let got: BTreeSet<String> = graph.traverse(&names, Depth::Max).unwrap().into_iter().collect();
        assert_eq!(got, want, "graph {case}");
    }
    // Superset law across depths.
    let mut runner = seeded(3);
    for case in 0..1000 {
        let (n, _, graph) = random_graph(&mut runner);
        let seeds = sample(&mut runner, prop::collection::vec(0..n, 1..=4.min(n)));
        let depth = match sample(&mut runner, 0usize..5) {
            4 => Depth::Max,
            h => Depth::Hops(h),
        };
        let names: Vec<String> = seeds.iter().map(|&s| format!("node {s}")).collect();
        let got: BTreeSet<String> = graph.traverse(&names, depth).unwrap().into_iter().collect();
        assert!(names.iter().all(|s| got.contains(s)), "case {case}");
    }
}

fn toy_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let engine = finance_engine(dir.path());
    let query = "What role did mortgage-backed securities play?";
    let kg = engine.ask(&AskRequest::new(query, AnswerMode::Kgrag)).unwrap();
    let nodes: BTreeSet<&str> = kg.node_refs.iter().map(|n| n.node_id.as_str()).collect();
    assert!(nodes.contains("sub-prime crisis"), "{nodes:?}");
    assert!(nodes.contains("fixed-income securities"), "{nodes:?}");
    let retrieval = engine.retrieve(query, None).unwrap();
    assert!(retrieval.node_ids.iter().any(|n| n == "sub-prime crisis"));
    assert!(retrieval.context_text.contains("## "));

    let rag = engine.ask(&AskRequest::new(query, AnswerMode::Rag)).unwrap();
    assert!(rag.node_refs.is_empty());

    let snapshot = engine.snapshot();
    let llm = RecordingLlm::new(StubLlm);
    let sources = Sources {
        corpus: &snapshot.corpus,
        graph: None,
        embedder: &LocalHashEmbedder::default(),
        llm: &llm,
    };
    // RAG never needs the graph, even when none is available.
    let record = generate(query, AnswerMode::Rag, sources, &RetrievalParams::default()).unwrap();
    assert!(record.node_refs.is_empty());
    assert!(!llm.prompts()[0].contains(GRAPH_LABEL));
}

fn answer(text: &str) -> AnswerRecord {
    AnswerRecord {
        answer_text: text.into(),
        mode: AnswerMode::Rag,
        chunk_refs: vec![],
        node_refs: vec![],
        prompt_token_count: 0,
        provider_name: "stub".into(),
        cache_hit: false,
    }
}

fn cache_law() {
    let dir = tempfile::tempdir().unwrap();
    let engine = finance_engine(dir.path());
    let request = AskRequest::new("Why do bond prices fall when rates rise?", AnswerMode::Kgrag);
    let first = engine.ask(&request).unwrap();
    let second = engine.ask(&request).unwrap();
    assert!(!first.cache_hit && second.cache_hit);
    assert_eq!(first.answer_text.as_bytes(), second.answer_text.as_bytes());

    let config = CacheConfig {
        threshold: 0.85,
        capacity: 8,
    };
    assert_eq!(config, CacheConfig { capacity: 8, ..CacheConfig::default() });
    let mut cache = SemanticCache::new(config).unwrap();
    cache.insert("stored", EmbeddingVector(vec![1.0, 0.0]), answer("A"));
    let at = |c: f64| EmbeddingVector(vec![c, (1.0 - c * c).sqrt()]);
    assert!(!cache.lookup_embedding(&at(0.80)).is_hit());
    assert!(cache.lookup_embedding(&at(0.90)).is_hit());

    // Capacity 2. Hand trace: insert A, insert B, touch A, insert C -> B evicted.
    let mut lru = SemanticCache::new(CacheConfig {
        threshold: 0.85,
        capacity: 2,
    })
    .unwrap();
    let axis = |i: usize| {
        let mut v = vec![0.0; 3];
        v[i] = 1.0;
        EmbeddingVector(v)
    };
    lru.insert("A", axis(0), answer("a"));
    lru.insert("B", axis(1), answer("b"));
    assert!(lru.lookup_embedding(&axis(0)).is_hit());
    lru.insert("C", axis(2), answer("c"));
    let keys: BTreeSet<&str> = lru.entries().iter().map(|e| e.query_text.as_str()).collect();
    assert_eq!(keys, BTreeSet::from(["A", "C"]));
    assert!(!lru.lookup_embedding(&axis(1)).is_hit());
}

fn extraction_parser() {
    let (triples, warnings) = parse_triples("[Mortgage-Backed Securities, Affects, Sub-Prime Crisis]", "c_0000");
    assert!(warnings.is_empty());
    assert_eq!(triples.len(), 1);
    let t = &triples[0];
    assert_eq!(
        (t.subject.as_str(), t.predicate.as_str(), t.object.as_str()),
        ("Mortgage-Backed Securities", "Affects", "Sub-Prime Crisis")
    );

    let mut runner = seeded(4);
    let fuzz = prop_oneof![
        "[\\[\\], a-zA-Z\\n]{0,200}",
        "\\PC{0,200}",
        "(\\[[^\\]]{0,30}\\]?[ \\n]){0,10}",
    ];
    for _ in 0..10_000 {
        let raw = sample(&mut runner, fuzz.clone());
        let outcome = catch_unwind(|| parse_triples(&raw, "c_0000"));
        let (parsed, _) = outcome.unwrap_or_else(|_| panic!("parser crashed on {raw:?}"));
        assert!(parsed.iter().all(|t| !t.subject.is_empty() && !t.predicate.is_empty() && !t.object.is_empty()));
    }

    let flag = prop_oneof![Just(None), Just(Some(true)), Just(Some(false))];
    let status = prop_oneof![
        Just(ReviewStatus::Pending),
        Just(ReviewStatus::Approved),
        Just(ReviewStatus::Rejected)
    ];
    let field = "[A-Za-z0-9][A-Za-z0-9 ,\"'\\n-]{0,24}[A-Za-z0-9]";
    let triple = (field, field, field, "[a-z]{1,5}_[0-9]{4}", status, flag.clone(), flag.clone(), flag).prop_map(
        |(s, p, o, c, st, precision, completeness, relevance)| {
            let mut t = Triple::new(&s, &p, &o, &c).unwrap().with_status(st);
            t.flags = ReviewFlags {
                precision,
                completeness,
                relevance,
            };
            t
        },
    );
    let triples = sample(&mut runner, prop::collection::vec(triple, 100));
    let bytes = export_triples_csv(&triples).unwrap();
    let report = import_triples_csv(&bytes).unwrap();
    assert!(report.errors.is_empty(), "{:?}", report.errors);
    assert_eq!(report.triples, triples);
}

fn mode_separation() {
    let dir = tempfile::tempdir().unwrap();
    let engine = finance_engine(dir.path());
    let snapshot = engine.snapshot();
    let embedder = LocalHashEmbedder::default();
    let llm = RecordingLlm::new(StubLlm);
    let mut runner = seeded(5);
    for _ in 0..50 {
        let len = sample(&mut runner, 1usize..10);
        let query = words(&mut runner, len);
        for mode in AnswerMode::ALL {
            let sources = Sources {
                corpus: &snapshot.corpus,
                graph: snapshot.graph.as_deref(),
                embedder: &embedder,
                llm: &llm,
            };
            generate(&query, mode, sources, &RetrievalParams::default()).unwrap();
            let prompts = llm.take();
            assert_eq!(prompts.len(), 1);
            let p = &prompts[0];
            let (sim, graph) = (p.contains(SIMILARITY_LABEL), p.contains(GRAPH_LABEL));
            match mode {
                AnswerMode::LlmOnly => assert!(!sim && !graph, "{p}"),
                AnswerMode::Rag => assert!(sim && !graph, "{p}"),
                AnswerMode::Kgrag => assert!(sim && graph, "{p}"),
            }
            assert!(p.contains(&query));
        }
    }
}

fn kgrag_cli(data: &Path, args: &[&str]) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_kgrag"))
        .arg("--data-dir")
        .arg(data)
        .args(args)
        .env_remove("KGRAG_DATA_DIR")
        .env("RUST_LOG", "warn")
        .output()
        .expect("run kgrag binary");
    assert!(
        out.status.success(),
        "kgrag {args:?} exited with {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn end_to_end_cli() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let fixture = fixture_dir();
    let expected = expected();

    kgrag_cli(&data, &["ingest", fixture.join("docs").to_str().unwrap()]);
    kgrag_cli(&data, &["extract", "--canned", fixture.join("canned").to_str().unwrap()]);

    let review = dir.path().join("review.csv");
    kgrag_cli(&data, &["review", "export", review.to_str().unwrap()]);
    let mut reader = csv::Reader::from_path(&review).unwrap();
    let headers = reader.headers().unwrap().clone();
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(&headers).unwrap();
    for row in reader.records() {
        let row = row.unwrap();
        let mut fields: Vec<String> = row.iter().map(String::from).collect();
        fields[4] = if is_rejected(&expected, &fields[0], &fields[1], &fields[2]) {
            "rejected".into()
        } else {
            "approved".into()
        };
        for flag in &mut fields[5..8] {
            *flag = "true".into();
        }
        writer.write_record(&fields).unwrap();
    }
    std::fs::write(&review, writer.into_inner().unwrap()).unwrap();
    kgrag_cli(&data, &["review", "import", review.to_str().unwrap()]);
    kgrag_cli(&data, &["build"]);

    let graph: serde_json::Value = serde_json::from_str(&kgrag_cli(&data, &["graph", "export"])).unwrap();
    assert_eq!(graph["nodes"].as_array().unwrap().len() as u64, expected["nodes"].as_u64().unwrap());
    assert_eq!(graph["edges"].as_array().unwrap().len() as u64, expected["edges"].as_u64().unwrap());

    for mode in ["llm_only", "rag", "kgrag"] {
        let out = kgrag_cli(
            &data,
            &["ask", "How are mortgage-backed securities related to CDOs?", "--mode", mode, "--json"],
        );
        let response: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert_eq!(response["mode"], mode);
        assert_eq!(response["node_refs"].as_array().unwrap().is_empty(), mode != "kgrag");
    }

    let health: serde_json::Value = serde_json::from_str(&kgrag_cli(&data, &["health"])).unwrap();
    assert_eq!(health["node_count"], expected["nodes"]);
    assert_eq!(health["cache_size"], 3);
}

type Criterion = (&'static str, fn(), Duration);

fn main() {
    let criteria: [Criterion; 8] = [
        ("cost model ratios 13.7 and 1.5 vs DeepSeek-V3", cost_table, Duration::from_secs(1)),
        ("retrieval top-5 equals exhaustive oracle on 200 corpora", retrieval_oracle, Duration::from_secs(60)),
        ("traversal equals union-find on 100 graphs, superset law on 1000", traversal_oracle, Duration::from_secs(30)),
        ("toy finance fixture expansion and graph-free rag", toy_fixture, Duration::from_secs(5)),
        ("semantic cache law and LRU trace", cache_law, Duration::from_secs(5)),
        ("extraction parser example, 10k fuzz, CSV round-trip", extraction_parser, Duration::from_secs(30)),
        ("mode separation over 50 queries", mode_separation, Duration::from_secs(10)),
        ("end-to-end offline CLI pipeline", end_to_end_cli, Duration::from_secs(30)),
    ];

    // Keep panic output for failures, but after the result line.
    let messages: Arc<std::sync::Mutex<HashMap<String, String>>> = Default::default();
    let sink = messages.clone();
    std::panic::set_hook(Box::new(move |info| {
        let name = std::thread::current().name().unwrap_or("main").to_string();
        sink.lock().unwrap().entry(name).or_insert_with(|| info.to_string());
    }));

    let mut failed = 0;
    for (name, check, limit) in criteria {
        let started = Instant::now();
        let outcome = std::thread::Builder::new()
            .name(name.to_string())
            .spawn(move || catch_unwind(AssertUnwindSafe(check)).is_ok())
            .unwrap()
            .join()
            .unwrap_or(false);
        let elapsed = started.elapsed();
        let in_time = elapsed <= limit;
        let pass = outcome && in_time;
        if !pass {
            failed += 1;
        }
        println!(
            "{} {name} ({} ms, limit {} s)",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_millis(),
            limit.as_secs()
        );
        if !outcome {
            if let Some(msg) = messages.lock().unwrap().get(name) {
                println!("    {}", msg.replace('\n', "\n    "));
            }
        } else if !in_time {
            println!("    exceeded time limit");
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
