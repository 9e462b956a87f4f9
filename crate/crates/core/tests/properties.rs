use std::collections::{BTreeMap, BTreeSet, HashMap};

use proptest::prelude::*;

use kgrag::cache::{CacheConfig, SemanticCache};
use kgrag::corpus::{chunk_document, tokenize, truncate_to_tokens, Corpus, CorpusConfig, Document};
use kgrag::cost::CostModel;
use kgrag::embedding::{cosine_similarity, local_hash_embed, top_k_indices, EmbeddingVector};
use kgrag::extraction::parse_triples;
use kgrag::generation::{AnswerMode, AnswerRecord};
use kgrag::kg::{
    build_graph, canonical_entity_key, export_triples_csv, import_triples_csv, BuildOptions, Depth,
    ReviewFlags, ReviewStatus, Triple,
};

fn answer(text: &str) -> AnswerRecord {
    AnswerRecord {
        answer_text: text.to_string(),
        mode: AnswerMode::Rag,
        chunk_refs: vec![],
        node_refs: vec![],
        prompt_token_count: 0,
        provider_name: "stub".into(),
        cache_hit: false,
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn vec_pair(max_dim: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1..max_dim).prop_flat_map(|d| {
        (
            prop::collection::vec(-100.0f64..100.0, d),
            prop::collection::vec(-100.0f64..100.0, d),
        )
    })
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        Self((0..n).collect())
    }
    fn find(&mut self, x: usize) -> usize {
        if self.0[x] != x {
            let root = self.find(self.0[x]);
            self.0[x] = root;
        }
        self.0[x]
    }
    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        self.0[ra] = rb;
    }
}

fn node_name(i: usize) -> String {
    format!("concept {i:02}")
}

/// Random graph as approved triples over `n` named nodes; every node gets a
/// self-describing triple so isolated nodes exist too.
fn graph_case() -> impl Strategy<Value = (usize, Vec<(usize, usize)>, Vec<usize>)> {
    (2usize..30).prop_flat_map(|n| {
        (
            Just(n),
            prop::collection::vec((0..n, 0..n), 0..60),
            prop::collection::vec(0..n, 1..4),
        )
    })
}

fn graph_from(n: usize, edges: &[(usize, usize)]) -> kgrag::kg::KnowledgeGraph {
    let mut triples: Vec<Triple> = (0..n)
        .map(|i| {
            Triple::new(&node_name(i), "is", &node_name(i), "c_0000")
                .unwrap()
                .with_status(ReviewStatus::Approved)
        })
        .collect();
    for &(a, b) in edges {
        triples.push(
            Triple::new(&node_name(a), "relates to", &node_name(b), "c_0000")
                .unwrap()
                .with_status(ReviewStatus::Approved),
        );
    }
    build_graph(&triples, &Corpus::default(), &BuildOptions::default()).unwrap()
}

fn bfs_oracle(n: usize, edges: &[(usize, usize)], seeds: &[usize], hops: usize) -> BTreeSet<String> {
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut dist: HashMap<usize, usize> = seeds.iter().map(|&s| (s, 0)).collect();
    let mut queue: std::collections::VecDeque<usize> = seeds.iter().copied().collect();
    while let Some(u) = queue.pop_front() {
        let d = dist[&u];
        if d == hops {
            continue;
        }
        for &v in &adj[u] {
            if let std::collections::hash_map::Entry::Vacant(e) = dist.entry(v) {
                e.insert(d + 1);
                queue.push_back(v);
            }
        }
    }
    dist.keys().map(|&i| node_name(i)).collect()
}

fn field_text() -> impl Strategy<Value = String> {
    "[A-Za-z0-9][A-Za-z0-9 ,\"'.;:-]{0,20}[A-Za-z0-9.]".prop_map(String::from)
}

fn flag() -> impl Strategy<Value = Option<bool>> {
    prop_oneof![Just(None), Just(Some(true)), Just(Some(false))]
}

fn status() -> impl Strategy<Value = ReviewStatus> {
    prop_oneof![
        Just(ReviewStatus::Pending),
        Just(ReviewStatus::Approved),
        Just(ReviewStatus::Rejected)
    ]
}

fn any_triple() -> impl Strategy<Value = Triple> {
    (
        field_text(),
        field_text(),
        field_text(),
        "[a-z]{1,6}_[0-9]{4}",
        status(),
        (flag(), flag(), flag()),
    )
        .prop_map(|(s, p, o, c, st, (pr, co, re))| {
            let mut t = Triple::new(&s, &p, &o, &c).unwrap().with_status(st);
            t.flags = ReviewFlags {
                precision: pr,
                completeness: co,
                relevance: re,
            };
            t
        })
}

proptest! {
    #[test]
    fn cosine_symmetric_and_bounded((a, b) in vec_pair(32)) {
        let (va, vb) = (EmbeddingVector(a.clone()), EmbeddingVector(b.clone()));
        let ab = cosine_similarity(&va, &vb).unwrap();
        let ba = cosine_similarity(&vb, &va).unwrap();
        prop_assert_eq!(ab, ba);
        prop_assert!((-1.0..=1.0).contains(&ab));
        let (na, nb) = (dot(&a, &a).sqrt(), dot(&b, &b).sqrt());
        if na > 0.0 && nb > 0.0 {
            prop_assert!((ab - (dot(&a, &b) / (na * nb)).clamp(-1.0, 1.0)).abs() < 1e-9);
        } else {
            prop_assert_eq!(ab, 0.0);
        }
    }

    #[test]
    fn cosine_rejects_dimension_mismatch(a in prop::collection::vec(-1.0f64..1.0, 1..8), extra in 1usize..4) {
        let b = vec![0.5; a.len() + extra];
        prop_assert!(cosine_similarity(&EmbeddingVector(a), &EmbeddingVector(b)).is_err());
    }

    #[test]
    fn top_k_matches_stable_sort(
        scores in prop::collection::vec(prop_oneof![(-4i32..4).prop_map(|x| x as f64 / 4.0), -1.0f64..1.0], 0..200),
        k in 0usize..20,
    ) {
        let mut oracle: Vec<usize> = (0..scores.len()).collect();
        // Stable sort keeps ascending index order among equal scores.
        oracle.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());
        oracle.truncate(k);
        prop_assert_eq!(top_k_indices(&scores, k), oracle);
    }

    #[test]
    fn local_embedding_is_pure_and_normalized(text in "\\PC{0,80}", dim in 1usize..300) {
        let a = local_hash_embed(&text, dim);
        prop_assert_eq!(&a, &local_hash_embed(&text, dim));
        prop_assert_eq!(a.0.len(), dim);
        let norm = dot(&a.0, &a.0).sqrt();
        prop_assert!(norm == 0.0 || (norm - 1.0).abs() < 1e-9);
        prop_assert_eq!(&a, &local_hash_embed(&text.to_lowercase(), dim));
    }

    #[test]
    fn canonical_key_is_idempotent(s in "\\PC{0,40}") {
        let k = canonical_entity_key(&s);
        prop_assert_eq!(canonical_entity_key(&k), k.clone());
        prop_assert_eq!(k.trim(), k.as_str());
        prop_assert!(!k.contains("  "));
    }

    #[test]
    fn chunking_covers_every_token(
        words in prop::collection::vec("[a-z]{1,8}", 0..300),
        size in 1usize..50,
        overlap_frac in 0usize..10,
    ) {
        let overlap = size * overlap_frac / 10;
        let cfg = CorpusConfig { chunk_size: size, overlap };
        let body = words.join(" \n ");
        let doc = Document::new("doc", &body);
        let chunks = chunk_document(&doc, &cfg);
        let tokens = tokenize(&body);
        prop_assert!(chunks.iter().all(|c| c.token_count <= size && c.token_count > 0));
        prop_assert_eq!(chunks.is_empty(), tokens.is_empty());
        let stride = size - overlap;
        for (i, c) in chunks.iter().enumerate() {
            prop_assert_eq!(c.ordinal, i);
            let start = i * stride;
            let end = (start + size).min(tokens.len());
            prop_assert_eq!(c.text.clone(), tokens[start..end].join(" "));
        }
        if let Some(last) = chunks.last() {
            prop_assert_eq!(last.ordinal * stride + last.token_count, tokens.len());
        }
    }

    #[test]
    fn truncation_is_a_token_prefix(text in "\\PC{0,120}", n in 0usize..30) {
        let cut = truncate_to_tokens(&text, n);
        prop_assert!(text.starts_with(cut));
        let all = tokenize(&text);
        prop_assert_eq!(tokenize(cut), all[..n.min(all.len())].to_vec());
    }

    #[test]
    fn csv_round_trip_is_lossless(triples in prop::collection::vec(any_triple(), 0..40)) {
        let bytes = export_triples_csv(&triples).unwrap();
        let report = import_triples_csv(&bytes).unwrap();
        prop_assert!(report.errors.is_empty(), "{:?}", report.errors);
        prop_assert_eq!(report.triples, triples);
    }

    #[test]
    fn parser_recovers_well_formed_triples(
        fields in prop::collection::vec(("[A-Za-z][A-Za-z0-9 -]{0,15}", "[a-z][a-z ]{0,10}", "[A-Za-z0-9][A-Za-z0-9 -]{0,15}"), 0..10),
        noise in "[^\\[\\]]{0,20}",
    ) {
        let raw: String = fields
            .iter()
            .map(|(s, p, o)| format!("{noise}[{s}, {p}, {o}]\n"))
            .collect();
        let (parsed, warnings) = parse_triples(&raw, "x_0000");
        prop_assert!(warnings.is_empty(), "{:?}", warnings);
        let want: Vec<(String, String, String)> = fields
            .iter()
            .map(|(s, p, o)| (s.trim().to_string(), p.trim().to_string(), o.trim().to_string()))
            .collect();
        let got: Vec<(String, String, String)> = parsed
            .into_iter()
            .map(|t| (t.subject, t.predicate, t.object))
            .collect();
        prop_assert_eq!(got, want);
    }

    #[test]
    fn parser_never_panics(raw in "[\\[\\], a-zA-Z\\n]{0,200}|\\PC{0,200}") {
        let (parsed, _) = parse_triples(&raw, "x_0000");
        for t in parsed {
            prop_assert!(!t.subject.is_empty() && !t.predicate.is_empty() && !t.object.is_empty());
            prop_assert!(!t.subject.contains(',') && !t.object.contains('['));
            prop_assert_eq!(t.status, ReviewStatus::Pending);
        }
    }

    #[test]
    fn build_graph_matches_set_oracle(
        triples in prop::collection::vec(
            ("[A-Ca-c]{1,2}( [a-c]{1,2})?", "[a-z]{1,4}", "[A-Ca-c]{1,2}", status()),
            0..30,
        )
    ) {
        let triples: Vec<Triple> = triples
            .iter()
            .map(|(s, p, o, st)| Triple::new(s, p, o, "c_0000").unwrap().with_status(*st))
            .collect();
        let graph = build_graph(&triples, &Corpus::default(), &BuildOptions::default()).unwrap();
        let approved: Vec<&Triple> = triples.iter().filter(|t| t.status == ReviewStatus::Approved).collect();
        let want_nodes: BTreeSet<String> = approved
            .iter()
            .flat_map(|t| [canonical_entity_key(&t.subject), canonical_entity_key(&t.object)])
            .collect();
        let want_edges: BTreeSet<(String, String, String)> = approved
            .iter()
            .map(|t| (canonical_entity_key(&t.subject), canonical_entity_key(&t.object), t.predicate.clone()))
            .collect();
        let got_nodes: BTreeSet<String> = graph.nodes().iter().map(|n| n.node_id.clone()).collect();
        let got_edges: BTreeSet<(String, String, String)> = graph
            .edges()
            .iter()
            .map(|e| (e.from_id.clone(), e.to_id.clone(), e.predicate.clone()))
            .collect();
        prop_assert_eq!(got_nodes, want_nodes);
        prop_assert_eq!(got_edges, want_edges);
        prop_assert_eq!(graph.built_from(), approved.len());
    }

    #[test]
    fn cache_hit_iff_score_reaches_threshold(
        stored in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 8), 1..6),
        probe in prop::collection::vec(-1.0f64..1.0, 8),
        threshold in 0.0f64..1.0,
    ) {
        let mut cache = SemanticCache::new(CacheConfig { threshold, capacity: 16 }).unwrap();
        for (i, v) in stored.iter().enumerate() {
            cache.insert(&format!("q{i}"), EmbeddingVector(v.clone()), answer(&format!("a{i}")));
        }
        let probe = EmbeddingVector(probe);
        let best = stored
            .iter()
            .map(|v| cosine_similarity(&probe, &EmbeddingVector(v.clone())).unwrap())
            .fold(f64::NEG_INFINITY, f64::max);
        let hit = cache.lookup_embedding(&probe).is_hit();
        if (best - threshold).abs() > 1e-6 {
            prop_assert_eq!(hit, best >= threshold);
        }
    }

    #[test]
    fn cost_is_monotone(
        n in 0u64..100_000,
        dn in 0u64..1000,
        h in 0.0f64..1.0,
        dh in 0.0f64..1.0,
    ) {
        let m = CostModel::default();
        for label in ["GPT-o1", "Qwen-2.5-72b", "DeepSeek-V3"] {
            let base = m.estimate_cost(label, n, h).unwrap();
            prop_assert!(base >= 0.0);
            prop_assert!(m.estimate_cost(label, n + dn, h).unwrap() >= base);
            let h2 = (h + dh).min(1.0);
            prop_assert!(m.estimate_cost(label, n, h2).unwrap() <= base + 1e-12);
            let ratio = m.cost_ratio(label, "DeepSeek-V3").unwrap();
            let est_ratio = m.estimate_cost(label, n.max(1), h.min(0.99)).unwrap()
                / m.estimate_cost("DeepSeek-V3", n.max(1), h.min(0.99)).unwrap();
            prop_assert!((ratio - est_ratio).abs() < 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn traversal_matches_union_find((n, edges, seeds) in graph_case()) {
        let graph = graph_from(n, &edges);
        let names: Vec<String> = seeds.iter().map(|&s| node_name(s)).collect();
        let got = graph.traverse(&names, Depth::Max).unwrap();
        let got_set: BTreeSet<String> = got.iter().cloned().collect();
        prop_assert_eq!(got.len(), got_set.len(), "no duplicates");

        let mut uf = UnionFind::new(n);
        for &(a, b) in &edges {
            uf.union(a, b);
        }
        let roots: BTreeSet<usize> = seeds.iter().map(|&s| uf.find(s)).collect();
        let want: BTreeSet<String> = (0..n).filter(|&i| roots.contains(&uf.find(i))).map(node_name).collect();
        prop_assert_eq!(&got_set, &want);
        // Superset law: seeds come first and are always present.
        let distinct_seeds: Vec<String> = {
            let mut seen = BTreeSet::new();
            names.iter().filter(|s| seen.insert((*s).clone())).cloned().collect()
        };
        prop_assert_eq!(&got[..distinct_seeds.len()], &distinct_seeds[..]);
    }

    #[test]
    fn bounded_traversal_matches_bfs((n, edges, seeds) in graph_case(), hops in 0usize..4) {
        let graph = graph_from(n, &edges);
        let names: Vec<String> = seeds.iter().map(|&s| node_name(s)).collect();
        let got: BTreeSet<String> = graph.traverse(&names, Depth::Hops(hops)).unwrap().into_iter().collect();
        prop_assert_eq!(got, bfs_oracle(n, &edges, &seeds, hops));
    }
}

#[test]
fn surface_variants_collapse_to_canonical_keys() {
    // 50 concepts, 10 surface variants each.
    let mut keys = BTreeMap::new();
    for i in 0..50 {
        let base = format!("Concept Number {i} Of The Course");
        let variants = [
            base.clone(),
            base.to_lowercase(),
            base.to_uppercase(),
            format!("  {base}"),
            format!("{base}\t"),
            base.replace(' ', "  "),
            base.replace(' ', "\n"),
            format!(" {} ", base.to_lowercase().replace(' ', " \t ")),
            base.replace("Course", "COURSE"),
            format!("{}\r\n", base.to_lowercase()),
        ];
        for v in variants {
            keys.entry(canonical_entity_key(&v)).or_insert_with(Vec::new).push(v);
        }
    }
    assert_eq!(keys.len(), 50);
    assert!(keys.values().all(|v| v.len() == 10));
}
