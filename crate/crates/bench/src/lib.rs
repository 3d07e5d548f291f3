//! Synthetic corpora for benchmarks. Sizes are chosen to look like a few
//! thousand indexed passages, not to mean anything.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hippograph::corpus::{Corpus, Passage};
use hippograph::extract::backend::TokenUsage;
use hippograph::extract::{PassageExtraction, Triple};
use hippograph::graph::build_graph;
use hippograph::{KnowledgeGraph, NodePassageMatrix};

const PREDICATES: [&str; 4] = ["links to", "part of", "located in", "works with"];

/// Random graph with `n_nodes` phrases spread round-robin over
/// `n_passages` passages and roughly `n_nodes * avg_degree / 2` relation
/// edges. Deterministic for a given seed.
pub fn synthetic_bundle(
    n_nodes: usize,
    n_passages: usize,
    avg_degree: usize,
    seed: u64,
) -> (KnowledgeGraph, NodePassageMatrix) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let passages: Vec<Passage> = (0..n_passages)
        .map(|p| Passage {
            id: format!("p{p:05}"),
            title: String::new(),
            text: format!("synthetic passage {p}"),
        })
        .collect();
    let corpus = Corpus::from_passages(passages).unwrap();

    let mut extractions: Vec<PassageExtraction> = (0..n_passages)
        .map(|p| PassageExtraction {
            passage_id: format!("p{p:05}"),
            named_entities: Vec::new(),
            triples: Vec::new(),
            usage: TokenUsage::default(),
        })
        .collect();
    for i in 0..n_nodes {
        extractions[i % n_passages]
            .named_entities
            .push(format!("entity {i:05}"));
    }
    for _ in 0..n_nodes * avg_degree / 2 {
        let i = rng.random_range(0..n_nodes);
        let j = rng.random_range(0..n_nodes);
        if i == j {
            continue;
        }
        let predicate = PREDICATES[rng.random_range(0..PREDICATES.len())];
        extractions[i % n_passages].triples.push(Triple::new(
            &format!("entity {i:05}"),
            predicate,
            &format!("entity {j:05}"),
        ));
    }

    let (graph, matrix, _) = build_graph(&extractions, &corpus).unwrap();
    (graph, matrix)
}
