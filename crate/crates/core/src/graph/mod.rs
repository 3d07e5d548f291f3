//! The knowledge graph built from passage extractions, the node-passage
//! count matrix, and node specificity. Node ordinals are assigned in
//! first-mention order and are dense in `[0, n)`; passage ordinals follow
//! corpus order. Both orderings are load-bearing for persistence and
//! tie-breaking.

pub mod store;

use std::collections::{HashMap, HashSet};

use crate::corpus::Corpus;
use crate::embed::EmbeddingStore;
use crate::error::{Error, Result};
use crate::extract::PassageExtraction;

pub use store::{load_index, save_index, LoadedIndex};

/// A subject-object edge contributed by one triple of one passage. The
/// predicate is a label on the edge; predicates never become nodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationEdge {
    pub subject: u32,
    pub object: u32,
    pub predicate: String,
    pub passage_id: String,
}

/// An embedding-similarity edge between two distinct phrases.
/// Stored once with `a < b`.
#[derive(Debug, Clone, PartialEq)]
pub struct SynonymEdge {
    pub a: u32,
    pub b: u32,
    pub score: f32,
}

#[derive(Debug, Clone, Default)]
pub struct KnowledgeGraph {
    nodes: Vec<String>,
    by_phrase: HashMap<String, u32>,
    pub relation_edges: Vec<RelationEdge>,
    pub synonym_edges: Vec<SynonymEdge>,
}

impl KnowledgeGraph {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn phrase(&self, ordinal: u32) -> Option<&str> {
        self.nodes.get(ordinal as usize).map(String::as_str)
    }

    pub fn ordinal_of(&self, phrase: &str) -> Option<u32> {
        self.by_phrase.get(phrase).copied()
    }

    fn ensure_node(&mut self, phrase: &str) -> u32 {
        if let Some(&ordinal) = self.by_phrase.get(phrase) {
            return ordinal;
        }
        let ordinal = self.nodes.len() as u32;
        self.nodes.push(phrase.to_string());
        self.by_phrase.insert(phrase.to_string(), ordinal);
        ordinal
    }

    /// Rebuilds a graph from persisted parts, re-checking every invariant
    /// the builder enforces.
    pub(crate) fn from_parts(
        nodes: Vec<String>,
        relation_edges: Vec<RelationEdge>,
        synonym_edges: Vec<SynonymEdge>,
    ) -> Result<Self> {
        let mut by_phrase = HashMap::with_capacity(nodes.len());
        for (i, phrase) in nodes.iter().enumerate() {
            if by_phrase.insert(phrase.clone(), i as u32).is_some() {
                return Err(Error::Invalid(format!("duplicate node phrase {phrase:?}")));
            }
        }
        let n = nodes.len() as u32;
        for edge in &relation_edges {
            if edge.subject >= n || edge.object >= n {
                return Err(Error::Invalid(format!(
                    "relation edge {}-{} out of node range {n}",
                    edge.subject, edge.object
                )));
            }
        }
        let mut seen_pairs = HashSet::new();
        for edge in &synonym_edges {
            if edge.a >= edge.b || edge.b >= n {
                return Err(Error::Invalid(format!(
                    "synonym edge ({}, {}) violates a < b < {n}",
                    edge.a, edge.b
                )));
            }
            if !seen_pairs.insert((edge.a, edge.b)) {
                return Err(Error::Invalid(format!(
                    "synonym edge ({}, {}) stored twice",
                    edge.a, edge.b
                )));
            }
        }
        Ok(KnowledgeGraph {
            nodes,
            by_phrase,
            relation_edges,
            synonym_edges,
        })
    }

    /// Connects every pair of distinct nodes whose embeddings reach the
    /// similarity threshold. `store` rows must align with node ordinals.
    /// Replaces any synonym edges already present.
    pub fn add_synonym_edges(&mut self, store: &EmbeddingStore, tau: f64) -> Result<()> {
        if store.len() != self.nodes.len() {
            return Err(Error::Invalid(format!(
                "embedding store has {} rows for {} nodes",
                store.len(),
                self.nodes.len()
            )));
        }
        if !(tau > 0.0 && tau <= 1.0) {
            return Err(Error::Invalid(format!("tau {tau} outside (0, 1]")));
        }
        self.synonym_edges = crate::embed::synonym_pairs(store, tau)
            .into_iter()
            .map(|(a, b, score)| SynonymEdge { a, b, score })
            .collect();
        Ok(())
    }

    pub fn stats(&self) -> GraphStats {
        let labels: HashSet<&str> = self
            .relation_edges
            .iter()
            .map(|e| e.predicate.as_str())
            .collect();
        let triples: HashSet<(u32, &str, u32)> = self
            .relation_edges
            .iter()
            .map(|e| (e.subject, e.predicate.as_str(), e.object))
            .collect();
        GraphStats {
            unique_nodes: self.nodes.len(),
            unique_relation_labels: labels.len(),
            unique_triples: triples.len(),
            synonym_edge_count: self.synonym_edges.len(),
        }
    }
}

/// Table-style counting over the graph: node count, distinct predicate
/// labels, distinct (s, p, o) triples, and synonym edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GraphStats {
    pub unique_nodes: usize,
    pub unique_relation_labels: usize,
    pub unique_triples: usize,
    pub synonym_edge_count: usize,
}

/// Sparse node-by-passage count matrix. `rows[i]` lists, in ascending
/// passage order, the passages whose extraction mentions node `i` and how
/// many of their triples do so (subject and object slots counted
/// separately; an isolated entity counts once).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NodePassageMatrix {
    rows: Vec<Vec<(u32, u32)>>,
    n_passages: usize,
}

impl NodePassageMatrix {
    pub fn n_nodes(&self) -> usize {
        self.rows.len()
    }

    pub fn n_passages(&self) -> usize {
        self.n_passages
    }

    pub fn row(&self, node: u32) -> &[(u32, u32)] {
        &self.rows[node as usize]
    }

    pub fn count(&self, node: u32, passage: u32) -> u32 {
        match self.rows[node as usize].binary_search_by_key(&passage, |&(p, _)| p) {
            Ok(i) => self.rows[node as usize][i].1,
            Err(_) => 0,
        }
    }

    pub fn column_sum(&self, passage: u32) -> u64 {
        self.rows
            .iter()
            .map(|row| self.count_in_row(row, passage))
            .sum()
    }

    fn count_in_row(&self, row: &[(u32, u32)], passage: u32) -> u64 {
        match row.binary_search_by_key(&passage, |&(p, _)| p) {
            Ok(i) => row[i].1 as u64,
            Err(_) => 0,
        }
    }

    pub(crate) fn from_parts(rows: Vec<Vec<(u32, u32)>>, n_passages: usize) -> Result<Self> {
        for (i, row) in rows.iter().enumerate() {
            if row.is_empty() {
                return Err(Error::Invalid(format!("node {i} appears in no passage")));
            }
            for window in row.windows(2) {
                if window[0].0 >= window[1].0 {
                    return Err(Error::Invalid(format!("matrix row {i} not strictly sorted")));
                }
            }
            for &(passage, count) in row {
                if passage as usize >= n_passages {
                    return Err(Error::Invalid(format!(
                        "matrix row {i} references passage {passage} beyond {n_passages}"
                    )));
                }
                if count == 0 {
                    return Err(Error::Invalid(format!("matrix row {i} stores a zero count")));
                }
            }
        }
        Ok(NodePassageMatrix { rows, n_passages })
    }
}

/// Inverse passage frequency per node: `1 / |passages mentioning the
/// node|`, in `(0, 1]`. Derived from the matrix, never stored.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeSpecificity(Vec<f64>);

impl NodeSpecificity {
    pub fn from_matrix(matrix: &NodePassageMatrix) -> Self {
        NodeSpecificity(
            matrix
                .rows
                .iter()
                .map(|row| 1.0 / row.len().max(1) as f64)
                .collect(),
        )
    }

    pub fn get(&self, node: u32) -> f64 {
        self.0[node as usize]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Graph and matrix growing together, one passage at a time.
#[derive(Debug, Clone, Default)]
pub struct GraphBundle {
    pub graph: KnowledgeGraph,
    pub matrix: NodePassageMatrix,
}

impl GraphBundle {
    pub fn new() -> Self {
        GraphBundle::default()
    }

    /// Folds one passage's extraction into the graph and matrix. The
    /// passage takes the next free column ordinal, so append order must
    /// equal corpus order.
    pub fn append(&mut self, extraction: &PassageExtraction) {
        let passage = self.matrix.n_passages as u32;
        let mut counts: HashMap<u32, u32> = HashMap::new();

        // Entities are registered before triple endpoints so node ordinal
        // assignment mirrors the NER-then-OpenIE extraction order.
        for entity in &extraction.named_entities {
            self.graph.ensure_node(entity);
        }
        let mut seen = HashSet::new();
        for triple in &extraction.triples {
            if !seen.insert((triple.subject.as_str(), triple.predicate.as_str(), triple.object.as_str())) {
                continue;
            }
            let subject = self.graph.ensure_node(&triple.subject);
            let object = self.graph.ensure_node(&triple.object);
            self.graph.relation_edges.push(RelationEdge {
                subject,
                object,
                predicate: triple.predicate.clone(),
                passage_id: extraction.passage_id.clone(),
            });
            *counts.entry(subject).or_insert(0) += 1;
            *counts.entry(object).or_insert(0) += 1;
        }
        // Entities untouched by every triple still count once: they are
        // legal query-link targets and must be reachable through the
        // matrix.
        for entity in &extraction.named_entities {
            let node = self.graph.ordinal_of(entity).expect("just ensured");
            counts.entry(node).or_insert(1);
        }

        self.matrix.rows.resize(self.graph.len(), Vec::new());
        let mut touched: Vec<(u32, u32)> = counts.into_iter().collect();
        touched.sort_unstable();
        for (node, count) in touched {
            // Each append introduces a fresh, maximal passage ordinal, so
            // pushing keeps every row sorted.
            self.matrix.rows[node as usize].push((passage, count));
        }
        self.matrix.n_passages += 1;
    }

    pub fn specificity(&self) -> NodeSpecificity {
        NodeSpecificity::from_matrix(&self.matrix)
    }
}

/// Builds graph, matrix, and specificity for a whole corpus. Extractions
/// must align one-to-one with corpus passages, in order.
pub fn build_graph(
    extractions: &[PassageExtraction],
    corpus: &Corpus,
) -> Result<(KnowledgeGraph, NodePassageMatrix, NodeSpecificity)> {
    if extractions.len() != corpus.len() {
        return Err(Error::Invalid(format!(
            "{} extractions for {} passages",
            extractions.len(),
            corpus.len()
        )));
    }
    for (i, extraction) in extractions.iter().enumerate() {
        let expected = &corpus.get(i).expect("length checked").id;
        if &extraction.passage_id != expected {
            return Err(Error::Invalid(format!(
                "extraction {i} is for passage {:?}, corpus has {:?}",
                extraction.passage_id, expected
            )));
        }
    }
    let mut bundle = GraphBundle::new();
    for extraction in extractions {
        bundle.append(extraction);
    }
    let specificity = bundle.specificity();
    Ok((bundle.graph, bundle.matrix, specificity))
}
