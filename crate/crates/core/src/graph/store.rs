//! Index persistence: a directory of JSON Lines files plus a meta.json
//! version stamp. Writes are deterministic, so saving a loaded index
//! reproduces the original bytes; every load re-validates the invariants
//! the builder enforced.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::graph::{KnowledgeGraph, NodePassageMatrix, NodeSpecificity, RelationEdge, SynonymEdge};
use crate::jsonl;

/// Bumped whenever any file's schema changes. Loading any other version
/// fails: migration is out of scope at these data sizes, re-indexing is
/// not.
pub const FORMAT_VERSION: u32 = 1;

/// Identifier of the phrase normalization scheme baked into the nodes.
/// A mismatch means query phrases would be normalized differently than
/// the stored ones and linking silently degrades, so loads reject it.
pub const NORMALIZATION_ID: &str = "nfc-lower-collapse-quotes-v1";

#[derive(Debug, Serialize, Deserialize)]
struct IndexMeta {
    format: u32,
    normalization: String,
    tau: f64,
    nodes: usize,
    relation_edges: usize,
    synonym_edges: usize,
    passages: usize,
}

#[derive(Serialize, Deserialize)]
struct NodeRecord {
    ordinal: u32,
    phrase: String,
}

#[derive(Serialize, Deserialize)]
struct TripleRecord {
    subject: u32,
    predicate: String,
    object: u32,
    passage_id: String,
}

#[derive(Serialize, Deserialize)]
struct SynonymRecord {
    a: u32,
    b: u32,
    score: f32,
}

#[derive(Serialize, Deserialize)]
struct MatrixRecord {
    node: u32,
    passage: u32,
    count: u32,
}

/// Everything a retrieval session needs from disk. Specificity is derived
/// from the matrix on load rather than stored.
#[derive(Debug)]
pub struct LoadedIndex {
    pub graph: KnowledgeGraph,
    pub matrix: NodePassageMatrix,
    pub specificity: NodeSpecificity,
    pub corpus: Corpus,
    pub tau: f64,
}

pub fn save_index(
    dir: &Path,
    graph: &KnowledgeGraph,
    matrix: &NodePassageMatrix,
    corpus: &Corpus,
    tau: f64,
) -> Result<()> {
    if matrix.n_nodes() != graph.len() || matrix.n_passages() != corpus.len() {
        return Err(Error::Invalid(format!(
            "index shapes disagree: {} nodes / {} matrix rows, {} passages / {} matrix columns",
            graph.len(),
            matrix.n_nodes(),
            corpus.len(),
            matrix.n_passages()
        )));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let meta = IndexMeta {
        format: FORMAT_VERSION,
        normalization: NORMALIZATION_ID.to_string(),
        tau,
        nodes: graph.len(),
        relation_edges: graph.relation_edges.len(),
        synonym_edges: graph.synonym_edges.len(),
        passages: corpus.len(),
    };
    let meta_path = dir.join("meta.json");
    let meta_json = serde_json::to_string_pretty(&meta).expect("meta always serializes");
    std::fs::write(&meta_path, meta_json + "\n").map_err(|e| Error::io(&meta_path, e))?;

    let nodes: Vec<NodeRecord> = graph
        .nodes()
        .iter()
        .enumerate()
        .map(|(i, phrase)| NodeRecord {
            ordinal: i as u32,
            phrase: phrase.clone(),
        })
        .collect();
    jsonl::write(&dir.join("nodes.jsonl"), &nodes)?;

    let triples: Vec<TripleRecord> = graph
        .relation_edges
        .iter()
        .map(|e| TripleRecord {
            subject: e.subject,
            predicate: e.predicate.clone(),
            object: e.object,
            passage_id: e.passage_id.clone(),
        })
        .collect();
    jsonl::write(&dir.join("triples.jsonl"), &triples)?;

    let synonyms: Vec<SynonymRecord> = graph
        .synonym_edges
        .iter()
        .map(|e| SynonymRecord {
            a: e.a,
            b: e.b,
            score: e.score,
        })
        .collect();
    jsonl::write(&dir.join("synonyms.jsonl"), &synonyms)?;

    let mut cells = Vec::new();
    for node in 0..matrix.n_nodes() as u32 {
        for &(passage, count) in matrix.row(node) {
            cells.push(MatrixRecord {
                node,
                passage,
                count,
            });
        }
    }
    jsonl::write(&dir.join("matrix.jsonl"), &cells)?;

    corpus.save(&dir.join("passages.jsonl"))
}

pub fn load_index(dir: &Path) -> Result<LoadedIndex> {
    let meta_path = dir.join("meta.json");
    let meta_text = std::fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let meta: IndexMeta = serde_json::from_str(&meta_text).map_err(|e| Error::IndexFormat {
        path: meta_path.clone(),
        message: e.to_string(),
    })?;
    if meta.format != FORMAT_VERSION {
        let relation = if meta.format > FORMAT_VERSION {
            "newer than"
        } else {
            "older than"
        };
        return Err(Error::IndexFormat {
            path: meta_path,
            message: format!(
                "format {} is {relation} the supported version {FORMAT_VERSION}; rebuild the index",
                meta.format
            ),
        });
    }
    if meta.normalization != NORMALIZATION_ID {
        return Err(Error::IndexFormat {
            path: meta_path,
            message: format!(
                "normalization scheme {:?} does not match this build's {NORMALIZATION_ID:?}",
                meta.normalization
            ),
        });
    }

    let corpus = Corpus::load(&dir.join("passages.jsonl"))?;

    let nodes_path = dir.join("nodes.jsonl");
    let mut phrases = Vec::new();
    for (line, record) in jsonl::read::<NodeRecord>(&nodes_path)? {
        if record.ordinal as usize != phrases.len() {
            return Err(corrupt(&nodes_path, line, "ordinals out of sequence"));
        }
        phrases.push(record.phrase);
    }

    let triples_path = dir.join("triples.jsonl");
    let relation_edges: Vec<RelationEdge> = jsonl::read::<TripleRecord>(&triples_path)?
        .into_iter()
        .map(|(_, r)| RelationEdge {
            subject: r.subject,
            object: r.object,
            predicate: r.predicate,
            passage_id: r.passage_id,
        })
        .collect();

    let synonyms_path = dir.join("synonyms.jsonl");
    let synonym_edges: Vec<SynonymEdge> = jsonl::read::<SynonymRecord>(&synonyms_path)?
        .into_iter()
        .map(|(_, r)| SynonymEdge {
            a: r.a,
            b: r.b,
            score: r.score,
        })
        .collect();

    let graph = KnowledgeGraph::from_parts(phrases, relation_edges, synonym_edges)
        .map_err(|e| Error::IndexFormat {
            path: dir.join("nodes.jsonl"),
            message: e.to_string(),
        })?;

    let matrix_path = dir.join("matrix.jsonl");
    let mut rows: Vec<Vec<(u32, u32)>> = vec![Vec::new(); graph.len()];
    for (line, cell) in jsonl::read::<MatrixRecord>(&matrix_path)? {
        if cell.node as usize >= rows.len() {
            return Err(corrupt(&matrix_path, line, "cell references unknown node"));
        }
        rows[cell.node as usize].push((cell.passage, cell.count));
    }
    let matrix = NodePassageMatrix::from_parts(rows, corpus.len()).map_err(|e| Error::IndexFormat {
        path: matrix_path,
        message: e.to_string(),
    })?;

    // Cross-check the meta counts so a truncated file fails loudly even
    // when each line parses.
    let checks = [
        ("nodes.jsonl", meta.nodes, graph.len()),
        ("triples.jsonl", meta.relation_edges, graph.relation_edges.len()),
        ("synonyms.jsonl", meta.synonym_edges, graph.synonym_edges.len()),
        ("passages.jsonl", meta.passages, corpus.len()),
    ];
    for (file, expected, actual) in checks {
        if expected != actual {
            return Err(Error::IndexFormat {
                path: dir.join(file),
                message: format!("meta.json promises {expected} records, file has {actual}"),
            });
        }
    }

    let specificity = NodeSpecificity::from_matrix(&matrix);
    Ok(LoadedIndex {
        graph,
        matrix,
        specificity,
        corpus,
        tau: meta.tau,
    })
}

fn corrupt(path: &Path, line: usize, message: &str) -> Error {
    Error::IndexFormat {
        path: PathBuf::from(path),
        message: format!("line {line}: {message}"),
    }
}
