//! Phrase embeddings: a pluggable provider, an aligned in-memory store of
//! unit vectors, exact cosine scans for query linking, and the synonym
//! pair scan that feeds the graph's similarity edges. Unlike extraction,
//! embedding failures are never degradable: a partially embedded node set
//! would silently skew every cosine comparison.

pub mod cache;
pub mod hashed;
pub mod remote;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use hashed::HashedProvider;
pub use remote::{RemoteEmbedder, RemoteEmbedderConfig};

pub trait EmbeddingProvider: Send + Sync {
    /// Stable identifier; embedding caches are keyed by it, so it must
    /// change whenever the provider's output could.
    fn name(&self) -> String;

    fn dimension(&self) -> usize;

    /// One vector of exactly `dimension` per input, in input order.
    fn embed_batch(&self, phrases: &[String]) -> Result<Vec<Vec<f32>>>;
}

/// Phrase-aligned matrix of unit-normalized embedding rows.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    phrases: Vec<String>,
    vectors: Vec<f32>,
    dimension: usize,
}

impl EmbeddingStore {
    pub fn new(dimension: usize) -> Self {
        EmbeddingStore {
            phrases: Vec::new(),
            vectors: Vec::new(),
            dimension,
        }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.phrases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phrases.is_empty()
    }

    pub fn phrase(&self, row: u32) -> &str {
        &self.phrases[row as usize]
    }

    pub fn row(&self, row: u32) -> &[f32] {
        let start = row as usize * self.dimension;
        &self.vectors[start..start + self.dimension]
    }

    /// Appends a row, unit-normalizing it in f64 before the f32 store.
    pub fn push(&mut self, phrase: &str, vector: &[f32]) -> Result<()> {
        if vector.len() != self.dimension {
            return Err(Error::Embedding {
                name: "store".into(),
                message: format!(
                    "vector for {phrase:?} has dimension {}, store holds {}",
                    vector.len(),
                    self.dimension
                ),
            });
        }
        let norm = vector.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::Embedding {
                name: "store".into(),
                message: format!("vector for {phrase:?} has unusable norm {norm}"),
            });
        }
        self.vectors.extend(vector.iter().map(|&x| (x as f64 / norm) as f32));
        self.phrases.push(phrase.to_string());
        Ok(())
    }

    /// Appends a row that is already unit-normalized, keeping its bits
    /// verbatim so a cache round trip through disk cannot perturb scores.
    pub(crate) fn push_raw(&mut self, phrase: &str, vector: &[f32]) -> Result<()> {
        if vector.len() != self.dimension {
            return Err(Error::Embedding {
                name: "store".into(),
                message: format!(
                    "vector for {phrase:?} has dimension {}, store holds {}",
                    vector.len(),
                    self.dimension
                ),
            });
        }
        if vector.iter().any(|x| !x.is_finite()) {
            return Err(Error::Embedding {
                name: "store".into(),
                message: format!("vector for {phrase:?} holds a non-finite value"),
            });
        }
        self.vectors.extend_from_slice(vector);
        self.phrases.push(phrase.to_string());
        Ok(())
    }

    fn dot(&self, row: u32, other: &[f32]) -> f64 {
        self.row(row)
            .iter()
            .zip(other)
            .map(|(&a, &b)| a as f64 * b as f64)
            .sum()
    }
}

/// Cosine similarity of two raw vectors, in [-1, 1] up to rounding.
pub fn cosine(u: &[f32], v: &[f32]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Invalid(format!(
            "cosine over mismatched dimensions {} and {}",
            u.len(),
            v.len()
        )));
    }
    let mut dot = 0f64;
    let mut nu = 0f64;
    let mut nv = 0f64;
    for (&a, &b) in u.iter().zip(v) {
        dot += a as f64 * b as f64;
        nu += (a as f64).powi(2);
        nv += (b as f64).powi(2);
    }
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::Invalid("cosine of a zero vector".into()));
    }
    Ok(dot / (nu.sqrt() * nv.sqrt()))
}

/// Extra attempts after the first for a failed provider batch.
const EXTRA_BATCH_ATTEMPTS: u32 = 2;

/// Embeds all phrases through the provider in batches. Output rows align
/// with input order; any batch that keeps failing aborts the run.
pub fn embed_all(
    phrases: &[String],
    provider: &dyn EmbeddingProvider,
    batch_size: usize,
) -> Result<EmbeddingStore> {
    if batch_size == 0 {
        return Err(Error::Invalid("batch_size must be at least 1".into()));
    }
    let mut store = EmbeddingStore::new(provider.dimension());
    for (batch_no, batch) in phrases.chunks(batch_size).enumerate() {
        let mut vectors = None;
        let mut last_error = String::new();
        for _ in 0..=EXTRA_BATCH_ATTEMPTS {
            match provider.embed_batch(batch) {
                Ok(v) => {
                    vectors = Some(v);
                    break;
                }
                Err(e) => {
                    log::warn!("embedding batch {batch_no} failed: {e}");
                    last_error = e.to_string();
                }
            }
        }
        let Some(vectors) = vectors else {
            return Err(Error::Embedding {
                name: provider.name(),
                message: format!("batch {batch_no} failed after retries: {last_error}"),
            });
        };
        if vectors.len() != batch.len() {
            return Err(Error::Embedding {
                name: provider.name(),
                message: format!(
                    "batch {batch_no} returned {} vectors for {} phrases",
                    vectors.len(),
                    batch.len()
                ),
            });
        }
        for (phrase, vector) in batch.iter().zip(&vectors) {
            store.push(phrase, vector).map_err(|e| Error::Embedding {
                name: provider.name(),
                message: format!("batch {batch_no}: {e}"),
            })?;
        }
    }
    Ok(store)
}

/// A query entity resolved to its most similar stored phrase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkResult {
    pub query_entity: String,
    pub node_ordinal: u32,
    pub score: f32,
}

/// Links each query entity to the argmax-cosine row of the store, ties
/// broken by the lowest ordinal. Exactly one result per entity.
pub fn link_query_entities(
    entities: &[String],
    store: &EmbeddingStore,
    provider: &dyn EmbeddingProvider,
) -> Result<Vec<LinkResult>> {
    if store.is_empty() {
        return Err(Error::Invalid("cannot link against an empty node store".into()));
    }
    if entities.is_empty() {
        return Ok(Vec::new());
    }
    let query_store = embed_all(entities, provider, entities.len())?;
    if query_store.dimension() != store.dimension() {
        return Err(Error::Embedding {
            name: provider.name(),
            message: format!(
                "query dimension {} does not match stored dimension {}",
                query_store.dimension(),
                store.dimension()
            ),
        });
    }
    let mut links = Vec::with_capacity(entities.len());
    for (i, entity) in entities.iter().enumerate() {
        let query_row = query_store.row(i as u32);
        let mut best: (u32, f32) = (0, f32::NEG_INFINITY);
        for node in 0..store.len() as u32 {
            let score = store.dot(node, query_row) as f32;
            // Strict comparison keeps the lowest ordinal on ties.
            if score > best.1 {
                best = (node, score);
            }
        }
        links.push(LinkResult {
            query_entity: entity.clone(),
            node_ordinal: best.0,
            score: best.1,
        });
    }
    Ok(links)
}

/// All unordered row pairs with cosine at or above `tau`, excluding pairs
/// of identical phrases. Exact full scan; the threshold is applied after
/// rounding the score to f32, so a pair sitting exactly at `tau` stays in.
pub fn synonym_pairs(store: &EmbeddingStore, tau: f64) -> Vec<(u32, u32, f32)> {
    let threshold = tau as f32;
    let mut pairs = Vec::new();
    for i in 0..store.len() as u32 {
        for j in (i + 1)..store.len() as u32 {
            if store.phrase(i) == store.phrase(j) {
                continue;
            }
            let score = store.dot(i, store.row(j)) as f32;
            if score >= threshold {
                pairs.push((i, j, score));
            }
        }
    }
    pairs
}
