//! Deterministic local embedding provider. Each phrase is hashed to seed a
//! stream of Gaussian coordinates, so distinct phrases get near-orthogonal
//! vectors at reasonable dimensions, identical phrases get identical
//! vectors, and nothing depends on the network. An optional synonym table
//! maps chosen phrases onto a shared canonical form, which is how tests
//! and demos make "car" and "automobile" embed identically.

use std::collections::HashMap;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use crate::embed::EmbeddingProvider;
use crate::error::Result;
use crate::extract::normalize_phrase;

#[derive(Debug, Clone)]
pub struct HashedProvider {
    dimension: usize,
    seed: u64,
    /// Normalized alias to normalized canonical form, chains resolved.
    canon: HashMap<String, String>,
}

impl HashedProvider {
    pub fn new(dimension: usize, seed: u64) -> Self {
        HashedProvider {
            dimension,
            seed,
            canon: HashMap::new(),
        }
    }

    /// `pairs` maps alias to target; chains (a to b, b to c) are resolved
    /// so every member of a group lands on one canonical form.
    pub fn with_synonyms<I, S>(dimension: usize, seed: u64, pairs: I) -> Self
    where
        I: IntoIterator<Item = (S, S)>,
        S: AsRef<str>,
    {
        let mut canon: HashMap<String, String> = HashMap::new();
        for (alias, target) in pairs {
            canon.insert(
                normalize_phrase(alias.as_ref()),
                normalize_phrase(target.as_ref()),
            );
        }
        // Resolve chains; a cycle resolves to its smallest member so the
        // group still shares one form.
        let keys: Vec<String> = canon.keys().cloned().collect();
        for key in keys {
            let mut seen = vec![key.clone()];
            let mut current = canon[&key].clone();
            while let Some(next) = canon.get(&current) {
                if seen.contains(&current) {
                    seen.push(current.clone());
                    current = seen.iter().min().unwrap().clone();
                    break;
                }
                seen.push(current.clone());
                current = next.clone();
            }
            canon.insert(key, current);
        }
        HashedProvider {
            dimension,
            seed,
            canon,
        }
    }

    fn canonical(&self, phrase: &str) -> String {
        let normalized = normalize_phrase(phrase);
        self.canon.get(&normalized).cloned().unwrap_or(normalized)
    }

    fn vector_for(&self, phrase: &str) -> Vec<f32> {
        let mut hasher = Sha256::new();
        hasher.update(self.seed.to_le_bytes());
        hasher.update(self.canonical(phrase).as_bytes());
        let digest: [u8; 32] = hasher.finalize().into();
        let mut rng = ChaCha20Rng::from_seed(digest);
        (0..self.dimension)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect()
    }
}

impl EmbeddingProvider for HashedProvider {
    fn name(&self) -> String {
        // The cache file is keyed by this name, so everything that alters
        // output must appear in it, including the synonym table.
        if self.canon.is_empty() {
            format!("hashed-d{}-s{}", self.dimension, self.seed)
        } else {
            let mut entries: Vec<String> = self
                .canon
                .iter()
                .map(|(alias, target)| format!("{alias}\u{0}{target}"))
                .collect();
            entries.sort();
            let mut hasher = Sha256::new();
            for entry in &entries {
                hasher.update(entry.as_bytes());
                hasher.update([1u8]);
            }
            let table_digest = hex::encode(&hasher.finalize()[..4]);
            format!("hashed-d{}-s{}-syn{table_digest}", self.dimension, self.seed)
        }
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed_batch(&self, phrases: &[String]) -> Result<Vec<Vec<f32>>> {
        Ok(phrases.iter().map(|p| self.vector_for(p)).collect())
    }
}
