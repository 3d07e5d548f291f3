//! Graph-based passage retrieval.
//!
//! The pipeline has an offline half and an online half. Offline, every
//! passage in a corpus goes through named-entity recognition and open
//! information extraction, and the resulting triples are merged into a
//! single knowledge graph whose nodes are normalized noun phrases. Nodes
//! with near-duplicate surface forms are connected by synonymy edges found
//! with a dense phrase encoder, and a node-by-passage count matrix records
//! where each node was mentioned. Online, a query is reduced to its named
//! entities, those entities are linked to graph nodes by embedding
//! similarity, and a Personalized PageRank walk seeded at the linked nodes
//! spreads scores over the graph. Passage scores are the walk distribution
//! multiplied through the count matrix.
//!
//! Everything downstream of the LLM and encoder calls is deterministic:
//! fixed iteration orders, explicit tie-breaking by insertion ordinal, and
//! seeded hashing where randomness is unavoidable.

pub mod config;
pub mod corpus;
pub mod embed;
pub mod error;
pub mod eval;
pub mod extract;
pub mod graph;
mod jsonl;
pub mod metrics;
pub mod pipeline;
pub mod reader;
pub mod retrieval;

pub use config::RunConfig;
pub use corpus::{Corpus, Passage, QueryRecord};
pub use error::{Error, Result};
pub use graph::{GraphBundle, GraphStats, KnowledgeGraph, NodePassageMatrix};
pub use retrieval::{PprConfig, RankMode, RankedResult, SearchIndex};
