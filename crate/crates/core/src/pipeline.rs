//! Wires a RunConfig to concrete backends and drives the offline stages:
//! extraction dump, graph build, node embedding (with an on-disk cache),
//! synonym edges, and index persistence. Each stage reuses prior output
//! when it is already on disk, so the expensive steps run once.

use std::path::Path;

use crate::config::{DenseKind, EmbeddingKind, ExtractionKind, RunConfig};
use crate::corpus::Corpus;
use crate::embed::{
    cache, embed_all, EmbeddingProvider, EmbeddingStore, HashedProvider, RemoteEmbedder,
    RemoteEmbedderConfig,
};
use crate::error::{Error, Result};
use crate::extract::{
    index_extract, load_extractions, remote::RemoteLlmConfig, save_extractions, BackendDescriptor,
    BackendResponse, ExtractionBackend, FixtureBackend, NaiveBackend, PassageExtraction,
    PromptSet, RemoteBackend,
};
use crate::extract::AnswerBackend;
use crate::graph::{build_graph, load_index, save_index};
use crate::retrieval::{
    DenseScorer, EnsembleConfig, LexicalOverlapScorer, PprConfig, RetrieveOptions, SearchIndex,
};

/// One concrete extraction backend per config kind, behind a single type
/// so callers do not carry generics.
pub enum AnyExtractor {
    Fixture(FixtureBackend),
    Remote(Box<RemoteBackend>),
    Naive(NaiveBackend),
}

impl ExtractionBackend for AnyExtractor {
    fn descriptor(&self) -> BackendDescriptor {
        match self {
            AnyExtractor::Fixture(b) => b.descriptor(),
            AnyExtractor::Remote(b) => b.descriptor(),
            AnyExtractor::Naive(b) => b.descriptor(),
        }
    }

    fn passage_ner(&self, passage_input: &str) -> Result<BackendResponse> {
        match self {
            AnyExtractor::Fixture(b) => b.passage_ner(passage_input),
            AnyExtractor::Remote(b) => b.passage_ner(passage_input),
            AnyExtractor::Naive(b) => b.passage_ner(passage_input),
        }
    }

    fn passage_openie(&self, passage_input: &str, entities: &[String]) -> Result<BackendResponse> {
        match self {
            AnyExtractor::Fixture(b) => b.passage_openie(passage_input, entities),
            AnyExtractor::Remote(b) => b.passage_openie(passage_input, entities),
            AnyExtractor::Naive(b) => b.passage_openie(passage_input, entities),
        }
    }

    fn query_ner(&self, question: &str) -> Result<BackendResponse> {
        match self {
            AnyExtractor::Fixture(b) => b.query_ner(question),
            AnyExtractor::Remote(b) => b.query_ner(question),
            AnyExtractor::Naive(b) => b.query_ner(question),
        }
    }
}

impl AnswerBackend for AnyExtractor {
    fn qa_answer(&self, question: &str, passage_inputs: &[String]) -> Result<BackendResponse> {
        match self {
            AnyExtractor::Fixture(b) => b.qa_answer(question, passage_inputs),
            AnyExtractor::Remote(b) => b.qa_answer(question, passage_inputs),
            AnyExtractor::Naive(_) => Err(Error::Backend {
                name: "naive".into(),
                message: "the naive backend cannot answer questions".into(),
                fatal: false,
            }),
        }
    }
}

pub enum AnyEmbedder {
    Hashed(HashedProvider),
    Remote(Box<RemoteEmbedder>),
}

impl EmbeddingProvider for AnyEmbedder {
    fn name(&self) -> String {
        match self {
            AnyEmbedder::Hashed(p) => p.name(),
            AnyEmbedder::Remote(p) => p.name(),
        }
    }

    fn dimension(&self) -> usize {
        match self {
            AnyEmbedder::Hashed(p) => p.dimension(),
            AnyEmbedder::Remote(p) => p.dimension(),
        }
    }

    fn embed_batch(&self, phrases: &[String]) -> Result<Vec<Vec<f32>>> {
        match self {
            AnyEmbedder::Hashed(p) => p.embed_batch(phrases),
            AnyEmbedder::Remote(p) => p.embed_batch(phrases),
        }
    }
}

fn load_prompts(config: &RunConfig) -> Result<PromptSet> {
    match &config.prompts_dir {
        Some(dir) => PromptSet::load_dir(dir),
        None => Ok(PromptSet::default()),
    }
}

pub fn build_extractor(config: &RunConfig) -> Result<AnyExtractor> {
    match config.extraction.kind {
        ExtractionKind::Fixture => {
            let path = config.extraction.fixtures.as_deref().ok_or_else(|| {
                Error::Config("extraction.kind fixture needs extraction.fixtures".into())
            })?;
            Ok(AnyExtractor::Fixture(FixtureBackend::load(path)?))
        }
        ExtractionKind::Remote => {
            let spec = &config.extraction;
            let remote = RemoteBackend::new(
                RemoteLlmConfig {
                    endpoint: spec.endpoint.clone().unwrap_or_default(),
                    model: spec.model.clone().unwrap_or_default(),
                    api_key_env: spec.api_key_env.clone(),
                    timeout_secs: spec.timeout_secs,
                    max_retries: spec.max_retries,
                },
                load_prompts(config)?,
            )?;
            Ok(AnyExtractor::Remote(Box::new(remote)))
        }
        ExtractionKind::Naive => Ok(AnyExtractor::Naive(NaiveBackend)),
    }
}

pub fn build_embedder(config: &RunConfig) -> Result<AnyEmbedder> {
    match config.embedding.kind {
        EmbeddingKind::Hashed => {
            let spec = &config.embedding;
            let provider = if spec.synonyms.is_empty() {
                HashedProvider::new(spec.dimension, spec.seed)
            } else {
                HashedProvider::with_synonyms(
                    spec.dimension,
                    spec.seed,
                    spec.synonyms.iter().map(|(a, b)| (a.as_str(), b.as_str())),
                )
            };
            Ok(AnyEmbedder::Hashed(provider))
        }
        EmbeddingKind::Remote => {
            let spec = &config.embedding;
            let remote = RemoteEmbedder::new(RemoteEmbedderConfig {
                endpoint: spec.endpoint.clone().unwrap_or_default(),
                model: spec.model.clone().unwrap_or_default(),
                dimension: spec.dimension,
                api_key_env: spec.api_key_env.clone(),
                timeout_secs: spec.timeout_secs,
                max_retries: spec.max_retries,
            })?;
            Ok(AnyEmbedder::Remote(Box::new(remote)))
        }
    }
}

pub fn build_dense(config: &RunConfig) -> Option<Box<dyn DenseScorer>> {
    config.dense.as_ref().map(|spec| match spec.kind {
        DenseKind::Lexical => Box::new(LexicalOverlapScorer) as Box<dyn DenseScorer>,
    })
}

/// Retrieval knobs assembled from the flat config fields.
pub fn retrieve_options(config: &RunConfig) -> RetrieveOptions {
    RetrieveOptions {
        ppr: PprConfig {
            damping: config.damping,
            tolerance: config.tolerance,
            max_iterations: config.max_iterations,
            use_specificity: config.use_specificity,
            mode: config.mode,
            neighbor_epsilon: config.neighbor_epsilon,
        },
        use_synonymy: config.use_synonymy,
        ensemble: EnsembleConfig {
            theta: config.theta,
            enabled: config.ensemble,
        },
    }
}

/// Corpus extraction with dump reuse: an existing dump is loaded back
/// instead of re-querying the backend, so `extract` and `index` can run
/// as separate invocations without double-paying for LLM calls.
pub fn ensure_extractions(
    config: &RunConfig,
    corpus: &Corpus,
    extractor: &AnyExtractor,
) -> Result<Vec<PassageExtraction>> {
    let dump = config.extractions_path()?;
    if dump.exists() {
        log::info!("reusing extraction dump at {}", dump.display());
        let extractions = load_extractions(&dump)?;
        if extractions.len() != corpus.len() {
            return Err(Error::Invalid(format!(
                "extraction dump {} covers {} passages, corpus has {}; delete it to re-extract",
                dump.display(),
                extractions.len(),
                corpus.len()
            )));
        }
        return Ok(extractions);
    }
    let (extractions, usage) = index_extract(corpus, extractor, config.parallelism)?;
    if let Some(parent) = dump.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    save_extractions(&dump, &extractions)?;
    log::info!(
        "wrote extraction dump to {} ({} backend calls, {} prompt + {} completion tokens)",
        dump.display(),
        usage.calls,
        usage.prompt_tokens,
        usage.completion_tokens
    );
    Ok(extractions)
}

/// Node embeddings with a binary cache next to the index, keyed to the
/// provider name so a provider change forces a re-embed.
fn ensure_embeddings(
    index_dir: &Path,
    phrases: &[String],
    provider: &dyn EmbeddingProvider,
    batch_size: usize,
) -> Result<EmbeddingStore> {
    let path = index_dir.join(cache::cache_file_name(&provider.name()));
    if let Some(store) = cache::load(&path, phrases)? {
        log::info!("reusing embedding cache at {}", path.display());
        return Ok(store);
    }
    let store = embed_all(phrases, provider, batch_size)?;
    std::fs::create_dir_all(index_dir).map_err(|e| Error::io(index_dir, e))?;
    cache::save(&path, &store)?;
    Ok(store)
}

/// Runs the whole offline side: corpus in, persisted index out. Returns
/// the index ready for queries.
pub fn build_index(config: &RunConfig) -> Result<SearchIndex> {
    let corpus = Corpus::load(config.corpus_path()?)?;
    let index_dir = config.index_dir_path()?;
    let extractor = build_extractor(config)?;
    let extractions = ensure_extractions(config, &corpus, &extractor)?;
    let (mut graph, matrix, _) = build_graph(&extractions, &corpus)?;
    let embedder = build_embedder(config)?;
    let store = ensure_embeddings(
        index_dir,
        graph.nodes(),
        &embedder,
        config.embedding.batch_size,
    )?;
    graph.add_synonym_edges(&store, config.tau)?;
    save_index(index_dir, &graph, &matrix, &corpus, config.tau)?;
    log::info!(
        "indexed {} passages into {} nodes at {}",
        corpus.len(),
        graph.len(),
        index_dir.display()
    );
    let loaded = load_index(index_dir)?;
    SearchIndex::new(loaded, store)
}

/// Loads the persisted index, building it first when absent.
pub fn ensure_index(config: &RunConfig) -> Result<SearchIndex> {
    let index_dir = config.index_dir_path()?;
    if !index_dir.join("meta.json").exists() {
        log::info!("no index at {}; building", index_dir.display());
        return build_index(config);
    }
    let loaded = load_index(index_dir)?;
    let embedder = build_embedder(config)?;
    let store = ensure_embeddings(
        index_dir,
        loaded.graph.nodes(),
        &embedder,
        config.embedding.batch_size,
    )?;
    SearchIndex::new(loaded, store)
}
