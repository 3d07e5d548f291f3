//! Two-step extraction pipeline: named-entity recognition over each
//! passage, then open information extraction conditioned on those
//! entities. All phrases leave this module normalized and deduplicated.
//! Failures of a single passage degrade to an empty extraction; only
//! systemic backend failures abort a run.

pub mod backend;
pub mod fixture;
pub mod naive;
pub mod normalize;
mod parse;
pub mod prompts;
pub mod remote;

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Passage};
use crate::error::{Error, Result};
use crate::jsonl;

pub use backend::{AnswerBackend, BackendDescriptor, BackendResponse, ExtractionBackend, TokenUsage};
pub use fixture::FixtureBackend;
pub use naive::NaiveBackend;
pub use normalize::normalize_phrase;
pub use prompts::PromptSet;
pub use remote::{RemoteBackend, RemoteLlmConfig};

/// One (subject, predicate, object) noun-phrase triple. Serialized as a
/// plain three-element array, matching the shape the LLM is asked for.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "(String, String, String)", into = "(String, String, String)")]
pub struct Triple {
    pub subject: String,
    pub predicate: String,
    pub object: String,
}

impl From<(String, String, String)> for Triple {
    fn from((subject, predicate, object): (String, String, String)) -> Self {
        Triple {
            subject,
            predicate,
            object,
        }
    }
}

impl From<Triple> for (String, String, String) {
    fn from(t: Triple) -> Self {
        (t.subject, t.predicate, t.object)
    }
}

impl Triple {
    pub fn new(subject: &str, predicate: &str, object: &str) -> Self {
        Triple {
            subject: subject.into(),
            predicate: predicate.into(),
            object: object.into(),
        }
    }
}

/// Everything extracted from one passage. Entities and triples are
/// normalized and deduplicated; `usage` covers both LLM calls.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PassageExtraction {
    pub passage_id: String,
    pub named_entities: Vec<String>,
    pub triples: Vec<Triple>,
    pub usage: TokenUsage,
}

/// Extra attempts after the first when a response fails to parse or the
/// call fails transiently. Deterministic backends skip retries: replaying
/// the same bytes cannot change the outcome.
const EXTRA_ATTEMPTS: u32 = 2;

fn call_and_parse<T: Default>(
    backend: &dyn ExtractionBackend,
    what: &str,
    call: impl Fn() -> Result<BackendResponse>,
    strict: impl Fn(&str) -> Option<T>,
    salvage: impl Fn(&str) -> T,
) -> Result<(T, TokenUsage)> {
    let attempts = if backend.descriptor().deterministic {
        1
    } else {
        1 + EXTRA_ATTEMPTS
    };
    let mut usage = TokenUsage::default();
    let mut last_text = None;
    for attempt in 1..=attempts {
        match call() {
            Err(e) if e.is_degradable() => {
                log::warn!("{what}: attempt {attempt}/{attempts} failed: {e}");
            }
            Err(e) => return Err(e),
            Ok(response) => {
                usage.add(&response.usage);
                if let Some(parsed) = strict(&response.text) {
                    return Ok((parsed, usage));
                }
                log::warn!("{what}: attempt {attempt}/{attempts} returned an unparseable response");
                last_text = Some(response.text);
            }
        }
    }
    match last_text {
        Some(text) => Ok((salvage(&text), usage)),
        None => Ok((T::default(), usage)),
    }
}

fn clean_phrases(raw: Vec<String>) -> Vec<String> {
    let mut seen = HashSet::new();
    let mut phrases = Vec::new();
    for phrase in raw {
        let normalized = normalize_phrase(&phrase);
        if !normalized.is_empty() && seen.insert(normalized.clone()) {
            phrases.push(normalized);
        }
    }
    phrases
}

fn clean_triples(raw: Vec<[String; 3]>) -> Vec<Triple> {
    let mut seen = HashSet::new();
    let mut triples = Vec::new();
    for [s, p, o] in raw {
        let triple = Triple {
            subject: normalize_phrase(&s),
            predicate: normalize_phrase(&p),
            object: normalize_phrase(&o),
        };
        if triple.subject.is_empty() || triple.predicate.is_empty() || triple.object.is_empty() {
            log::warn!("dropping triple with an empty component: {triple:?}");
            continue;
        }
        if seen.insert(triple.clone()) {
            triples.push(triple);
        }
    }
    triples
}

/// Named entities of one passage, normalized and deduplicated.
pub fn extract_entities(
    passage: &Passage,
    backend: &dyn ExtractionBackend,
) -> Result<(Vec<String>, TokenUsage)> {
    let input = passage.prompt_input();
    let what = format!("ner for passage {:?}", passage.id);
    let (raw, usage) = call_and_parse(
        backend,
        &what,
        || backend.passage_ner(&input),
        parse::parse_entity_response,
        parse::salvage_entities,
    )?;
    Ok((clean_phrases(raw), usage))
}

/// Triples of one passage, conditioned on its extracted entities.
pub fn extract_triples(
    passage: &Passage,
    entities: &[String],
    backend: &dyn ExtractionBackend,
) -> Result<(Vec<Triple>, TokenUsage)> {
    let input = passage.prompt_input();
    let what = format!("openie for passage {:?}", passage.id);
    let (raw, usage) = call_and_parse(
        backend,
        &what,
        || backend.passage_openie(&input, entities),
        parse::parse_triple_response,
        parse::salvage_triples,
    )?;
    Ok((clean_triples(raw), usage))
}

/// Named entities of a question at retrieval time. An empty result sends
/// the caller down the retrieval fallback path.
pub fn extract_query_entities(
    question: &str,
    backend: &dyn ExtractionBackend,
) -> Result<(Vec<String>, TokenUsage)> {
    let what = format!("query ner for {question:?}");
    let (raw, usage) = call_and_parse(
        backend,
        &what,
        || backend.query_ner(question),
        parse::parse_entity_response,
        parse::salvage_entities,
    )?;
    Ok((clean_phrases(raw), usage))
}

pub fn extract_passage(
    passage: &Passage,
    backend: &dyn ExtractionBackend,
) -> Result<PassageExtraction> {
    let (named_entities, mut usage) = extract_entities(passage, backend)?;
    let (triples, openie_usage) = extract_triples(passage, &named_entities, backend)?;
    usage.add(&openie_usage);
    Ok(PassageExtraction {
        passage_id: passage.id.clone(),
        named_entities,
        triples,
        usage,
    })
}

/// Extracts the whole corpus with at most `parallelism` concurrent backend
/// calls. Output order always equals corpus order.
pub fn index_extract(
    corpus: &Corpus,
    backend: &dyn ExtractionBackend,
    parallelism: usize,
) -> Result<(Vec<PassageExtraction>, TokenUsage)> {
    if parallelism == 0 {
        return Err(Error::Config("parallelism must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .map_err(|e| Error::Config(format!("building worker pool: {e}")))?;
    let extractions: Vec<PassageExtraction> = pool.install(|| {
        use rayon::prelude::*;
        corpus
            .passages()
            .par_iter()
            .map(|p| extract_passage(p, backend))
            .collect::<Result<_>>()
    })?;
    let mut total = TokenUsage::default();
    for extraction in &extractions {
        total.add(&extraction.usage);
    }
    Ok((extractions, total))
}

pub fn save_extractions(path: &Path, extractions: &[PassageExtraction]) -> Result<()> {
    jsonl::write(path, extractions)
}

/// Loads an extraction dump. Phrases are re-normalized and re-deduplicated
/// so hand-edited dumps cannot smuggle denormalized phrases into a graph.
pub fn load_extractions(path: &Path) -> Result<Vec<PassageExtraction>> {
    let mut extractions = Vec::new();
    for (_, ext) in jsonl::read::<PassageExtraction>(path)? {
        let raw_triples = ext
            .triples
            .into_iter()
            .map(|t| [t.subject, t.predicate, t.object])
            .collect();
        extractions.push(PassageExtraction {
            passage_id: ext.passage_id,
            named_entities: clean_phrases(ext.named_entities),
            triples: clean_triples(raw_triples),
            usage: ext.usage,
        });
    }
    Ok(extractions)
}
