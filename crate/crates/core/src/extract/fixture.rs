//! Replay backend: responses recorded in a JSON Lines file, keyed by a
//! content hash of the request input. Runs built on fixtures are pure
//! functions of (corpus bytes, fixture bytes), which is what the test
//! suite and the bundled demo corpus rely on.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::extract::backend::{AnswerBackend, BackendDescriptor, BackendResponse, ExtractionBackend, TokenUsage};
use crate::jsonl;

#[derive(Debug, Serialize, Deserialize)]
struct FixtureRecord {
    key: String,
    response: String,
}

/// Key derivation, shared by the backend and by fixture authors. Each
/// request kind gets its own tag so identical payloads cannot collide
/// across kinds; fields are joined with a NUL byte, which cannot occur
/// inside a JSON-sourced string's UTF-8.
fn key(tag: &str, parts: &[&str]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(tag.as_bytes());
    for part in parts {
        hasher.update([0u8]);
        hasher.update(part.as_bytes());
    }
    hex::encode(hasher.finalize())
}

pub fn passage_ner_key(passage_input: &str) -> String {
    key("passage_ner", &[passage_input])
}

pub fn passage_openie_key(passage_input: &str, entities: &[String]) -> String {
    let entities_json = serde_json::to_string(entities).expect("string list always serializes");
    key("passage_openie", &[passage_input, &entities_json])
}

pub fn query_ner_key(question: &str) -> String {
    key("query_ner", &[question])
}

pub fn qa_key(question: &str, passage_inputs: &[String]) -> String {
    let context_json = serde_json::to_string(passage_inputs).expect("string list always serializes");
    key("qa", &[question, &context_json])
}

#[derive(Debug, Clone, Default)]
pub struct FixtureBackend {
    responses: HashMap<String, String>,
}

impl FixtureBackend {
    pub fn load(path: &Path) -> Result<Self> {
        let mut responses = HashMap::new();
        for (line, record) in jsonl::read::<FixtureRecord>(path)? {
            if responses.insert(record.key.clone(), record.response).is_some() {
                return Err(Error::Record {
                    path: path.to_path_buf(),
                    line,
                    message: format!("duplicate fixture key {}", record.key),
                });
            }
        }
        Ok(FixtureBackend { responses })
    }

    pub fn insert(&mut self, key: String, response: impl Into<String>) {
        self.responses.insert(key, response.into());
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }

    /// Writes the recorded responses in key order, so files are diff-able.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut records: Vec<FixtureRecord> = self
            .responses
            .iter()
            .map(|(key, response)| FixtureRecord {
                key: key.clone(),
                response: response.clone(),
            })
            .collect();
        records.sort_by(|a, b| a.key.cmp(&b.key));
        jsonl::write(path, &records)
    }

    fn lookup(&self, key: String) -> Result<BackendResponse> {
        match self.responses.get(&key) {
            Some(text) => Ok(BackendResponse {
                text: text.clone(),
                // Replays cost nothing; only the call is counted.
                usage: TokenUsage::single_call(0, 0),
            }),
            None => Err(Error::FixtureMiss { key }),
        }
    }
}

impl ExtractionBackend for FixtureBackend {
    fn descriptor(&self) -> BackendDescriptor {
        BackendDescriptor {
            name: "fixture".into(),
            model: "replay".into(),
            deterministic: true,
        }
    }

    fn passage_ner(&self, passage_input: &str) -> Result<BackendResponse> {
        self.lookup(passage_ner_key(passage_input))
    }

    fn passage_openie(&self, passage_input: &str, entities: &[String]) -> Result<BackendResponse> {
        self.lookup(passage_openie_key(passage_input, entities))
    }

    fn query_ner(&self, question: &str) -> Result<BackendResponse> {
        self.lookup(query_ner_key(question))
    }
}

impl AnswerBackend for FixtureBackend {
    fn qa_answer(&self, question: &str, passage_inputs: &[String]) -> Result<BackendResponse> {
        self.lookup(qa_key(question, passage_inputs))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keys_separate_request_kinds_and_inputs() {
        let a = passage_ner_key("same text");
        let b = query_ner_key("same text");
        assert_ne!(a, b);
        let c = passage_openie_key("p", &["x".into()]);
        let d = passage_openie_key("p", &["y".into()]);
        assert_ne!(c, d);
        assert_eq!(a, passage_ner_key("same text"));
    }

    #[test]
    fn miss_reports_the_key() {
        let backend = FixtureBackend::default();
        let err = backend.query_ner("q").unwrap_err();
        let expected = query_ner_key("q");
        assert!(err.to_string().contains(&expected), "{err}");
        assert!(err.is_degradable());
    }

    #[test]
    fn save_load_round_trip_is_sorted_and_stable() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fixtures.jsonl");
        let mut backend = FixtureBackend::default();
        backend.insert(query_ner_key("b"), "two");
        backend.insert(query_ner_key("a"), "one");
        backend.save(&path).unwrap();
        let reloaded = FixtureBackend::load(&path).unwrap();
        assert_eq!(reloaded.query_ner("a").unwrap().text, "one");
        assert_eq!(reloaded.query_ner("b").unwrap().text, "two");

        let again = dir.path().join("again.jsonl");
        reloaded.save(&again).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&again).unwrap());
    }

    #[test]
    fn duplicate_keys_are_rejected_at_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fixtures.jsonl");
        let line = format!(r#"{{"key":"{}","response":"x"}}"#, query_ner_key("q"));
        std::fs::write(&path, format!("{line}\n{line}\n")).unwrap();
        assert!(FixtureBackend::load(&path).is_err());
    }
}
