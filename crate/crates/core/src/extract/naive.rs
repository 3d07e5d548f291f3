//! Rule-based stand-in backend. It recognizes runs of capitalized words as
//! entities and never produces triples, which makes it useful for
//! exercising empty-graph and degradation paths without fixtures. It is
//! deliberately crude; nothing downstream may assume its output is good.

use crate::error::Result;
use crate::extract::backend::{BackendDescriptor, BackendResponse, ExtractionBackend, TokenUsage};

#[derive(Debug, Clone, Copy, Default)]
pub struct NaiveBackend;

impl NaiveBackend {
    fn entities(text: &str) -> Vec<String> {
        let mut spans: Vec<String> = Vec::new();
        let mut current: Vec<&str> = Vec::new();
        for token in text.split_whitespace() {
            let word = token.trim_matches(|c: char| !c.is_alphanumeric() && c != '\'');
            let capitalized = word.chars().next().is_some_and(|c| c.is_uppercase());
            if capitalized {
                current.push(word);
            } else if !current.is_empty() {
                spans.push(current.join(" "));
                current.clear();
            }
        }
        if !current.is_empty() {
            spans.push(current.join(" "));
        }
        spans.dedup();
        spans
    }

    fn respond(entities: Vec<String>) -> BackendResponse {
        let text = serde_json::json!({ "named_entities": entities }).to_string();
        BackendResponse {
            text,
            usage: TokenUsage::single_call(0, 0),
        }
    }
}

impl ExtractionBackend for NaiveBackend {
    fn descriptor(&self) -> BackendDescriptor {
        BackendDescriptor {
            name: "naive".into(),
            model: "capitalized-spans".into(),
            deterministic: true,
        }
    }

    fn passage_ner(&self, passage_input: &str) -> Result<BackendResponse> {
        Ok(Self::respond(Self::entities(passage_input)))
    }

    fn passage_openie(&self, _passage_input: &str, _entities: &[String]) -> Result<BackendResponse> {
        Ok(BackendResponse {
            text: r#"{"triples": []}"#.to_string(),
            usage: TokenUsage::single_call(0, 0),
        })
    }

    fn query_ner(&self, question: &str) -> Result<BackendResponse> {
        Ok(Self::respond(Self::entities(question)))
    }
}
