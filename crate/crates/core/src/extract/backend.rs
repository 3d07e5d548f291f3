//! Extraction backend interface. A backend produces raw response text for
//! the three prompt kinds; parsing and normalization happen in the caller,
//! so fixtures can replay byte-exact responses without knowing prompts.

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Token and call accounting, additive under merge.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub calls: u64,
}

impl TokenUsage {
    pub fn add(&mut self, other: &TokenUsage) {
        self.prompt_tokens += other.prompt_tokens;
        self.completion_tokens += other.completion_tokens;
        self.calls += other.calls;
    }

    pub fn single_call(prompt_tokens: u64, completion_tokens: u64) -> Self {
        TokenUsage {
            prompt_tokens,
            completion_tokens,
            calls: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BackendResponse {
    pub text: String,
    pub usage: TokenUsage,
}

/// What a backend is, for logs and dumps.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BackendDescriptor {
    pub name: String,
    pub model: String,
    /// Deterministic backends return byte-identical output for identical
    /// input, which makes parse-failure retries pointless.
    pub deterministic: bool,
}

pub trait ExtractionBackend: Send + Sync {
    fn descriptor(&self) -> BackendDescriptor;

    /// Named-entity recognition over one passage at indexing time.
    fn passage_ner(&self, passage_input: &str) -> Result<BackendResponse>;

    /// Open information extraction over one passage, conditioned on the
    /// entities the NER step produced for it.
    fn passage_openie(&self, passage_input: &str, entities: &[String]) -> Result<BackendResponse>;

    /// Named-entity recognition over a question at retrieval time.
    fn query_ner(&self, question: &str) -> Result<BackendResponse>;
}

/// Question answering over retrieved passages. Kept separate from
/// [`ExtractionBackend`] since reading is optional and not every extraction
/// backend can answer.
pub trait AnswerBackend: Send + Sync {
    fn qa_answer(&self, question: &str, passage_inputs: &[String]) -> Result<BackendResponse>;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_is_additive() {
        let mut total = TokenUsage::default();
        total.add(&TokenUsage::single_call(10, 2));
        total.add(&TokenUsage::single_call(5, 1));
        assert_eq!(
            total,
            TokenUsage {
                prompt_tokens: 15,
                completion_tokens: 3,
                calls: 2
            }
        );
    }
}
