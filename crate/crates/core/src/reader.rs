//! Answer generation over retrieved passages. The backend sees the
//! question plus at most five passages and is expected to finish with an
//! "Answer:" line; everything after the last delimiter is the answer.
//! Reader failures never sink a run: they produce an empty, flagged
//! answer so retrieval metrics stay unaffected.

use crate::corpus::Passage;
use crate::error::{Error, Result};
use crate::extract::{AnswerBackend, TokenUsage};

/// Marker the QA prompt instructs the model to emit before its answer.
pub const ANSWER_DELIMITER: &str = "Answer:";

/// Most passages ever handed to the reader in one call.
pub const MAX_READER_PASSAGES: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct ReaderAnswer {
    /// Parsed answer; empty when the backend failed.
    pub answer: String,
    /// Unparsed backend response, kept for diagnostics.
    pub raw_response: String,
    pub failed: bool,
    pub usage: TokenUsage,
}

fn parse_answer(text: &str) -> String {
    match text.rfind(ANSWER_DELIMITER) {
        Some(at) => text[at + ANSWER_DELIMITER.len()..].trim().to_string(),
        None => text.trim().to_string(),
    }
}

/// Asks the backend to answer the question from the given passages.
/// Degradable backend failures return an empty flagged answer; fatal
/// failures propagate.
pub fn answer(
    question: &str,
    top_passages: &[Passage],
    backend: &dyn AnswerBackend,
) -> Result<ReaderAnswer> {
    if top_passages.is_empty() || top_passages.len() > MAX_READER_PASSAGES {
        return Err(Error::Invalid(format!(
            "reader needs between 1 and {MAX_READER_PASSAGES} passages, got {}",
            top_passages.len()
        )));
    }
    let inputs: Vec<String> = top_passages.iter().map(|p| p.prompt_input()).collect();
    match backend.qa_answer(question, &inputs) {
        Ok(response) => Ok(ReaderAnswer {
            answer: parse_answer(&response.text),
            raw_response: response.text,
            failed: false,
            usage: response.usage,
        }),
        Err(e) if e.is_degradable() => {
            log::warn!("reader failed for {question:?}: {e}");
            Ok(ReaderAnswer {
                answer: String::new(),
                raw_response: String::new(),
                failed: true,
                usage: TokenUsage::default(),
            })
        }
        Err(e) => Err(e),
    }
}
