//! Passage corpora and query sets. Passage insertion order is load-bearing:
//! it defines the column order of the node-passage count matrix and every
//! ordinal used downstream.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jsonl;

/// Atomic retrieval unit. `text` is stored verbatim so prompts see the
/// original bytes; phrase normalization happens only after extraction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Passage {
    pub id: String,
    pub title: String,
    pub text: String,
}

impl Passage {
    /// The string handed to extraction prompts: title and text joined when
    /// a title exists, bare text otherwise.
    pub fn prompt_input(&self) -> String {
        if self.title.trim().is_empty() {
            self.text.clone()
        } else {
            format!("{}. {}", self.title, self.text)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryRecord {
    pub id: String,
    pub question: String,
    /// Gold answer aliases; empty for unlabeled queries.
    pub answers: Vec<String>,
    /// Supporting passage ids; empty for unlabeled queries.
    pub gold_ids: Vec<String>,
}

impl QueryRecord {
    pub fn is_labeled(&self) -> bool {
        !self.gold_ids.is_empty()
    }
}

/// Ordered passage collection with an id-to-ordinal index.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    passages: Vec<Passage>,
    by_id: HashMap<String, usize>,
}

impl Corpus {
    /// Builds a corpus from already-validated passages. Duplicate ids and
    /// whitespace-only texts are rejected here as well so programmatic
    /// construction cannot bypass the file loader's checks.
    pub fn from_passages(passages: Vec<Passage>) -> Result<Self> {
        let mut corpus = Corpus::default();
        for passage in passages {
            corpus.push(passage)?;
        }
        Ok(corpus)
    }

    pub fn push(&mut self, passage: Passage) -> Result<()> {
        if passage.text.trim().is_empty() {
            return Err(Error::Invalid(format!(
                "passage {:?} has empty text",
                passage.id
            )));
        }
        if self.by_id.contains_key(&passage.id) {
            return Err(Error::Invalid(format!(
                "duplicate passage id {:?}",
                passage.id
            )));
        }
        self.by_id.insert(passage.id.clone(), self.passages.len());
        self.passages.push(passage);
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut corpus = Corpus::default();
        for (line, passage) in jsonl::read::<Passage>(path)? {
            if passage.text.trim().is_empty() {
                return Err(Error::Record {
                    path: path.to_path_buf(),
                    line,
                    message: format!("passage {:?} has empty text", passage.id),
                });
            }
            if corpus.by_id.contains_key(&passage.id) {
                return Err(Error::DuplicateId {
                    path: path.to_path_buf(),
                    line,
                    id: passage.id,
                });
            }
            corpus.by_id.insert(passage.id.clone(), corpus.passages.len());
            corpus.passages.push(passage);
        }
        Ok(corpus)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        jsonl::write(path, &self.passages)
    }

    pub fn len(&self) -> usize {
        self.passages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.passages.is_empty()
    }

    pub fn get(&self, ordinal: usize) -> Option<&Passage> {
        self.passages.get(ordinal)
    }

    pub fn ordinal_of(&self, id: &str) -> Option<usize> {
        self.by_id.get(id).copied()
    }

    pub fn passages(&self) -> &[Passage] {
        &self.passages
    }
}

impl PartialEq for Corpus {
    fn eq(&self, other: &Self) -> bool {
        self.passages == other.passages
    }
}

/// Loads a query file and checks every gold id against the corpus.
/// Unlabeled queries (no gold ids) pass through untouched.
pub fn load_queries(path: &Path, corpus: &Corpus) -> Result<Vec<QueryRecord>> {
    let mut queries = Vec::new();
    for (_, query) in jsonl::read::<QueryRecord>(path)? {
        for gold in &query.gold_ids {
            if corpus.ordinal_of(gold).is_none() {
                return Err(Error::UnknownGoldId {
                    query_id: query.id.clone(),
                    passage_id: gold.clone(),
                });
            }
        }
        queries.push(query);
    }
    Ok(queries)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn passage(id: &str, title: &str, text: &str) -> Passage {
        Passage {
            id: id.into(),
            title: title.into(),
            text: text.into(),
        }
    }

    fn write_lines(dir: &tempfile::TempDir, name: &str, lines: &[&str]) -> std::path::PathBuf {
        let path = dir.path().join(name);
        std::fs::write(&path, lines.join("\n") + "\n").unwrap();
        path
    }

    #[test]
    fn loads_in_file_order_with_stable_ordinals() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_lines(
            &dir,
            "corpus.jsonl",
            &[
                r#"{"id":"a","title":"","text":"first"}"#,
                r#"{"id":"b","title":"B","text":"second"}"#,
                r#"{"id":"c","title":"","text":"third"}"#,
            ],
        );
        let corpus = Corpus::load(&path).unwrap();
        assert_eq!(corpus.len(), 3);
        for (i, p) in corpus.passages().iter().enumerate() {
            assert_eq!(corpus.ordinal_of(&p.id), Some(i));
        }
    }

    #[test]
    fn duplicate_id_is_rejected_by_name() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_lines(
            &dir,
            "corpus.jsonl",
            &[
                r#"{"id":"p1","title":"","text":"x"}"#,
                r#"{"id":"p1","title":"","text":"y"}"#,
            ],
        );
        let err = Corpus::load(&path).unwrap_err();
        assert!(err.to_string().contains("p1"), "{err}");
    }

    #[test]
    fn empty_file_is_a_valid_empty_corpus() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.jsonl");
        std::fs::write(&path, "").unwrap();
        assert!(Corpus::load(&path).unwrap().is_empty());
    }

    #[test]
    fn empty_text_and_unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let blank = write_lines(&dir, "blank.jsonl", &[r#"{"id":"a","title":"","text":"  "}"#]);
        assert!(Corpus::load(&blank).is_err());
        let extra = write_lines(
            &dir,
            "extra.jsonl",
            &[r#"{"id":"a","title":"","text":"x","body":"y"}"#],
        );
        assert!(Corpus::load(&extra).is_err());
    }

    #[test]
    fn round_trip_preserves_bytes_and_order() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = Corpus::from_passages(vec![
            passage("a", "", "plain text"),
            passage("b", "Título", "unicode ✓ text"),
        ])
        .unwrap();
        let path = dir.path().join("out.jsonl");
        corpus.save(&path).unwrap();
        let reloaded = Corpus::load(&path).unwrap();
        assert_eq!(corpus, reloaded);
        let again = dir.path().join("again.jsonl");
        reloaded.save(&again).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(&again).unwrap()
        );
    }

    #[test]
    fn queries_validate_gold_ids_against_corpus() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = Corpus::from_passages(vec![passage("p1", "", "x"), passage("p2", "", "y")]).unwrap();
        let ok = write_lines(
            &dir,
            "ok.jsonl",
            &[r#"{"id":"q1","question":"?","answers":["a"],"gold_ids":["p1","p2"]}"#],
        );
        let queries = load_queries(&ok, &corpus).unwrap();
        assert!(queries[0].is_labeled());

        let bad = write_lines(
            &dir,
            "bad.jsonl",
            &[r#"{"id":"q2","question":"?","answers":[],"gold_ids":["pX"]}"#],
        );
        let err = load_queries(&bad, &corpus).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("q2") && msg.contains("pX"), "{msg}");

        let unlabeled = write_lines(
            &dir,
            "unlabeled.jsonl",
            &[r#"{"id":"q3","question":"?","answers":[],"gold_ids":[]}"#],
        );
        assert!(!load_queries(&unlabeled, &corpus).unwrap()[0].is_labeled());
    }

    #[test]
    fn prompt_input_joins_title_and_text() {
        assert_eq!(
            passage("a", "Radio City", "It plays songs.").prompt_input(),
            "Radio City. It plays songs."
        );
        assert_eq!(passage("a", "  ", "Bare text.").prompt_input(), "Bare text.");
    }
}
