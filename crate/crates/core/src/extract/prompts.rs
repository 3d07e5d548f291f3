//! Prompt templates. Templates are plain text files with `{placeholder}`
//! markers so they can be edited without touching code; the compiled-in set
//! mirrors the files under `prompts/` in this crate.

use std::path::Path;

use crate::error::{Error, Result};

const PASSAGE_NER: &str = include_str!("../../prompts/passage_ner.txt");
const QUERY_NER: &str = include_str!("../../prompts/query_ner.txt");
const OPENIE: &str = include_str!("../../prompts/openie.txt");
const QA: &str = include_str!("../../prompts/qa.txt");

#[derive(Debug, Clone)]
pub struct PromptSet {
    passage_ner: String,
    query_ner: String,
    openie: String,
    qa: String,
}

impl Default for PromptSet {
    fn default() -> Self {
        PromptSet {
            passage_ner: PASSAGE_NER.to_string(),
            query_ner: QUERY_NER.to_string(),
            openie: OPENIE.to_string(),
            qa: QA.to_string(),
        }
    }
}

impl PromptSet {
    /// Loads overridden templates from a directory holding the same four
    /// file names as the built-in set.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let read = |name: &str| -> Result<String> {
            let path = dir.join(name);
            std::fs::read_to_string(&path).map_err(|e| Error::io(path, e))
        };
        Ok(PromptSet {
            passage_ner: read("passage_ner.txt")?,
            query_ner: read("query_ner.txt")?,
            openie: read("openie.txt")?,
            qa: read("qa.txt")?,
        })
    }

    pub fn render_passage_ner(&self, passage: &str) -> String {
        self.passage_ner.replace("{passage}", passage)
    }

    pub fn render_query_ner(&self, question: &str) -> String {
        self.query_ner.replace("{question}", question)
    }

    /// `entities` is rendered as the same JSON object shape the NER step
    /// returns, so the model sees its own earlier output format.
    pub fn render_openie(&self, passage: &str, entities: &[String]) -> String {
        let entities_json = serde_json::json!({ "named_entities": entities }).to_string();
        self.openie
            .replace("{passage}", passage)
            .replace("{named_entities}", &entities_json)
    }

    pub fn render_qa(&self, question: &str, passage_inputs: &[String]) -> String {
        let mut context = String::new();
        for (i, input) in passage_inputs.iter().enumerate() {
            context.push_str(&format!("Passage {}: {}\n", i + 1, input));
        }
        self.qa
            .replace("{context}", context.trim_end())
            .replace("{question}", question)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_templates_substitute_their_placeholders() {
        let prompts = PromptSet::default();
        let ner = prompts.render_passage_ner("Some passage text.");
        assert!(ner.contains("Some passage text."));
        assert!(!ner.contains("{passage}"));

        let openie = prompts.render_openie("P.", &["a".into(), "b".into()]);
        assert!(openie.contains(r#"{"named_entities":["a","b"]}"#));
        assert!(!openie.contains("{named_entities}"));

        let qa = prompts.render_qa("Why?", &["First. Text".into(), "Second. Text".into()]);
        assert!(qa.contains("Passage 1: First. Text"));
        assert!(qa.contains("Passage 2: Second. Text"));
        assert!(qa.contains("Question: Why?"));
    }

    #[test]
    fn load_dir_overrides_and_reports_missing_files() {
        let dir = tempfile::tempdir().unwrap();
        for name in ["passage_ner.txt", "query_ner.txt", "openie.txt", "qa.txt"] {
            std::fs::write(dir.path().join(name), format!("{name}: {{passage}}{{question}}")).unwrap();
        }
        let prompts = PromptSet::load_dir(dir.path()).unwrap();
        assert!(prompts.render_passage_ner("X").starts_with("passage_ner.txt: X"));

        std::fs::remove_file(dir.path().join("qa.txt")).unwrap();
        assert!(PromptSet::load_dir(dir.path()).is_err());
    }
}
