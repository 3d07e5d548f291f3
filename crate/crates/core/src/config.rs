//! Run configuration: one JSON file drives every stage. All fields have
//! defaults so a config can state only what it changes; unknown keys are
//! rejected rather than silently ignored. API keys are read from a named
//! environment variable, never from the file itself.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::extract::remote::DEFAULT_API_KEY_ENV;
use crate::retrieval::RankMode;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ExtractionKind {
    /// Replay recorded responses from a fixture file.
    #[default]
    Fixture,
    /// OpenAI-compatible chat-completions endpoint.
    Remote,
    /// Capitalization heuristic; entities only, no triples.
    Naive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractionSpec {
    pub kind: ExtractionKind,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    /// Fixture file; required when kind is fixture.
    pub fixtures: Option<PathBuf>,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub timeout_secs: u64,
    pub max_retries: u32,
}

impl Default for ExtractionSpec {
    fn default() -> Self {
        ExtractionSpec {
            kind: ExtractionKind::Fixture,
            endpoint: None,
            model: None,
            fixtures: None,
            api_key_env: DEFAULT_API_KEY_ENV.to_string(),
            timeout_secs: 60,
            max_retries: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingKind {
    /// Deterministic local vectors hashed from the phrase.
    #[default]
    Hashed,
    /// OpenAI-compatible embeddings endpoint.
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingSpec {
    pub kind: EmbeddingKind,
    pub dimension: usize,
    /// Hashed provider only: seed mixed into every vector.
    pub seed: u64,
    /// Hashed provider only: alias to canonical phrase; aliased phrases
    /// embed identically, giving tests exact synonym pairs.
    pub synonyms: BTreeMap<String, String>,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub api_key_env: String,
    pub timeout_secs: u64,
    pub max_retries: u32,
    /// Phrases per provider call during indexing.
    pub batch_size: usize,
}

impl Default for EmbeddingSpec {
    fn default() -> Self {
        EmbeddingSpec {
            kind: EmbeddingKind::Hashed,
            dimension: 128,
            seed: 0,
            synonyms: BTreeMap::new(),
            endpoint: None,
            model: None,
            api_key_env: DEFAULT_API_KEY_ENV.to_string(),
            timeout_secs: 60,
            max_retries: 2,
            batch_size: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DenseKind {
    /// Word-overlap fraction; a test stand-in, not a real dense model.
    #[default]
    Lexical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct DenseSpec {
    pub kind: DenseKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub corpus: Option<PathBuf>,
    pub queries: Option<PathBuf>,
    pub index_dir: Option<PathBuf>,
    /// Extraction dump; defaults to extractions.jsonl inside index_dir.
    pub extractions: Option<PathBuf>,
    pub extraction: ExtractionSpec,
    pub embedding: EmbeddingSpec,
    /// Optional passage scorer for fallback and ensembling.
    pub dense: Option<DenseSpec>,
    /// Synonym edge threshold.
    pub tau: f64,
    /// Ensemble trigger threshold on the weakest link score.
    pub theta: f64,
    pub damping: f64,
    pub tolerance: f64,
    pub max_iterations: u32,
    pub mode: RankMode,
    pub neighbor_epsilon: f64,
    pub use_specificity: bool,
    pub use_synonymy: bool,
    pub ensemble: bool,
    /// Run the answer step during eval.
    pub qa: bool,
    pub parallelism: usize,
    /// Cutoffs reported as recall@k, strictly ascending.
    pub top_k: Vec<usize>,
    /// Directory of prompt template overrides; built-ins otherwise.
    pub prompts_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            corpus: None,
            queries: None,
            index_dir: None,
            extractions: None,
            extraction: ExtractionSpec::default(),
            embedding: EmbeddingSpec::default(),
            dense: None,
            tau: 0.8,
            theta: 0.9,
            damping: 0.5,
            tolerance: 1e-10,
            max_iterations: 1000,
            mode: RankMode::Ppr,
            neighbor_epsilon: 0.1,
            use_specificity: true,
            use_synonymy: true,
            ensemble: false,
            qa: false,
            parallelism: 10,
            top_k: vec![2, 5],
            prompts_dir: None,
        }
    }
}

fn in_unit_interval_half_open(x: f64) -> bool {
    x > 0.0 && x <= 1.0
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        // An unreadable config file is a configuration mistake, not a
        // runtime failure; callers sort their exit codes by that line.
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let config: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !in_unit_interval_half_open(self.tau) {
            return Err(Error::Config(format!("tau must lie in (0, 1], got {}", self.tau)));
        }
        if !in_unit_interval_half_open(self.theta) {
            return Err(Error::Config(format!("theta must lie in (0, 1], got {}", self.theta)));
        }
        if !(self.damping > 0.0 && self.damping < 1.0) {
            return Err(Error::Config(format!(
                "damping must lie strictly between 0 and 1, got {}",
                self.damping
            )));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::Config(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be at least 1".into()));
        }
        if !(self.neighbor_epsilon >= 0.0 && self.neighbor_epsilon.is_finite()) {
            return Err(Error::Config(format!(
                "neighbor_epsilon must be a finite non-negative value, got {}",
                self.neighbor_epsilon
            )));
        }
        if self.top_k.is_empty() {
            return Err(Error::Config("top_k must list at least one cutoff".into()));
        }
        if self.top_k[0] == 0 {
            return Err(Error::Config("top_k cutoffs start at 1".into()));
        }
        if !self.top_k.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Config(format!(
                "top_k must be strictly ascending, got {:?}",
                self.top_k
            )));
        }
        if self.parallelism == 0 {
            return Err(Error::Config("parallelism must be at least 1".into()));
        }
        if self.ensemble && self.dense.is_none() {
            return Err(Error::Config(
                "ensemble needs a dense scorer; set the dense section".into(),
            ));
        }
        match self.extraction.kind {
            ExtractionKind::Fixture => {
                if self.extraction.fixtures.is_none() {
                    return Err(Error::Config(
                        "extraction.kind fixture needs extraction.fixtures".into(),
                    ));
                }
            }
            ExtractionKind::Remote => {
                if self.extraction.endpoint.is_none() || self.extraction.model.is_none() {
                    return Err(Error::Config(
                        "extraction.kind remote needs endpoint and model".into(),
                    ));
                }
            }
            ExtractionKind::Naive => {
                if self.qa {
                    return Err(Error::Config(
                        "the naive extraction backend cannot answer questions; disable qa".into(),
                    ));
                }
            }
        }
        if self.embedding.dimension == 0 {
            return Err(Error::Config("embedding.dimension must be at least 1".into()));
        }
        if self.embedding.batch_size == 0 {
            return Err(Error::Config("embedding.batch_size must be at least 1".into()));
        }
        if self.embedding.kind == EmbeddingKind::Remote
            && (self.embedding.endpoint.is_none() || self.embedding.model.is_none())
        {
            return Err(Error::Config(
                "embedding.kind remote needs endpoint and model".into(),
            ));
        }
        Ok(())
    }

    /// Paths that must be present for corpus-reading stages.
    pub fn corpus_path(&self) -> Result<&Path> {
        self.corpus
            .as_deref()
            .ok_or_else(|| Error::Config("no corpus path configured".into()))
    }

    pub fn queries_path(&self) -> Result<&Path> {
        self.queries
            .as_deref()
            .ok_or_else(|| Error::Config("no queries path configured".into()))
    }

    pub fn index_dir_path(&self) -> Result<&Path> {
        self.index_dir
            .as_deref()
            .ok_or_else(|| Error::Config("no index directory configured".into()))
    }

    /// Extraction dump location; lives inside the index directory unless
    /// set explicitly.
    pub fn extractions_path(&self) -> Result<PathBuf> {
        match &self.extractions {
            Some(path) => Ok(path.clone()),
            None => Ok(self.index_dir_path()?.join("extractions.jsonl")),
        }
    }

    /// Hex digest of the effective configuration, stamped into reports so
    /// runs are attributable to their exact settings.
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }
}
