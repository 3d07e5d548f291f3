//! Remote embedding provider speaking the OpenAI-compatible embeddings
//! protocol: POST {"input": [...], "model": ...}, vectors back in input
//! order. Failures surface as embedding errors, which the caller treats
//! as fatal after its own retries.

use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use crate::embed::EmbeddingProvider;
use crate::error::{Error, Result};
use crate::extract::remote::DEFAULT_API_KEY_ENV;

const RETRY_BACKOFF: Duration = Duration::from_millis(200);

#[derive(Debug, Clone)]
pub struct RemoteEmbedderConfig {
    /// Full URL of the embeddings endpoint.
    pub endpoint: String,
    pub model: String,
    /// Expected vector width; responses with any other width are rejected.
    pub dimension: usize,
    pub api_key_env: String,
    pub timeout_secs: u64,
    /// Extra attempts after the first, for transport errors and 429/5xx.
    pub max_retries: u32,
}

impl Default for RemoteEmbedderConfig {
    fn default() -> Self {
        RemoteEmbedderConfig {
            endpoint: String::new(),
            model: String::new(),
            dimension: 0,
            api_key_env: DEFAULT_API_KEY_ENV.to_string(),
            timeout_secs: 60,
            max_retries: 2,
        }
    }
}

pub struct RemoteEmbedder {
    cfg: RemoteEmbedderConfig,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingRow>,
}

#[derive(Deserialize)]
struct EmbeddingRow {
    embedding: Vec<f32>,
    /// Position in the input batch; servers are expected to answer in
    /// order, so this is only used to restore order when present.
    #[serde(default)]
    index: Option<usize>,
}

impl RemoteEmbedder {
    pub fn new(cfg: RemoteEmbedderConfig) -> Result<Self> {
        if cfg.endpoint.is_empty() || cfg.model.is_empty() {
            return Err(Error::Config(
                "remote embedding provider needs both endpoint and model".into(),
            ));
        }
        if cfg.dimension == 0 {
            return Err(Error::Config(
                "remote embedding provider needs a nonzero dimension".into(),
            ));
        }
        let api_key = std::env::var(&cfg.api_key_env).ok();
        if api_key.is_none() {
            log::warn!(
                "{} is not set; sending unauthenticated requests to {}",
                cfg.api_key_env,
                cfg.endpoint
            );
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(cfg.timeout_secs))
            .build()
            .map_err(|e| Error::Embedding {
                name: "remote".into(),
                message: format!("building http client: {e}"),
            })?;
        Ok(RemoteEmbedder { cfg, api_key, client })
    }

    fn error(&self, message: String) -> Error {
        Error::Embedding {
            name: self.name(),
            message,
        }
    }

    fn post(&self, phrases: &[String]) -> Result<EmbeddingResponse> {
        let body = json!({
            "input": phrases,
            "model": self.cfg.model,
        });
        let attempts = 1 + self.cfg.max_retries;
        let mut last_message = String::new();
        for attempt in 1..=attempts {
            if attempt > 1 {
                std::thread::sleep(RETRY_BACKOFF);
            }
            let mut request = self.client.post(&self.cfg.endpoint).json(&body);
            if let Some(key) = &self.api_key {
                request = request.bearer_auth(key);
            }
            match request.send() {
                Err(e) => last_message = format!("transport: {e}"),
                Ok(response) => {
                    let status = response.status();
                    if status.is_server_error() || status.as_u16() == 429 {
                        last_message = format!("{status}");
                        continue;
                    }
                    if !status.is_success() {
                        return Err(self.error(format!("{status} from {}", self.cfg.endpoint)));
                    }
                    return response
                        .json()
                        .map_err(|e| self.error(format!("malformed embedding response: {e}")));
                }
            }
        }
        Err(self.error(format!("{last_message} after {attempts} attempts")))
    }
}

impl EmbeddingProvider for RemoteEmbedder {
    fn name(&self) -> String {
        let safe: String = self
            .cfg
            .model
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '-' })
            .collect();
        format!("remote-{safe}-d{}", self.cfg.dimension)
    }

    fn dimension(&self) -> usize {
        self.cfg.dimension
    }

    fn embed_batch(&self, phrases: &[String]) -> Result<Vec<Vec<f32>>> {
        if phrases.is_empty() {
            return Ok(Vec::new());
        }
        let parsed = self.post(phrases)?;
        if parsed.data.len() != phrases.len() {
            return Err(self.error(format!(
                "asked for {} embeddings, response carried {}",
                phrases.len(),
                parsed.data.len()
            )));
        }
        let mut rows: Vec<Option<Vec<f32>>> = vec![None; phrases.len()];
        for (position, row) in parsed.data.into_iter().enumerate() {
            let slot = row.index.unwrap_or(position);
            if slot >= rows.len() || rows[slot].is_some() {
                return Err(self.error(format!("embedding response has a bad index {slot}")));
            }
            if row.embedding.len() != self.cfg.dimension {
                return Err(self.error(format!(
                    "embedding width {} does not match configured dimension {}",
                    row.embedding.len(),
                    self.cfg.dimension
                )));
            }
            rows[slot] = Some(row.embedding);
        }
        Ok(rows.into_iter().map(|r| r.expect("every slot filled")).collect())
    }
}
