//! Remote LLM backend speaking the OpenAI-compatible chat-completions
//! protocol. One client covers hosted APIs and self-served models behind
//! the same interface; requests always pin temperature 0 so extraction is
//! as repeatable as the provider allows.

use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use crate::error::{Error, Result};
use crate::extract::backend::{AnswerBackend, BackendDescriptor, BackendResponse, ExtractionBackend, TokenUsage};
use crate::extract::prompts::PromptSet;

/// Default environment variable consulted for the API key. The variable
/// name is configurable; the key itself never comes from a config file.
pub const DEFAULT_API_KEY_ENV: &str = "HIPPOGRAPH_API_KEY";

const RETRY_BACKOFF: Duration = Duration::from_millis(200);

#[derive(Debug, Clone)]
pub struct RemoteLlmConfig {
    /// Full URL of the chat-completions endpoint.
    pub endpoint: String,
    pub model: String,
    pub api_key_env: String,
    pub timeout_secs: u64,
    /// Extra attempts after the first, for transport errors and 429/5xx.
    pub max_retries: u32,
}

impl Default for RemoteLlmConfig {
    fn default() -> Self {
        RemoteLlmConfig {
            endpoint: String::new(),
            model: String::new(),
            api_key_env: DEFAULT_API_KEY_ENV.to_string(),
            timeout_secs: 60,
            max_retries: 2,
        }
    }
}

pub struct RemoteBackend {
    cfg: RemoteLlmConfig,
    prompts: PromptSet,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
    #[serde(default)]
    usage: ApiUsage,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    content: String,
}

#[derive(Deserialize, Default)]
struct ApiUsage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

impl RemoteBackend {
    pub fn new(cfg: RemoteLlmConfig, prompts: PromptSet) -> Result<Self> {
        if cfg.endpoint.is_empty() || cfg.model.is_empty() {
            return Err(Error::Config(
                "remote extraction backend needs both endpoint and model".into(),
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
            .map_err(|e| Error::Backend {
                name: "remote".into(),
                message: format!("building http client: {e}"),
                fatal: true,
            })?;
        Ok(RemoteBackend {
            cfg,
            prompts,
            api_key,
            client,
        })
    }

    fn complete(&self, prompt: &str) -> Result<BackendResponse> {
        let body = json!({
            "model": self.cfg.model,
            "temperature": 0,
            "messages": [{"role": "user", "content": prompt}],
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
                    if status.as_u16() == 401 || status.as_u16() == 403 {
                        return Err(Error::Backend {
                            name: "remote".into(),
                            message: format!("{status} from {}", self.cfg.endpoint),
                            fatal: true,
                        });
                    }
                    if status.is_server_error() || status.as_u16() == 429 {
                        last_message = format!("{status}");
                        continue;
                    }
                    if !status.is_success() {
                        // Remaining 4xx are per-request problems; retrying
                        // the identical payload cannot fix them.
                        return Err(Error::Backend {
                            name: "remote".into(),
                            message: format!("{status}"),
                            fatal: false,
                        });
                    }
                    let parsed: ChatResponse = response.json().map_err(|e| Error::Backend {
                        name: "remote".into(),
                        message: format!("malformed chat response: {e}"),
                        fatal: false,
                    })?;
                    let Some(choice) = parsed.choices.first() else {
                        return Err(Error::Backend {
                            name: "remote".into(),
                            message: "chat response carried no choices".into(),
                            fatal: false,
                        });
                    };
                    return Ok(BackendResponse {
                        text: choice.message.content.clone(),
                        usage: TokenUsage::single_call(
                            parsed.usage.prompt_tokens,
                            parsed.usage.completion_tokens,
                        ),
                    });
                }
            }
        }
        Err(Error::Backend {
            name: "remote".into(),
            message: format!("{last_message} after {attempts} attempts"),
            fatal: false,
        })
    }
}

impl ExtractionBackend for RemoteBackend {
    fn descriptor(&self) -> BackendDescriptor {
        BackendDescriptor {
            name: "remote".into(),
            model: self.cfg.model.clone(),
            deterministic: false,
        }
    }

    fn passage_ner(&self, passage_input: &str) -> Result<BackendResponse> {
        self.complete(&self.prompts.render_passage_ner(passage_input))
    }

    fn passage_openie(&self, passage_input: &str, entities: &[String]) -> Result<BackendResponse> {
        self.complete(&self.prompts.render_openie(passage_input, entities))
    }

    fn query_ner(&self, question: &str) -> Result<BackendResponse> {
        self.complete(&self.prompts.render_query_ner(question))
    }
}

impl AnswerBackend for RemoteBackend {
    fn qa_answer(&self, question: &str, passage_inputs: &[String]) -> Result<BackendResponse> {
        self.complete(&self.prompts.render_qa(question, passage_inputs))
    }
}
