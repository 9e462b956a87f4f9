//! LLM providers: a remote chat-completion client plus offline stand-ins.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::provider::{self, JsonClient};

pub const STUB_PREFIX: &str = "STUB-ANSWER\n";

#[derive(Debug, Clone, Copy, Default)]
pub struct LlmRequest<'a> {
    pub prompt: &'a str,
    pub system: Option<&'a str>,
    /// Caller-supplied key, e.g. the chunk id during extraction.
    pub tag: Option<&'a str>,
}

impl<'a> LlmRequest<'a> {
    pub fn new(prompt: &'a str) -> Self {
        Self {
            prompt,
            ..Self::default()
        }
    }

    pub fn tagged(mut self, tag: &'a str) -> Self {
        self.tag = Some(tag);
        self
    }
}

pub trait LlmProvider: Send + Sync {
    fn name(&self) -> &str;
    fn complete(&self, request: &LlmRequest<'_>) -> Result<String>;

    fn max_in_flight(&self) -> usize {
        provider::DEFAULT_MAX_IN_FLIGHT
    }
}

pub fn sha256_hex(text: &str) -> String {
    Sha256::digest(text.as_bytes())
        .iter()
        .fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
}

/// Answers with `STUB-ANSWER\n` followed by the SHA-256 of the prompt.
#[derive(Debug, Clone, Default)]
pub struct StubLlm;

impl LlmProvider for StubLlm {
    fn name(&self) -> &str {
        "stub"
    }

    fn complete(&self, request: &LlmRequest<'_>) -> Result<String> {
        Ok(format!("{STUB_PREFIX}{}", sha256_hex(request.prompt)))
    }

    fn max_in_flight(&self) -> usize {
        usize::MAX
    }
}

/// Replays `<tag>.txt` from a fixture directory.
#[derive(Debug, Clone)]
pub struct CannedLlm {
    dir: PathBuf,
}

impl CannedLlm {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }
}

impl LlmProvider for CannedLlm {
    fn name(&self) -> &str {
        "canned"
    }

    fn complete(&self, request: &LlmRequest<'_>) -> Result<String> {
        let fail = |message: String| Error::Provider {
            provider: "canned".into(),
            status: None,
            attempts: 1,
            message,
        };
        let tag = request
            .tag
            .ok_or_else(|| fail("canned provider needs a request tag".into()))?;
        if tag.contains(['/', '\\']) || tag.starts_with('.') {
            return Err(fail(format!("invalid tag `{tag}`")));
        }
        let path = self.dir.join(format!("{tag}.txt"));
        std::fs::read_to_string(&path).map_err(|e| fail(format!("{}: {e}", path.display())))
    }

    fn max_in_flight(&self) -> usize {
        usize::MAX
    }
}

/// Generic chat-completion client: `{"model", "messages", "temperature"}` in,
/// assistant text out (`choices[0].message.content`, or a top-level
/// `content`).
#[derive(Debug)]
pub struct RemoteLlm {
    client: JsonClient,
    model: String,
    temperature: f64,
}

impl RemoteLlm {
    pub fn new(client: JsonClient, model: impl Into<String>, temperature: f64) -> Self {
        Self {
            client,
            model: model.into(),
            temperature,
        }
    }
}

pub(crate) fn parse_completion(body: &Value) -> Option<String> {
    body.pointer("/choices/0/message/content")
        .or_else(|| body.get("content"))
        .or_else(|| body.pointer("/message/content"))
        .and_then(Value::as_str)
        .map(str::to_string)
}

impl LlmProvider for RemoteLlm {
    fn name(&self) -> &str {
        self.client.name()
    }

    fn max_in_flight(&self) -> usize {
        self.client.max_in_flight()
    }

    fn complete(&self, request: &LlmRequest<'_>) -> Result<String> {
        let mut messages = Vec::new();
        if let Some(system) = request.system {
            messages.push(json!({ "role": "system", "content": system }));
        }
        messages.push(json!({ "role": "user", "content": request.prompt }));
        let body = self.client.post(&json!({
            "model": self.model,
            "messages": messages,
            "temperature": self.temperature,
        }))?;
        parse_completion(&body).ok_or_else(|| Error::Provider {
            provider: self.name().to_string(),
            status: None,
            attempts: 1,
            message: "response has no message content".into(),
        })
    }
}

/// Wraps a provider and keeps every prompt it sees.
pub struct RecordingLlm<P> {
    inner: P,
    prompts: Mutex<Vec<String>>,
}

impl<P: LlmProvider> RecordingLlm<P> {
    pub fn new(inner: P) -> Self {
        Self {
            inner,
            prompts: Mutex::new(Vec::new()),
        }
    }

    pub fn prompts(&self) -> Vec<String> {
        self.prompts.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn take(&self) -> Vec<String> {
        std::mem::take(&mut *self.prompts.lock().unwrap_or_else(|e| e.into_inner()))
    }
}

impl<P: LlmProvider> LlmProvider for RecordingLlm<P> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn max_in_flight(&self) -> usize {
        self.inner.max_in_flight()
    }

    fn complete(&self, request: &LlmRequest<'_>) -> Result<String> {
        self.prompts
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .push(request.prompt.to_string());
        self.inner.complete(request)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LlmSettings {
    #[default]
    Stub,
    Canned {
        dir: PathBuf,
    },
    Remote {
        endpoint: String,
        model: String,
        #[serde(default)]
        api_key_env: Option<String>,
        #[serde(default)]
        temperature: f64,
        #[serde(default = "default_in_flight")]
        max_in_flight: usize,
        #[serde(default = "default_retries")]
        max_retries: u32,
    },
}

fn default_in_flight() -> usize {
    provider::DEFAULT_MAX_IN_FLIGHT
}

fn default_retries() -> u32 {
    provider::DEFAULT_MAX_RETRIES
}

impl LlmSettings {
    /// Builds the provider; relative canned directories resolve against
    /// `base`.
    pub fn build(&self, base: &std::path::Path) -> Result<Arc<dyn LlmProvider>> {
        Ok(match self {
            Self::Stub => Arc::new(StubLlm),
            Self::Canned { dir } => Arc::new(CannedLlm::new(base.join(dir))),
            Self::Remote {
                endpoint,
                model,
                api_key_env,
                temperature,
                max_in_flight,
                max_retries,
            } => {
                let key = provider::api_key(api_key_env.as_deref())?;
                let client = JsonClient::new(model.clone(), endpoint.clone(), key, *max_in_flight, *max_retries)?;
                Arc::new(RemoteLlm::new(client, model.clone(), *temperature))
            }
        })
    }
}
