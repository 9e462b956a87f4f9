//! Shared plumbing for remote HTTP providers: in-flight caps, credentials and
//! retrying JSON POSTs.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde_json::Value;

use crate::error::{Error, Result};

pub const DEFAULT_MAX_IN_FLIGHT: usize = 8;
pub const DEFAULT_MAX_RETRIES: u32 = 2;
const BACKOFF_BASE: Duration = Duration::from_millis(250);

/// Counting semaphore bounding concurrent calls to one provider.
#[derive(Debug)]
pub struct InFlightLimit {
    max: usize,
    active: Mutex<usize>,
    freed: Condvar,
}

impl InFlightLimit {
    pub fn new(max: usize) -> Self {
        Self {
            max: max.max(1),
            active: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    pub fn max(&self) -> usize {
        self.max
    }

    pub fn acquire(&self) -> InFlightGuard<'_> {
        let mut active = self.active.lock().unwrap_or_else(|e| e.into_inner());
        while *active >= self.max {
            active = self.freed.wait(active).unwrap_or_else(|e| e.into_inner());
        }
        *active += 1;
        InFlightGuard { limit: self }
    }
}

pub struct InFlightGuard<'a> {
    limit: &'a InFlightLimit,
}

impl Drop for InFlightGuard<'_> {
    fn drop(&mut self) {
        let mut active = self.limit.active.lock().unwrap_or_else(|e| e.into_inner());
        *active -= 1;
        self.limit.freed.notify_one();
    }
}

/// Reads an API key from the named environment variable. An unset name means
/// the endpoint needs no credential.
pub fn api_key(var: Option<&str>) -> Result<Option<String>> {
    match var {
        None => Ok(None),
        Some(var) => std::env::var(var)
            .map(Some)
            .map_err(|_| Error::Config(format!("environment variable {var} is not set"))),
    }
}

/// JSON-over-HTTP client with bounded concurrency and exponential backoff on
/// transport errors, 429 and 5xx.
#[derive(Debug)]
pub struct JsonClient {
    name: String,
    endpoint: String,
    api_key: Option<String>,
    max_retries: u32,
    limit: InFlightLimit,
    http: reqwest::blocking::Client,
}

impl JsonClient {
    pub fn new(
        name: impl Into<String>,
        endpoint: impl Into<String>,
        api_key: Option<String>,
        max_in_flight: usize,
        max_retries: u32,
    ) -> Result<Self> {
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| Error::Config(format!("http client: {e}")))?;
        Ok(Self {
            name: name.into(),
            endpoint: endpoint.into(),
            api_key,
            max_retries,
            limit: InFlightLimit::new(max_in_flight),
            http,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn max_in_flight(&self) -> usize {
        self.limit.max()
    }

    pub fn post(&self, body: &Value) -> Result<Value> {
        let _guard = self.limit.acquire();
        let mut attempt = 0;
        loop {
            attempt += 1;
            let (status, message, transient) = match self.send(body) {
                Ok(value) => return Ok(value),
                Err(failure) => failure,
            };
            if !transient || attempt > self.max_retries {
                return Err(Error::Provider {
                    provider: self.name.clone(),
                    status,
                    attempts: attempt,
                    message,
                });
            }
            tracing::warn!(provider = %self.name, attempt, %message, "retrying provider call");
            std::thread::sleep(BACKOFF_BASE * 2u32.pow(attempt - 1));
        }
    }

    fn send(&self, body: &Value) -> std::result::Result<Value, (Option<u16>, String, bool)> {
        let mut request = self.http.post(&self.endpoint).json(body);
        if let Some(key) = &self.api_key {
            request = request.bearer_auth(key);
        }
        let response = request.send().map_err(|e| (None, e.to_string(), true))?;
        let status = response.status();
        if !status.is_success() {
            let code = status.as_u16();
            let text = response.text().unwrap_or_default();
            let transient = code == 429 || status.is_server_error();
            return Err((Some(code), format!("HTTP {code}: {text}"), transient));
        }
        response
            .json::<Value>()
            .map_err(|e| (Some(status.as_u16()), format!("invalid JSON body: {e}"), false))
    }
}
