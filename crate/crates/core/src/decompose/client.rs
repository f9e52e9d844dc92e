//! Completion-model clients for decomposition.
//!
//! Wire protocol: `POST endpoint` with
//! `{"model_id", "prompt", "decoding": {"temperature", "max_tokens"}}`,
//! response `{"text": "..."}`. A small semaphore caps concurrent in-flight
//! requests across worker threads.

use std::sync::{Condvar, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("model endpoint unreachable: {0}")]
    Transient(String),
    #[error("model request rejected: {0}")]
    Fatal(String),
}

/// Fixed decoding configuration sent with every request. Temperature 0 keeps
/// decomposition deterministic by default.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecodingConfig {
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for DecodingConfig {
    fn default() -> Self {
        Self {
            temperature: 0.0,
            max_tokens: 1024,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CompletionRequest {
    pub model_id: String,
    pub prompt: String,
    pub decoding: DecodingConfig,
}

#[derive(Debug, Clone, Deserialize)]
pub struct CompletionResponse {
    pub text: String,
}

pub trait CompletionClient: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, ClientError>;
}

/// Counting semaphore used to cap concurrent model requests.
struct Semaphore {
    permits: Mutex<usize>,
    available: Condvar,
}

impl Semaphore {
    fn new(permits: usize) -> Self {
        Self {
            permits: Mutex::new(permits.max(1)),
            available: Condvar::new(),
        }
    }

    fn acquire(&self) -> SemaphoreGuard<'_> {
        let mut permits = self.permits.lock().unwrap();
        while *permits == 0 {
            permits = self.available.wait(permits).unwrap();
        }
        *permits -= 1;
        SemaphoreGuard { semaphore: self }
    }
}

struct SemaphoreGuard<'a> {
    semaphore: &'a Semaphore,
}

impl Drop for SemaphoreGuard<'_> {
    fn drop(&mut self) {
        *self.semaphore.permits.lock().unwrap() += 1;
        self.semaphore.available.notify_one();
    }
}

/// HTTP completion client with a concurrent-request cap.
pub struct HttpCompletionClient {
    endpoint: String,
    auth_token: Option<String>,
    client: reqwest::blocking::Client,
    semaphore: Semaphore,
}

impl HttpCompletionClient {
    pub fn new(
        endpoint: impl Into<String>,
        auth_token: Option<String>,
        max_concurrent_requests: usize,
    ) -> Self {
        Self {
            endpoint: endpoint.into(),
            auth_token,
            client: reqwest::blocking::Client::new(),
            semaphore: Semaphore::new(max_concurrent_requests),
        }
    }
}

impl CompletionClient for HttpCompletionClient {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, ClientError> {
        let _permit = self.semaphore.acquire();
        let mut http = self.client.post(&self.endpoint).json(request);
        if let Some(token) = &self.auth_token {
            http = http.bearer_auth(token);
        }
        let response = http
            .send()
            .map_err(|e| ClientError::Transient(format!("{}: {e}", self.endpoint)))?;
        let status = response.status();
        if status.is_server_error() {
            return Err(ClientError::Transient(format!(
                "{} returned {status}",
                self.endpoint
            )));
        }
        if !status.is_success() {
            return Err(ClientError::Fatal(format!(
                "{} returned {status}",
                self.endpoint
            )));
        }
        response
            .json::<CompletionResponse>()
            .map_err(|e| ClientError::Fatal(format!("malformed completion response: {e}")))
    }
}

/// Scripted client for tests and offline replay: responds from a fixed list,
/// repeating the last entry, or fails every call.
pub enum ScriptedClient {
    Responses(Vec<String>, Mutex<usize>),
    AlwaysFail(String),
}

impl ScriptedClient {
    pub fn always(text: impl Into<String>) -> Self {
        Self::Responses(vec![text.into()], Mutex::new(0))
    }

    pub fn sequence(responses: Vec<String>) -> Self {
        Self::Responses(responses, Mutex::new(0))
    }

    pub fn failing(reason: impl Into<String>) -> Self {
        Self::AlwaysFail(reason.into())
    }
}

impl CompletionClient for ScriptedClient {
    fn complete(&self, _request: &CompletionRequest) -> Result<CompletionResponse, ClientError> {
        match self {
            Self::Responses(responses, cursor) => {
                let mut cursor = cursor.lock().unwrap();
                let text = responses[(*cursor).min(responses.len() - 1)].clone();
                *cursor += 1;
                Ok(CompletionResponse { text })
            }
            Self::AlwaysFail(reason) => Err(ClientError::Transient(reason.clone())),
        }
    }
}
