//! HTTP embedding-service client.
//!
//! Wire protocol: `POST endpoint` with `{"texts": [...]}`, response
//! `{"vectors": [[...], ...]}`. Endpoint, bearer token, and dimension come
//! from engine configuration. Retries are handled one level up by
//! [`crate::embed::embed_texts`]; this client only classifies failures.

use serde::{Deserialize, Serialize};

use super::{EmbedError, Embedder, EmbedderDescriptor, EmbeddingVector};

#[derive(Debug, Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [String],
}

#[derive(Debug, Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f64>>,
}

pub struct RemoteEmbedder {
    endpoint: String,
    auth_token: Option<String>,
    descriptor: EmbedderDescriptor,
    client: reqwest::blocking::Client,
}

impl RemoteEmbedder {
    pub fn new(
        endpoint: impl Into<String>,
        auth_token: Option<String>,
        provider_name: impl Into<String>,
        dim: usize,
        normalizes: bool,
    ) -> Self {
        Self {
            endpoint: endpoint.into(),
            auth_token,
            descriptor: EmbedderDescriptor {
                provider_name: provider_name.into(),
                dim,
                normalizes,
            },
            client: reqwest::blocking::Client::new(),
        }
    }
}

impl Embedder for RemoteEmbedder {
    fn descriptor(&self) -> EmbedderDescriptor {
        self.descriptor.clone()
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        let mut request = self
            .client
            .post(&self.endpoint)
            .json(&EmbedRequest { texts });
        if let Some(token) = &self.auth_token {
            request = request.bearer_auth(token);
        }
        let response = request
            .send()
            .map_err(|e| EmbedError::Transient(format!("{}: {e}", self.endpoint)))?;

        let status = response.status();
        if status.is_server_error() {
            return Err(EmbedError::Transient(format!(
                "{} returned {status}",
                self.endpoint
            )));
        }
        if !status.is_success() {
            return Err(EmbedError::Contract(format!(
                "{} returned {status}",
                self.endpoint
            )));
        }
        let body: EmbedResponse = response
            .json()
            .map_err(|e| EmbedError::Contract(format!("malformed embedding response: {e}")))?;
        if body.vectors.len() != texts.len() {
            return Err(EmbedError::Contract(format!(
                "requested {} embeddings, received {}",
                texts.len(),
                body.vectors.len()
            )));
        }
        body.vectors
            .into_iter()
            .enumerate()
            .map(|(i, values)| {
                if values.len() != self.descriptor.dim {
                    return Err(EmbedError::Contract(format!(
                        "vector {i} has dim {} but provider `{}` declares {}",
                        values.len(),
                        self.descriptor.provider_name,
                        self.descriptor.dim
                    )));
                }
                Ok(EmbeddingVector::new(values))
            })
            .collect()
    }
}
