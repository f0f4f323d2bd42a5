use std::time::Duration;

use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{BackendError, Capabilities, PolicyBackend, PolicyRequest, SamplingParams};
use crate::http::JsonClient;

pub const MODEL_ENDPOINT_ENV: &str = "MODEL_ENDPOINT";
pub const MODEL_API_KEY_ENV: &str = "MODEL_API_KEY";

#[derive(Serialize)]
struct CompletionRequest<'a> {
    prompt: String,
    images: Vec<String>,
    params: &'a SamplingParams,
}

#[derive(Deserialize)]
struct CompletionResponse {
    text: String,
}

/// A model served over HTTP: `POST {endpoint}` with
/// `{prompt, images: [base64 PNG], params}`, answering `{text}`.
///
/// System and user parts are sent as one prompt string.
#[derive(Clone)]
pub struct RemotePolicyBackend {
    endpoint: String,
    client: JsonClient,
}

impl RemotePolicyBackend {
    pub fn new(endpoint: impl Into<String>, api_key: Option<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            client: JsonClient::new(Duration::from_secs(300), api_key),
        }
    }

    pub fn from_env() -> Result<Self, String> {
        let endpoint = std::env::var(MODEL_ENDPOINT_ENV).map_err(|_| format!("{MODEL_ENDPOINT_ENV} is not set"))?;
        Ok(Self::new(endpoint, std::env::var(MODEL_API_KEY_ENV).ok()))
    }
}

impl PolicyBackend for RemotePolicyBackend {
    fn identity(&self) -> String {
        format!("remote:{}", self.endpoint)
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            accepts_images: true,
            reentrant: true,
        }
    }

    fn complete(&self, request: &PolicyRequest) -> Result<String, BackendError> {
        let images = request
            .images
            .iter()
            .map(|p| {
                std::fs::read(p)
                    .map(|bytes| base64::engine::general_purpose::STANDARD.encode(bytes))
                    .map_err(|e| BackendError::Transport(format!("cannot read {}: {e}", p.display())))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let body = CompletionRequest {
            prompt: request.prompt.joined(),
            images,
            params: &request.params,
        };
        let resp: CompletionResponse = self.client.post(&self.endpoint, &body).map_err(BackendError::Transport)?;
        Ok(resp.text)
    }
}
