//! Minimal blocking JSON-over-HTTP client used by the remote backends.

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Clone)]
pub(crate) struct JsonClient {
    agent: ureq::Agent,
    bearer: Option<String>,
}

impl JsonClient {
    pub(crate) fn new(timeout: Duration, bearer: Option<String>) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self { agent, bearer }
    }

    pub(crate) fn post<B: Serialize, R: DeserializeOwned>(&self, url: &str, body: &B) -> Result<R, String> {
        let mut req = self.agent.post(url).header("Content-Type", "application/json");
        if let Some(token) = &self.bearer {
            req = req.header("Authorization", &format!("Bearer {token}"));
        }
        let mut resp = req.send_json(body).map_err(|e| format!("POST {url}: {e}"))?;
        let status = resp.status();
        if !status.is_success() {
            let text = resp.body_mut().read_to_string().unwrap_or_default();
            return Err(format!("POST {url}: HTTP {}: {}", status.as_u16(), text.trim()));
        }
        resp.body_mut()
            .read_json::<R>()
            .map_err(|e| format!("POST {url}: invalid JSON response: {e}"))
    }

    pub(crate) fn get<R: DeserializeOwned>(&self, url: &str) -> Result<R, String> {
        let mut resp = self.agent.get(url).call().map_err(|e| format!("GET {url}: {e}"))?;
        if !resp.status().is_success() {
            return Err(format!("GET {url}: HTTP {}", resp.status().as_u16()));
        }
        resp.body_mut()
            .read_json::<R>()
            .map_err(|e| format!("GET {url}: invalid JSON response: {e}"))
    }
}
