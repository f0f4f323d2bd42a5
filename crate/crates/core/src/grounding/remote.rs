use std::io::Cursor;
use std::time::Duration;

use super::wire::{ToolRequest, ToolResponse};
use super::{render_screen, GroundingBackend, ScreenView, ToolCall, ToolError, ToolOutput};
use crate::http::JsonClient;

/// Environment variable holding the perception service base URL.
pub const TOOL_ENDPOINT_ENV: &str = "TOOL_ENDPOINT";

/// Client for a perception service speaking the [`super::wire`] protocol.
///
/// Tool calls are `POST {base}/tool`; `GET {base}/health` answers
/// `{"ok": true}`.
#[derive(Clone)]
pub struct RemoteToolBackend {
    base: String,
    client: JsonClient,
}

impl RemoteToolBackend {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self {
            base: base_url.into().trim_end_matches('/').to_string(),
            client: JsonClient::new(Duration::from_secs(60), None),
        }
    }

    pub fn from_env() -> Result<Self, String> {
        std::env::var(TOOL_ENDPOINT_ENV)
            .map(Self::new)
            .map_err(|_| format!("{TOOL_ENDPOINT_ENV} is not set"))
    }

    pub fn health(&self) -> Result<bool, String> {
        let v: serde_json::Value = self.client.get(&format!("{}/health", self.base))?;
        Ok(v.get("ok").and_then(serde_json::Value::as_bool).unwrap_or(false))
    }

    fn screen_png(screen: &ScreenView<'_>) -> Result<Vec<u8>, ToolError> {
        if let Some(path) = screen.image_path {
            return std::fs::read(path).map_err(|e| ToolError::Unavailable(format!("cannot read {}: {e}", path.display())));
        }
        let synthetic = screen.synthetic.ok_or(ToolError::NoAnnotation)?;
        let mut buf = Cursor::new(Vec::new());
        render_screen(synthetic)
            .write_to(&mut buf, image::ImageFormat::Png)
            .map_err(|e| ToolError::Unavailable(e.to_string()))?;
        Ok(buf.into_inner())
    }
}

impl GroundingBackend for RemoteToolBackend {
    fn identity(&self) -> String {
        format!("remote:{}", self.base)
    }

    fn invoke(&self, call: &ToolCall, screen: &ScreenView<'_>) -> Result<ToolOutput, ToolError> {
        let png = Self::screen_png(screen)?;
        let request = ToolRequest::new(call, &png);
        let response: ToolResponse = self
            .client
            .post(&format!("{}/tool", self.base), &request)
            .map_err(ToolError::Unavailable)?;
        response.into_outcome(call.name())
    }
}
