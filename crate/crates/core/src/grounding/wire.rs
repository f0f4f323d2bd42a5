//! JSON wire protocol shared with remote perception services.
//!
//! Request: `{"tool": "...", "args": {...}, "image": "<base64 PNG>"}`.
//! Response: `{"ok": true, "result": {...}}` or
//! `{"ok": false, "result": null, "error": "unsupported"}`.
//!
//! Result payloads by tool:
//!
//! | tool                                  | result                                               |
//! |---------------------------------------|------------------------------------------------------|
//! | `object_detection`, `visual_grounding`| `{"detections": [{"query", "boxes": [{x,y,w,h,score}]}]}` |
//! | `zoom_tool`                           | `{"crop": {"region", "width", "height", "image_ref"}}` |
//! | `ocr`                                 | `{"tokens": [{"word", "box", "confidence"}]}`         |
//! | `template_match`                      | `{"matches": [{"template", "box", "score"}]}`         |

use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{CropInfo, OcrToken, QueryBoxes, TemplateMatch, ToolCall, ToolError, ToolOutput};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolRequest {
    pub tool: String,
    #[serde(default)]
    pub args: Value,
    pub image: String,
}

impl ToolRequest {
    pub fn new(call: &ToolCall, png: &[u8]) -> Self {
        Self {
            tool: call.name().to_string(),
            args: call.args(),
            image: base64::engine::general_purpose::STANDARD.encode(png),
        }
    }

    pub fn decode_image(&self) -> Result<Vec<u8>, ToolError> {
        base64::engine::general_purpose::STANDARD
            .decode(&self.image)
            .map_err(|e| ToolError::InvalidArgs(format!("image is not base64: {e}")))
    }

    pub fn call(&self) -> Result<ToolCall, ToolError> {
        ToolCall::from_parts(&self.tool, &self.args)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolResponse {
    pub ok: bool,
    #[serde(default)]
    pub result: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ToolResponse {
    pub fn from_outcome(outcome: &Result<ToolOutput, ToolError>) -> Self {
        match outcome {
            Ok(out) => Self {
                ok: true,
                result: encode_output(out),
                error: None,
            },
            Err(e) => Self::failure(e),
        }
    }

    pub fn failure(e: &ToolError) -> Self {
        Self {
            ok: false,
            result: Value::Null,
            error: Some(e.code().to_string()),
        }
    }

    /// Convert a wire response for `tool` back into a typed outcome.
    pub fn into_outcome(self, tool: &str) -> Result<ToolOutput, ToolError> {
        if !self.ok {
            let code = self.error.unwrap_or_else(|| "unavailable".into());
            return Err(match code.as_str() {
                "unsupported" => ToolError::Unsupported(tool.to_string()),
                "unknown_template" => ToolError::UnknownTemplate(String::new()),
                "zero_area" => ToolError::ZeroArea,
                "outside_image" => ToolError::OutsideImage,
                "invalid_args" => ToolError::InvalidArgs(code),
                "no_annotation" => ToolError::NoAnnotation,
                _ => ToolError::Unavailable(code),
            });
        }
        decode_output(tool, self.result)
    }
}

pub fn encode_output(out: &ToolOutput) -> Value {
    match out {
        ToolOutput::Detections(d) => json!({ "detections": d }),
        ToolOutput::Crop(c) => json!({ "crop": c }),
        ToolOutput::Tokens(t) => json!({ "tokens": t }),
        ToolOutput::Matches(m) => json!({ "matches": m }),
    }
}

pub fn decode_output(tool: &str, mut result: Value) -> Result<ToolOutput, ToolError> {
    let bad = |e: serde_json::Error| ToolError::Unavailable(format!("malformed `{tool}` result: {e}"));
    let mut take = |key: &str| {
        result
            .get_mut(key)
            .map(Value::take)
            .ok_or_else(|| ToolError::Unavailable(format!("`{tool}` result lacks `{key}`")))
    };
    match tool {
        "object_detection" | "visual_grounding" => Ok(ToolOutput::Detections(
            serde_json::from_value::<Vec<QueryBoxes>>(take("detections")?).map_err(bad)?,
        )),
        "zoom_tool" => Ok(ToolOutput::Crop(serde_json::from_value::<CropInfo>(take("crop")?).map_err(bad)?)),
        "ocr" => Ok(ToolOutput::Tokens(serde_json::from_value::<Vec<OcrToken>>(take("tokens")?).map_err(bad)?)),
        "template_match" => Ok(ToolOutput::Matches(
            serde_json::from_value::<Vec<TemplateMatch>>(take("matches")?).map_err(bad)?,
        )),
        other => Err(ToolError::Unsupported(other.to_string())),
    }
}

/// Structural check of a response against the protocol: `ok` consistent
/// with `error`, and a successful `result` decodable for `tool`.
pub fn validate_response(tool: &str, raw: &Value) -> Result<(), String> {
    let resp: ToolResponse = serde_json::from_value(raw.clone()).map_err(|e| e.to_string())?;
    match (resp.ok, &resp.error) {
        (true, Some(_)) => Err("ok response carries an error".into()),
        (false, None) => Err("failed response lacks an error code".into()),
        (false, Some(_)) => Ok(()),
        (true, None) => decode_output(tool, resp.result).map(|_| ()).map_err(|e| e.to_string()),
    }
}
