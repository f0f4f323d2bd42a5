//! Perception tools (open-vocabulary UI detection, zoom/crop, OCR and
//! template matching) behind one backend contract, plus the aggregator that
//! folds a step's tool outputs into [`GroundingFeatures`].
//!
//! Two backend families exist: [`MockBackend`] computes every tool as a pure
//! function of a [`SyntheticScreen`], and [`RemoteToolBackend`] forwards the
//! same calls to a perception service over the JSON wire protocol in
//! [`wire`].

mod mock;
mod remote;
mod screen;
pub mod wire;

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::geometry::BoundingBox;

pub use mock::{detect_objects, match_template, render_screen, run_ocr, zoom_crop, MockBackend, TemplateRegistry};
pub use remote::RemoteToolBackend;
pub use screen::{ScreenText, SyntheticScreen, Widget, WidgetKind};

/// IoU above which two same-query detections are treated as one.
pub const DETECTION_MERGE_IOU: f64 = 0.9;

/// Default score floor for template matches.
pub const TEMPLATE_SCORE_FLOOR: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ToolError {
    #[error("unsupported")]
    Unsupported(String),
    #[error("tool backend unavailable: {0}")]
    Unavailable(String),
    #[error("unknown template id `{0}`")]
    UnknownTemplate(String),
    #[error("zero-area region")]
    ZeroArea,
    #[error("region lies entirely outside the image")]
    OutsideImage,
    #[error("invalid tool arguments: {0}")]
    InvalidArgs(String),
    #[error("screen has no synthetic annotation; the mock backend cannot see it")]
    NoAnnotation,
}

impl ToolError {
    /// Short machine-readable code used in wire responses.
    pub fn code(&self) -> &'static str {
        match self {
            ToolError::Unsupported(_) => "unsupported",
            ToolError::Unavailable(_) => "unavailable",
            ToolError::UnknownTemplate(_) => "unknown_template",
            ToolError::ZeroArea => "zero_area",
            ToolError::OutsideImage => "outside_image",
            ToolError::InvalidArgs(_) => "invalid_args",
            ToolError::NoAnnotation => "no_annotation",
        }
    }
}

/// The screen a tool call runs against: the screenshot on disk and, for
/// synthetic tasks, its ground-truth annotation.
#[derive(Debug, Clone, Copy)]
pub struct ScreenView<'a> {
    pub image_path: Option<&'a Path>,
    pub synthetic: Option<&'a SyntheticScreen>,
}

impl<'a> ScreenView<'a> {
    pub fn synthetic(screen: &'a SyntheticScreen) -> Self {
        Self {
            image_path: None,
            synthetic: Some(screen),
        }
    }

    /// Textual description used for memory observations and critic context.
    pub fn summary(&self) -> String {
        match (self.synthetic, self.image_path) {
            (Some(s), _) => s.summary(),
            (None, Some(p)) => format!(
                "screenshot {}",
                p.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default()
            ),
            (None, None) => "no screen".to_string(),
        }
    }
}

/// A typed tool request. Names follow the wire protocol.
#[derive(Debug, Clone, PartialEq)]
pub enum ToolCall {
    /// Class-level detection, e.g. `{"objects": ["button", "icon"]}`.
    ObjectDetection { objects: Vec<String> },
    /// Text-query detection, e.g. `{"query": "Load Data button"}`.
    VisualGrounding { query: String },
    Zoom { region: BoundingBox },
    Ocr,
    TemplateMatch { template: String },
    /// Any tool name outside the supported set; answered with "unsupported".
    Unsupported { name: String, args: Value },
}

impl ToolCall {
    pub const SUPPORTED: [&'static str; 5] = ["object_detection", "visual_grounding", "zoom_tool", "ocr", "template_match"];

    pub fn name(&self) -> &str {
        match self {
            ToolCall::ObjectDetection { .. } => "object_detection",
            ToolCall::VisualGrounding { .. } => "visual_grounding",
            ToolCall::Zoom { .. } => "zoom_tool",
            ToolCall::Ocr => "ocr",
            ToolCall::TemplateMatch { .. } => "template_match",
            ToolCall::Unsupported { name, .. } => name,
        }
    }

    pub fn args(&self) -> Value {
        use serde_json::json;
        match self {
            ToolCall::ObjectDetection { objects } => json!({ "objects": objects }),
            ToolCall::VisualGrounding { query } => json!({ "query": query }),
            ToolCall::Zoom { region } => json!({ "region": [region.x, region.y, region.w, region.h] }),
            ToolCall::Ocr => json!({}),
            ToolCall::TemplateMatch { template } => json!({ "template": template }),
            ToolCall::Unsupported { args, .. } => args.clone(),
        }
    }

    /// Decode a `{tool, args}` pair. Unknown tool names become
    /// [`ToolCall::Unsupported`]; malformed arguments for a known tool are
    /// an error.
    pub fn from_parts(tool: &str, args: &Value) -> Result<ToolCall, ToolError> {
        let field = |k: &str| args.get(k);
        let string = |k: &str| {
            field(k)
                .and_then(Value::as_str)
                .map(str::to_string)
                .ok_or_else(|| ToolError::InvalidArgs(format!("`{tool}` needs string `{k}`")))
        };
        Ok(match tool {
            "object_detection" => {
                let objects = match field("objects") {
                    Some(Value::Array(items)) => items
                        .iter()
                        .map(|v| v.as_str().map(str::to_string))
                        .collect::<Option<Vec<_>>>()
                        .ok_or_else(|| ToolError::InvalidArgs("`objects` must be strings".into()))?,
                    Some(Value::String(s)) => vec![s.clone()],
                    _ => {
                        // A bare query is accepted as a single class.
                        vec![string("query")?]
                    }
                };
                if objects.iter().any(|o| o.trim().is_empty()) || objects.is_empty() {
                    return Err(ToolError::InvalidArgs("empty object query".into()));
                }
                ToolCall::ObjectDetection { objects }
            }
            "visual_grounding" => {
                let query = string("query")?;
                if query.trim().is_empty() {
                    return Err(ToolError::InvalidArgs("empty query".into()));
                }
                ToolCall::VisualGrounding { query }
            }
            "zoom_tool" => {
                let nums: Option<Vec<u32>> = match field("region") {
                    Some(Value::Array(items)) => items.iter().map(|v| v.as_u64().map(|n| n as u32)).collect(),
                    Some(obj @ Value::Object(_)) => serde_json::from_value::<BoundingBox>(obj.clone())
                        .ok()
                        .map(|b| vec![b.x, b.y, b.w, b.h]),
                    _ => None,
                };
                match nums.as_deref() {
                    Some([x, y, w, h]) => ToolCall::Zoom {
                        region: BoundingBox::new(*x, *y, *w, *h),
                    },
                    _ => return Err(ToolError::InvalidArgs("`zoom_tool` needs `region` [x,y,w,h]".into())),
                }
            }
            "ocr" => ToolCall::Ocr,
            "template_match" => ToolCall::TemplateMatch {
                template: string("template")?,
            },
            other => ToolCall::Unsupported {
                name: other.to_string(),
                args: args.clone(),
            },
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredBox {
    #[serde(flatten)]
    pub bbox: BoundingBox,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcrToken {
    pub word: String,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateMatch {
    pub template: String,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub score: f64,
}

/// Result of a zoom/crop: the clamped region and a content digest standing
/// in for the focus image.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CropInfo {
    pub region: BoundingBox,
    pub width: u32,
    pub height: u32,
    pub image_ref: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryBoxes {
    pub query: String,
    pub boxes: Vec<ScoredBox>,
}

/// Typed tool result.
#[derive(Debug, Clone, PartialEq)]
pub enum ToolOutput {
    Detections(Vec<QueryBoxes>),
    Crop(CropInfo),
    Tokens(Vec<OcrToken>),
    Matches(Vec<TemplateMatch>),
}

pub trait GroundingBackend: Send + Sync {
    fn identity(&self) -> String;

    fn invoke(&self, call: &ToolCall, screen: &ScreenView<'_>) -> Result<ToolOutput, ToolError>;
}

/// One executed tool call, in request order within a step.
#[derive(Debug, Clone, PartialEq)]
pub struct ToolInvocation {
    pub seq: usize,
    pub call: ToolCall,
    pub outcome: Result<ToolOutput, ToolError>,
}

impl ToolInvocation {
    pub fn run(seq: usize, call: ToolCall, backend: &dyn GroundingBackend, screen: &ScreenView<'_>) -> Self {
        let outcome = match &call {
            ToolCall::Unsupported { name, .. } => Err(ToolError::Unsupported(name.clone())),
            _ => backend.invoke(&call, screen),
        };
        Self { seq, call, outcome }
    }

    /// Wire-shaped response for this invocation.
    pub fn response(&self) -> wire::ToolResponse {
        wire::ToolResponse::from_outcome(&self.outcome)
    }
}

/// The tool call an aggregated entry came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCallRecord {
    pub seq: usize,
    pub tool: String,
    pub args: Value,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryKind {
    Detection,
    Token,
    Crop,
    Match,
}

/// Links one entry of [`GroundingFeatures`] to the call that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub entry: EntryKind,
    pub index: usize,
    pub call: ToolCallRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub query: String,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub score: f64,
}

/// The per-step grounding aggregate fed to the actor and to memory updates.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundingFeatures {
    pub detections: Vec<Detection>,
    pub tokens: Vec<OcrToken>,
    pub crops: Vec<CropInfo>,
    pub matches: Vec<TemplateMatch>,
    pub provenance: Vec<Provenance>,
}

impl GroundingFeatures {
    pub fn is_empty(&self) -> bool {
        self.entry_count() == 0
    }

    pub fn entry_count(&self) -> usize {
        self.detections.len() + self.tokens.len() + self.crops.len() + self.matches.len()
    }

    /// Prompt rendering of the aggregate. Empty features render to an empty
    /// string so that disabled grounding leaves no trace in prompts.
    pub fn render(&self) -> String {
        if self.is_empty() {
            return String::new();
        }
        let mut out = String::from("TOOL_CONTEXT (grounding results for the current screen):\n");
        let mut queries: Vec<&str> = Vec::new();
        for d in &self.detections {
            if !queries.contains(&d.query.as_str()) {
                queries.push(&d.query);
            }
        }
        for q in queries {
            let boxes: Vec<String> = self
                .detections
                .iter()
                .filter(|d| d.query == q)
                .map(|d| format!("{} score={:.2}", fmt_box(&d.bbox), d.score))
                .collect();
            out.push_str(&format!("- detection \"{q}\": {}\n", boxes.join("; ")));
        }
        if !self.tokens.is_empty() {
            let toks: Vec<String> = self
                .tokens
                .iter()
                .map(|t| format!("\"{}\" {}", t.word, fmt_box(&t.bbox)))
                .collect();
            out.push_str(&format!("- ocr: {}\n", toks.join("; ")));
        }
        for c in &self.crops {
            out.push_str(&format!(
                "- zoom: {} -> {}x{} {}\n",
                fmt_box(&c.region),
                c.width,
                c.height,
                c.image_ref
            ));
        }
        for m in &self.matches {
            out.push_str(&format!(
                "- template \"{}\": {} score={:.2}\n",
                m.template,
                fmt_box(&m.bbox),
                m.score
            ));
        }
        out
    }
}

fn fmt_box(b: &BoundingBox) -> String {
    format!("[{},{},{},{}]", b.x, b.y, b.w, b.h)
}

/// Fold a step's tool outputs into one [`GroundingFeatures`].
///
/// Invocations are processed in `(tool name, seq)` order. Failed calls
/// contribute nothing. Same-query detections whose boxes overlap with IoU
/// above [`DETECTION_MERGE_IOU`] are merged: the higher score survives, ties
/// keep the earlier entry. Detections come out in descending score order.
pub fn aggregate_grounding(invocations: &[ToolInvocation]) -> GroundingFeatures {
    let mut ordered: Vec<&ToolInvocation> = invocations.iter().collect();
    ordered.sort_by(|a, b| a.call.name().cmp(b.call.name()).then(a.seq.cmp(&b.seq)));

    let mut detections: Vec<(Detection, ToolCallRecord)> = Vec::new();
    let mut tokens = Vec::new();
    let mut crops = Vec::new();
    let mut matches = Vec::new();

    for inv in ordered {
        let Ok(output) = &inv.outcome else { continue };
        let record = ToolCallRecord {
            seq: inv.seq,
            tool: inv.call.name().to_string(),
            args: inv.call.args(),
        };
        match output {
            ToolOutput::Detections(groups) => {
                for group in groups {
                    for sb in &group.boxes {
                        let candidate = Detection {
                            query: group.query.clone(),
                            bbox: sb.bbox,
                            score: sb.score,
                        };
                        detections.push((candidate, record.clone()));
                    }
                }
            }
            ToolOutput::Tokens(ts) => tokens.extend(ts.iter().cloned().map(|t| (t, record.clone()))),
            ToolOutput::Crop(c) => crops.push((c.clone(), record.clone())),
            ToolOutput::Matches(ms) => matches.extend(ms.iter().cloned().map(|m| (m, record.clone()))),
        }
    }

    // Greedy suppression: highest score first, stable on fold order.
    detections.sort_by(|a, b| b.0.score.total_cmp(&a.0.score));
    let mut kept: Vec<(Detection, ToolCallRecord)> = Vec::new();
    for (d, rec) in detections {
        let dup = kept
            .iter()
            .any(|(k, _)| k.query == d.query && k.bbox.iou(&d.bbox) > DETECTION_MERGE_IOU);
        if !dup {
            kept.push((d, rec));
        }
    }

    let mut features = GroundingFeatures::default();
    for (i, (d, rec)) in kept.into_iter().enumerate() {
        features.detections.push(d);
        features.provenance.push(Provenance {
            entry: EntryKind::Detection,
            index: i,
            call: rec,
        });
    }
    for (i, (t, rec)) in tokens.into_iter().enumerate() {
        features.tokens.push(t);
        features.provenance.push(Provenance {
            entry: EntryKind::Token,
            index: i,
            call: rec,
        });
    }
    for (i, (c, rec)) in crops.into_iter().enumerate() {
        features.crops.push(c);
        features.provenance.push(Provenance {
            entry: EntryKind::Crop,
            index: i,
            call: rec,
        });
    }
    for (i, (m, rec)) in matches.into_iter().enumerate() {
        features.matches.push(m);
        features.provenance.push(Provenance {
            entry: EntryKind::Match,
            index: i,
            call: rec,
        });
    }
    features
}

/// The tool sweep run on every screen before the actor is consulted:
/// OCR plus class-level detection of the common widget classes.
pub fn baseline_sweep() -> Vec<ToolCall> {
    vec![
        ToolCall::Ocr,
        ToolCall::ObjectDetection {
            objects: vec!["button".into(), "field".into(), "viewport".into()],
        },
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn det(seq: usize, query: &str, boxes: &[(BoundingBox, f64)]) -> ToolInvocation {
        ToolInvocation {
            seq,
            call: ToolCall::VisualGrounding { query: query.into() },
            outcome: Ok(ToolOutput::Detections(vec![QueryBoxes {
                query: query.into(),
                boxes: boxes.iter().map(|(b, s)| ScoredBox { bbox: *b, score: *s }).collect(),
            }])),
        }
    }

    fn ocr(seq: usize, words: &[&str]) -> ToolInvocation {
        ToolInvocation {
            seq,
            call: ToolCall::Ocr,
            outcome: Ok(ToolOutput::Tokens(
                words
                    .iter()
                    .enumerate()
                    .map(|(i, w)| OcrToken {
                        word: w.to_string(),
                        bbox: BoundingBox::new(i as u32 * 10, 0, 8, 8),
                        confidence: 1.0,
                    })
                    .collect(),
            )),
        }
    }

    #[test]
    fn empty_input_gives_empty_features() {
        let f = aggregate_grounding(&[]);
        assert!(f.is_empty());
        assert!(f.provenance.is_empty());
        assert_eq!(f.render(), "");
    }

    #[test]
    fn provenance_counts_entries() {
        let b1 = BoundingBox::new(0, 0, 10, 10);
        let b2 = BoundingBox::new(50, 50, 10, 10);
        let f = aggregate_grounding(&[det(0, "Save", &[(b1, 1.0), (b2, 0.5)]), ocr(1, &["a", "b", "c"])]);
        assert_eq!(f.detections.len(), 2);
        assert_eq!(f.tokens.len(), 3);
        assert_eq!(f.provenance.len(), 5);
    }

    /// Brute-force oracle: IoU of the two inputs computed by pixel counting.
    fn pixel_iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
        let inside = |r: &BoundingBox, x: u32, y: u32| x >= r.x && x < r.x + r.w && y >= r.y && y < r.y + r.h;
        let (mut inter, mut union) = (0u64, 0u64);
        for y in 0..200 {
            for x in 0..200 {
                let (ia, ib) = (inside(a, x, y), inside(b, x, y));
                inter += u64::from(ia && ib);
                union += u64::from(ia || ib);
            }
        }
        inter as f64 / union as f64
    }

    #[test]
    fn near_duplicates_merge_to_higher_score() {
        let a = BoundingBox::new(10, 10, 100, 100);
        let b = BoundingBox::new(10, 10, 100, 95);
        let iou = pixel_iou(&a, &b);
        assert!((iou - 0.95).abs() < 1e-12);
        let f = aggregate_grounding(&[det(0, "Export", &[(a, 0.7)]), det(1, "Export", &[(b, 0.9)])]);
        assert_eq!(f.detections.len(), 1);
        assert_eq!(f.detections[0].bbox, b);
        assert_eq!(f.detections[0].score, 0.9);
        assert_eq!(f.provenance.len(), 1);
        assert_eq!(f.provenance[0].call.seq, 1);

        // Different queries never merge.
        let g = aggregate_grounding(&[det(0, "Export", &[(a, 0.7)]), det(1, "Orders", &[(b, 0.9)])]);
        assert_eq!(g.detections.len(), 2);
    }

    #[test]
    fn failed_calls_contribute_nothing() {
        let inv = ToolInvocation {
            seq: 0,
            call: ToolCall::Unsupported {
                name: "depth_estimation".into(),
                args: Value::Null,
            },
            outcome: Err(ToolError::Unsupported("depth_estimation".into())),
        };
        assert!(aggregate_grounding(&[inv]).is_empty());
    }

    #[test]
    fn tool_call_decoding() {
        use serde_json::json;
        assert_eq!(
            ToolCall::from_parts("visual_grounding", &json!({"query": "Load Data button", "image_id": 0})).unwrap(),
            ToolCall::VisualGrounding {
                query: "Load Data button".into()
            }
        );
        assert_eq!(
            ToolCall::from_parts("object_detection", &json!({"objects": ["button", "icon"]})).unwrap(),
            ToolCall::ObjectDetection {
                objects: vec!["button".into(), "icon".into()]
            }
        );
        assert!(matches!(
            ToolCall::from_parts("depth_estimation", &json!({})).unwrap(),
            ToolCall::Unsupported { .. }
        ));
        assert!(ToolCall::from_parts("zoom_tool", &json!({"region": [1, 2]})).is_err());
        assert!(ToolCall::from_parts("visual_grounding", &json!({})).is_err());
    }

    fn arb_box() -> impl Strategy<Value = BoundingBox> {
        (0u32..40, 0u32..40, 1u32..40, 1u32..40).prop_map(|(x, y, w, h)| BoundingBox::new(x, y, w, h))
    }

    proptest! {
        #[test]
        fn aggregation_never_fabricates(
            groups in proptest::collection::vec(
                (0usize..3, proptest::collection::vec((arb_box(), 0.0f64..1.0), 0..5)),
                0..5,
            )
        ) {
            let queries = ["a", "b", "c"];
            let invs: Vec<_> = groups
                .iter()
                .enumerate()
                .map(|(i, (q, boxes))| det(i, queries[*q], boxes))
                .collect();
            let f = aggregate_grounding(&invs);
            // one provenance record per entry
            prop_assert_eq!(f.provenance.len(), f.entry_count());
            // every output came from some input
            for d in &f.detections {
                prop_assert!(groups.iter().any(|(q, boxes)| queries[*q] == d.query
                    && boxes.iter().any(|(b, s)| *b == d.bbox && *s == d.score)));
            }
            // no surviving near-duplicates
            for (i, a) in f.detections.iter().enumerate() {
                for b in &f.detections[i + 1..] {
                    prop_assert!(!(a.query == b.query && a.bbox.iou(&b.bbox) > DETECTION_MERGE_IOU));
                }
            }
        }
    }
}
