//! Deterministic in-process tool backend over [`SyntheticScreen`]s.

use std::collections::BTreeSet;

use image::{Rgba, RgbaImage};

use super::{
    CropInfo, GroundingBackend, OcrToken, QueryBoxes, ScoredBox, ScreenView, SyntheticScreen, TemplateMatch, ToolCall, ToolError,
    ToolOutput, WidgetKind, TEMPLATE_SCORE_FLOOR,
};
use crate::digest::sha256_hex;
use crate::geometry::BoundingBox;

fn normalize(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// Open-vocabulary detection by label: a widget matches when its label (or
/// "label kind", e.g. "Load Data button") contains the query. Score is 1.0
/// for an exact match and `|query| / |candidate|` for a substring match; a
/// query naming the widget class scores 1.0. Results are ordered by score,
/// then by widget order on the screen.
pub fn detect_objects(screen: &SyntheticScreen, query: &str) -> Result<Vec<ScoredBox>, ToolError> {
    let q = normalize(query);
    if q.is_empty() {
        return Err(ToolError::InvalidArgs("empty query".into()));
    }
    let qlen = q.chars().count() as f64;
    let mut hits: Vec<(usize, ScoredBox)> = Vec::new();
    for (i, w) in screen.widgets.iter().enumerate() {
        let label = normalize(&w.label);
        let with_kind = format!("{label} {}", w.kind.as_str());
        let mut score: f64 = 0.0;
        for cand in [&label, &with_kind] {
            if *cand == q {
                score = 1.0;
            } else if cand.contains(&q) {
                score = score.max(qlen / cand.chars().count() as f64);
            }
        }
        if w.kind.matches_class(&q) {
            score = 1.0;
        }
        if score > 0.0 {
            hits.push((i, ScoredBox { bbox: w.bbox, score }));
        }
    }
    hits.sort_by(|a, b| b.1.score.total_cmp(&a.1.score).then(a.0.cmp(&b.0)));
    Ok(hits.into_iter().map(|(_, b)| b).collect())
}

/// Crop `region` out of `image`, clamping it to the image bounds.
pub fn zoom_crop(image: &RgbaImage, region: BoundingBox) -> Result<(CropInfo, RgbaImage), ToolError> {
    if region.w == 0 || region.h == 0 {
        return Err(ToolError::ZeroArea);
    }
    let clamped = region
        .clamp_to(image.width(), image.height())
        .ok_or(ToolError::OutsideImage)?;
    let crop = image::imageops::crop_imm(image, clamped.x, clamped.y, clamped.w, clamped.h).to_image();
    let mut hashed = Vec::with_capacity(crop.as_raw().len() + 8);
    hashed.extend_from_slice(&crop.width().to_le_bytes());
    hashed.extend_from_slice(&crop.height().to_le_bytes());
    hashed.extend_from_slice(crop.as_raw());
    let info = CropInfo {
        region: clamped,
        width: crop.width(),
        height: crop.height(),
        image_ref: format!("sha256:{}", sha256_hex(&hashed)),
    };
    Ok((info, crop))
}

/// Mock OCR: the screen's texts verbatim with confidence 1.0.
pub fn run_ocr(screen: &SyntheticScreen) -> Vec<OcrToken> {
    screen
        .texts
        .iter()
        .map(|t| OcrToken {
            word: t.content.clone(),
            bbox: t.bbox,
            confidence: 1.0,
        })
        .collect()
}

/// Registered template ids. An id is an icon name, optionally with a scale
/// suffix: `save`, `save@2x`, `measure@0.5x`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateRegistry {
    icons: BTreeSet<String>,
    floor_millis: u32,
}

impl Default for TemplateRegistry {
    fn default() -> Self {
        Self::new(crate::synth::ICON_NAMES.iter().copied())
    }
}

impl TemplateRegistry {
    pub fn new<'a>(icons: impl IntoIterator<Item = &'a str>) -> Self {
        Self {
            icons: icons.into_iter().map(str::to_string).collect(),
            floor_millis: (TEMPLATE_SCORE_FLOOR * 1000.0) as u32,
        }
    }

    pub fn floor(&self) -> f64 {
        f64::from(self.floor_millis) / 1000.0
    }

    /// Split a template id into (icon name, scale).
    pub fn resolve(&self, id: &str) -> Result<(String, f64), ToolError> {
        let unknown = || ToolError::UnknownTemplate(id.to_string());
        let (name, scale) = match id.split_once('@') {
            Some((name, suffix)) => {
                let scale: f64 = suffix.strip_suffix('x').ok_or_else(unknown)?.parse().map_err(|_| unknown())?;
                if scale.is_nan() || scale <= 0.0 {
                    return Err(unknown());
                }
                (name, scale)
            }
            None => (id, 1.0),
        };
        if self.icons.contains(name) {
            Ok((name.to_string(), scale))
        } else {
            Err(unknown())
        }
    }
}

/// Match a registered template against the screen's widget icons. A scale
/// mismatch costs 0.1 per octave: score = 1 - 0.1 * |log2(scale / magnification)|.
pub fn match_template(screen: &SyntheticScreen, registry: &TemplateRegistry, template: &str) -> Result<Vec<TemplateMatch>, ToolError> {
    let (icon, scale) = registry.resolve(template)?;
    let penalty = 0.1 * (scale / screen.magnification).log2().abs();
    let score = (1.0 - penalty).clamp(0.0, 1.0);
    if score < registry.floor() {
        return Ok(Vec::new());
    }
    Ok(screen
        .widgets
        .iter()
        .filter(|w| w.icon.as_deref() == Some(icon.as_str()))
        .map(|w| TemplateMatch {
            template: template.to_string(),
            bbox: w.bbox,
            score,
        })
        .collect())
}

fn kind_colour(kind: WidgetKind) -> Rgba<u8> {
    match kind {
        WidgetKind::Button => Rgba([70, 110, 200, 255]),
        WidgetKind::Icon => Rgba([200, 140, 40, 255]),
        WidgetKind::Field => Rgba([255, 255, 255, 255]),
        WidgetKind::Menu => Rgba([120, 120, 120, 255]),
        WidgetKind::Tab => Rgba([90, 170, 120, 255]),
        WidgetKind::List => Rgba([210, 210, 230, 255]),
        WidgetKind::Viewport => Rgba([15, 15, 15, 255]),
    }
}

/// Rasterize a synthetic screen: flat background, one filled rectangle with
/// a dark border per widget, and a thin bar under each text entry.
pub fn render_screen(screen: &SyntheticScreen) -> RgbaImage {
    let mut img = RgbaImage::from_pixel(screen.width, screen.height, Rgba([236, 236, 236, 255]));
    let fill = |img: &mut RgbaImage, b: &BoundingBox, c: Rgba<u8>| {
        if let Some(b) = b.clamp_to(img.width(), img.height()) {
            for y in b.y..b.y + b.h {
                for x in b.x..b.x + b.w {
                    img.put_pixel(x, y, c);
                }
            }
        }
    };
    for w in &screen.widgets {
        fill(&mut img, &w.bbox, Rgba([30, 30, 30, 255]));
        if w.bbox.w > 2 && w.bbox.h > 2 {
            let inner = BoundingBox::new(w.bbox.x + 1, w.bbox.y + 1, w.bbox.w - 2, w.bbox.h - 2);
            fill(&mut img, &inner, kind_colour(w.kind));
        }
    }
    for t in &screen.texts {
        let bar = BoundingBox::new(t.bbox.x, t.bbox.y + t.bbox.h.saturating_sub(1), t.bbox.w, 1);
        fill(&mut img, &bar, Rgba([0, 0, 0, 255]));
    }
    img
}

/// The in-process backend used by tests and synthetic suites.
#[derive(Debug, Clone, Default)]
pub struct MockBackend {
    pub templates: TemplateRegistry,
}

impl MockBackend {
    pub fn new() -> Self {
        Self::default()
    }
}

impl GroundingBackend for MockBackend {
    fn identity(&self) -> String {
        "mock".to_string()
    }

    fn invoke(&self, call: &ToolCall, screen: &ScreenView<'_>) -> Result<ToolOutput, ToolError> {
        match call {
            ToolCall::Zoom { region } => {
                let image = match (screen.synthetic, screen.image_path) {
                    (Some(s), _) => render_screen(s),
                    (None, Some(path)) => image::open(path)
                        .map_err(|e| ToolError::Unavailable(format!("cannot read {}: {e}", path.display())))?
                        .to_rgba8(),
                    (None, None) => return Err(ToolError::NoAnnotation),
                };
                zoom_crop(&image, *region).map(|(info, _)| ToolOutput::Crop(info))
            }
            ToolCall::Unsupported { name, .. } => Err(ToolError::Unsupported(name.clone())),
            _ => {
                let s = screen.synthetic.ok_or(ToolError::NoAnnotation)?;
                match call {
                    ToolCall::ObjectDetection { objects } => objects
                        .iter()
                        .map(|q| detect_objects(s, q).map(|boxes| QueryBoxes { query: q.clone(), boxes }))
                        .collect::<Result<Vec<_>, _>>()
                        .map(ToolOutput::Detections),
                    ToolCall::VisualGrounding { query } => detect_objects(s, query).map(|boxes| {
                        ToolOutput::Detections(vec![QueryBoxes {
                            query: query.clone(),
                            boxes,
                        }])
                    }),
                    ToolCall::Ocr => Ok(ToolOutput::Tokens(run_ocr(s))),
                    ToolCall::TemplateMatch { template } => match_template(s, &self.templates, template).map(ToolOutput::Matches),
                    ToolCall::Zoom { .. } | ToolCall::Unsupported { .. } => unreachable!("handled above"),
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grounding::{ScreenText, Widget};
    use proptest::prelude::*;

    fn widget(label: &str, kind: WidgetKind, b: BoundingBox, icon: Option<&str>) -> Widget {
        Widget {
            label: label.into(),
            kind,
            bbox: b,
            icon: icon.map(str::to_string),
        }
    }

    fn screen() -> SyntheticScreen {
        let mut s = SyntheticScreen::blank(320, 200);
        s.widgets = vec![
            widget("Load Data", WidgetKind::Button, BoundingBox::new(10, 10, 60, 20), Some("load")),
            widget("Save", WidgetKind::Button, BoundingBox::new(80, 10, 40, 20), Some("save")),
            widget("Save As", WidgetKind::Button, BoundingBox::new(130, 10, 50, 20), None),
            widget("Axial", WidgetKind::Viewport, BoundingBox::new(10, 40, 200, 150), None),
        ];
        s.texts = vec![
            ScreenText {
                content: "Patient ID".into(),
                bbox: BoundingBox::new(220, 40, 60, 10),
            },
            ScreenText {
                content: "Orders".into(),
                bbox: BoundingBox::new(220, 60, 40, 10),
            },
        ];
        s
    }

    #[test]
    fn grounding_query_finds_exact_widget() {
        let s = screen();
        let hits = detect_objects(&s, "Load Data button").unwrap();
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].bbox, BoundingBox::new(10, 10, 60, 20));
        assert_eq!(hits[0].score, 1.0);
        assert!(detect_objects(&s, "Nonexistent").unwrap().is_empty());
        assert!(detect_objects(&s, "  ").is_err());
    }

    #[test]
    fn two_save_widgets_in_enumeration_order() {
        // Oracle: enumerate widgets whose label or "label kind" contains the
        // query, scoring exact = 1 and substring = |q| / |candidate|.
        let s = screen();
        let hits = detect_objects(&s, "save").unwrap();
        let expected: Vec<(BoundingBox, f64)> = vec![
            (s.widgets[1].bbox, 1.0),       // "save" exact
            (s.widgets[2].bbox, 4.0 / 7.0), // "save as"
        ];
        let got: Vec<(BoundingBox, f64)> = hits.iter().map(|h| (h.bbox, h.score)).collect();
        assert_eq!(got, expected);
        // class query returns every button in screen order
        let buttons = detect_objects(&s, "button").unwrap();
        assert_eq!(buttons.len(), 3);
        assert_eq!(buttons[0].bbox, s.widgets[0].bbox);
    }

    /// Reference copy: walk every pixel of the clamped region.
    fn reference_crop(img: &RgbaImage, r: BoundingBox) -> RgbaImage {
        let x1 = (r.x + r.w).min(img.width());
        let y1 = (r.y + r.h).min(img.height());
        let mut out = RgbaImage::new(x1 - r.x, y1 - r.y);
        for y in r.y..y1 {
            for x in r.x..x1 {
                out.put_pixel(x - r.x, y - r.y, *img.get_pixel(x, y));
            }
        }
        out
    }

    #[test]
    fn zoom_crop_geometry() {
        let img = RgbaImage::from_fn(64, 64, |x, y| Rgba([x as u8, y as u8, (x ^ y) as u8, 255]));
        let (full, copy) = zoom_crop(&img, BoundingBox::new(0, 0, 64, 64)).unwrap();
        assert_eq!(copy, img);
        assert_eq!(full.region, BoundingBox::new(0, 0, 64, 64));

        let (q, crop) = zoom_crop(&img, BoundingBox::new(0, 0, 32, 32)).unwrap();
        assert_eq!((q.width, q.height), (32, 32));
        assert_eq!(crop, reference_crop(&img, BoundingBox::new(0, 0, 32, 32)));

        let (half, crop) = zoom_crop(&img, BoundingBox::new(48, 40, 32, 32)).unwrap();
        assert_eq!(half.region, BoundingBox::new(48, 40, 16, 24));
        assert_eq!(crop, reference_crop(&img, BoundingBox::new(48, 40, 32, 32)));

        assert_eq!(zoom_crop(&img, BoundingBox::new(0, 0, 0, 5)).unwrap_err(), ToolError::ZeroArea);
        assert_eq!(zoom_crop(&img, BoundingBox::new(70, 0, 5, 5)).unwrap_err(), ToolError::OutsideImage);
    }

    #[test]
    fn zoom_is_idempotent_on_full_region() {
        let img = render_screen(&screen());
        let (_, a) = zoom_crop(&img, BoundingBox::new(5, 5, 100, 80)).unwrap();
        let (_, b) = zoom_crop(&a, BoundingBox::new(0, 0, a.width(), a.height())).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ocr_passthrough() {
        let toks = run_ocr(&screen());
        let words: Vec<&str> = toks.iter().map(|t| t.word.as_str()).collect();
        assert_eq!(words, ["Patient ID", "Orders"]);
        assert!(toks.iter().all(|t| t.confidence == 1.0));
        assert!(run_ocr(&SyntheticScreen::blank(10, 10)).is_empty());
    }

    #[test]
    fn template_matching() {
        let s = screen();
        let reg = TemplateRegistry::default();
        let m = match_template(&s, &reg, "save").unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].score, 1.0);
        assert_eq!(m[0].bbox, s.widgets[1].bbox);
        let scaled = match_template(&s, &reg, "save@2x").unwrap();
        assert_eq!(scaled.len(), 1);
        assert!(scaled[0].score >= reg.floor());
        assert!((scaled[0].score - 0.9).abs() < 1e-12);
        assert!(match_template(&s, &reg, "measure").unwrap().is_empty());
        assert!(matches!(match_template(&s, &reg, "rocket"), Err(ToolError::UnknownTemplate(_))));
        assert!(matches!(match_template(&s, &reg, "save@bigx"), Err(ToolError::UnknownTemplate(_))));
    }

    #[test]
    fn backend_is_pure() {
        let s = screen();
        let b = MockBackend::new();
        let view = ScreenView::synthetic(&s);
        for call in [
            ToolCall::Ocr,
            ToolCall::VisualGrounding { query: "Save".into() },
            ToolCall::Zoom {
                region: BoundingBox::new(0, 0, 50, 50),
            },
            ToolCall::TemplateMatch { template: "load".into() },
        ] {
            assert_eq!(b.invoke(&call, &view), b.invoke(&call, &view));
        }
    }

    proptest! {
        #[test]
        fn ocr_tokens_stay_in_bounds(
            w in 20u32..400, h in 20u32..300,
            boxes in proptest::collection::vec((0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0), 0..10)
        ) {
            let mut s = SyntheticScreen::blank(w, h);
            for (i, (fx, fy, fw, fh)) in boxes.into_iter().enumerate() {
                let x = (fx * (w - 1) as f64) as u32;
                let y = (fy * (h - 1) as f64) as u32;
                let bw = 1 + (fw * (w - x - 1) as f64) as u32;
                let bh = 1 + (fh * (h - y - 1) as f64) as u32;
                s.texts.push(ScreenText { content: format!("t{i}"), bbox: BoundingBox::new(x, y, bw, bh) });
            }
            prop_assert!(s.check().is_ok());
            for t in run_ocr(&s) {
                prop_assert!(t.bbox.fits_within(w, h));
            }
        }
    }
}
