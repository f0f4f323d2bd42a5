use serde::{Deserialize, Serialize};

use crate::geometry::BoundingBox;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WidgetKind {
    Button,
    Icon,
    Field,
    Menu,
    Tab,
    List,
    /// Image viewport showing a scan.
    Viewport,
}

impl WidgetKind {
    pub fn as_str(self) -> &'static str {
        match self {
            WidgetKind::Button => "button",
            WidgetKind::Icon => "icon",
            WidgetKind::Field => "field",
            WidgetKind::Menu => "menu",
            WidgetKind::Tab => "tab",
            WidgetKind::List => "list",
            WidgetKind::Viewport => "viewport",
        }
    }

    /// Matches the class name, its plural, or a few common synonyms.
    pub fn matches_class(self, query: &str) -> bool {
        let q = query.trim().to_ascii_lowercase();
        let q = q.strip_suffix('s').unwrap_or(&q);
        let name = self.as_str();
        q == name
            || match self {
                WidgetKind::Field => matches!(q, "text field" | "input" | "textbox" | "text box"),
                WidgetKind::Viewport => matches!(q, "image" | "scan" | "view"),
                _ => false,
            }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Widget {
    pub label: String,
    pub kind: WidgetKind,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    /// Template id of the widget's icon, when it has one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub icon: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreenText {
    pub content: String,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
}

/// Ground-truth description of a rendered screen. Stored next to each
/// synthetic screenshot as `<image stem>.screen.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticScreen {
    pub width: u32,
    pub height: u32,
    #[serde(default = "unit_magnification")]
    pub magnification: f64,
    pub widgets: Vec<Widget>,
    #[serde(default)]
    pub texts: Vec<ScreenText>,
}

fn unit_magnification() -> f64 {
    1.0
}

impl SyntheticScreen {
    pub fn blank(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            magnification: 1.0,
            widgets: Vec::new(),
            texts: Vec::new(),
        }
    }

    /// Check the structural invariants: every box inside the image, widget
    /// labels unique, magnification positive.
    pub fn check(&self) -> Result<(), String> {
        if self.width == 0 || self.height == 0 {
            return Err("screen has zero size".into());
        }
        if self.magnification.is_nan() || self.magnification <= 0.0 {
            return Err("magnification must be positive".into());
        }
        for (i, w) in self.widgets.iter().enumerate() {
            if !w.bbox.fits_within(self.width, self.height) {
                return Err(format!("widget `{}` lies outside the screen", w.label));
            }
            if self.widgets[..i].iter().any(|o| o.label == w.label) {
                return Err(format!("duplicate widget label `{}`", w.label));
            }
        }
        for t in &self.texts {
            if t.content.is_empty() {
                return Err("empty text entry".into());
            }
            if !t.bbox.fits_within(self.width, self.height) {
                return Err(format!("text `{}` lies outside the screen", t.content));
            }
        }
        Ok(())
    }

    pub fn widget(&self, label: &str) -> Option<&Widget> {
        self.widgets.iter().find(|w| w.label == label)
    }

    /// One-line description: size, magnification and visible widgets.
    pub fn summary(&self) -> String {
        let widgets: Vec<String> = self
            .widgets
            .iter()
            .map(|w| format!("{} ({})", w.label, w.kind.as_str()))
            .collect();
        format!(
            "{}x{} screen at {:.2}x zoom; widgets: {}",
            self.width,
            self.height,
            self.magnification,
            if widgets.is_empty() { "none".to_string() } else { widgets.join(", ") }
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn check_catches_out_of_bounds_and_duplicates() {
        let mut s = SyntheticScreen::blank(100, 100);
        s.widgets.push(Widget {
            label: "Save".into(),
            kind: WidgetKind::Button,
            bbox: BoundingBox::new(0, 0, 20, 10),
            icon: None,
        });
        assert!(s.check().is_ok());
        let mut dup = s.clone();
        dup.widgets.push(dup.widgets[0].clone());
        assert!(dup.check().unwrap_err().contains("duplicate"));
        let mut oob = s.clone();
        oob.widgets[0].bbox = BoundingBox::new(90, 0, 20, 10);
        assert!(oob.check().is_err());
    }

    #[test]
    fn class_matching() {
        assert!(WidgetKind::Button.matches_class("buttons"));
        assert!(WidgetKind::Field.matches_class("input"));
        assert!(!WidgetKind::Icon.matches_class("button"));
    }
}
