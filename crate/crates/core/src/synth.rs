//! Seeded synthetic task suites: rendered screens, ground-truth annotations
//! and label sequences that are realizable against those screens.

use std::fs;
use std::io;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::{Action, ActionKind};
use crate::digest::derive_seed;
use crate::geometry::BoundingBox;
use crate::grounding::{render_screen, ScreenText, SyntheticScreen, Widget, WidgetKind};
use crate::task::{manifest_json, Category, Split, Step, Task};

/// Icon template ids used on synthetic screens.
pub const ICON_NAMES: [&str; 8] = ["save", "measure", "send-to-pacs", "export", "search", "settings", "load", "print"];

const SCREEN_W: u32 = 320;
const SCREEN_H: u32 = 200;

const BUTTONS: [(&str, Option<&str>); 16] = [
    ("Load Data", Some("load")),
    ("Save", Some("save")),
    ("Export", Some("export")),
    ("Open Study", None),
    ("Send to PACS", Some("send-to-pacs")),
    ("Measure", Some("measure")),
    ("Segment Editor", None),
    ("Apply", None),
    ("Next", None),
    ("Search", Some("search")),
    ("Settings", Some("settings")),
    ("Add Patient", None),
    ("New Order", None),
    ("Print", Some("print")),
    ("Import DICOM", None),
    ("Window Level", None),
];
const TABS: [&str; 6] = ["Orders", "Results", "Demographics", "Series", "History", "Markups"];
const FIELDS: [&str; 5] = ["Patient ID", "Study Date", "Filter", "Order Code", "Patient Name"];
const LISTS: [&str; 3] = ["Series list", "Worklist", "Results list"];
const VIEWPORTS: [&str; 4] = ["Axial view", "Sagittal view", "Coronal view", "3D view"];
const GOALS: [&str; 6] = [
    "Load the latest study and annotate the lesion",
    "Register the patient and place a laboratory order",
    "Review the series and export the measurements",
    "Find the patient record and update the study date",
    "Segment the region of interest and save the result",
    "Search the worklist and send the study to PACS",
];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SynthError {
    #[error("invalid length range [{min}, {max}]: need 2 <= min <= max")]
    InvalidRange { min: usize, max: usize },
    #[error("count must be at least 1")]
    EmptySuite,
    #[error("target mean {0} lies outside the length range")]
    InvalidMean(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub count: usize,
    pub min_len: usize,
    pub max_len: usize,
    /// When set, lengths follow `min + Binomial(max - min, p)` with `p`
    /// chosen to hit this mean; otherwise lengths are uniform.
    #[serde(default)]
    pub target_mean: Option<f64>,
    pub split: Split,
}

impl SynthConfig {
    pub fn new(seed: u64, count: usize, min_len: usize, max_len: usize) -> Self {
        Self {
            seed,
            count,
            min_len,
            max_len,
            target_mean: None,
            split: Split::Test,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteStats {
    pub tasks: usize,
    pub mean_len: f64,
    pub min_len: usize,
    pub max_len: usize,
}

pub fn suite_stats(tasks: &[Task]) -> SuiteStats {
    let lens: Vec<usize> = tasks.iter().map(Task::len).collect();
    SuiteStats {
        tasks: tasks.len(),
        mean_len: if lens.is_empty() { 0.0 } else { lens.iter().sum::<usize>() as f64 / lens.len() as f64 },
        min_len: lens.iter().copied().min().unwrap_or(0),
        max_len: lens.iter().copied().max().unwrap_or(0),
    }
}

/// Generate `count` tasks. Every task is drawn from its own RNG stream
/// derived from `(seed, task index)`, so the suite is identical across runs
/// and prefix-stable in `count`.
pub fn generate_synthetic_suite(cfg: &SynthConfig) -> Result<Vec<Task>, SynthError> {
    if cfg.count == 0 {
        return Err(SynthError::EmptySuite);
    }
    if cfg.min_len < 2 || cfg.min_len > cfg.max_len {
        return Err(SynthError::InvalidRange {
            min: cfg.min_len,
            max: cfg.max_len,
        });
    }
    if let Some(m) = cfg.target_mean {
        if !(m >= cfg.min_len as f64 && m <= cfg.max_len as f64) {
            return Err(SynthError::InvalidMean(m.to_string()));
        }
    }
    Ok((0..cfg.count).map(|i| generate_task(cfg, i)).collect())
}

fn sample_len(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> usize {
    let span = cfg.max_len - cfg.min_len;
    match cfg.target_mean {
        None => rng.random_range(cfg.min_len..=cfg.max_len),
        Some(_) if span == 0 => cfg.min_len,
        Some(mean) => {
            let p = (mean - cfg.min_len as f64) / span as f64;
            cfg.min_len + (0..span).filter(|_| rng.random_bool(p)).count()
        }
    }
}

fn generate_task(cfg: &SynthConfig, index: usize) -> Task {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &["synthetic-task", &index.to_string()]));
    let len = sample_len(cfg, &mut rng);
    let id = format!("syn-{}-{:04}", cfg.seed, index);
    let goal = format!("{} (workflow {index})", GOALS.choose(&mut rng).expect("non-empty"));

    let non_final = [ActionKind::Click, ActionKind::Scroll, ActionKind::Zoom, ActionKind::Text, ActionKind::Segment];
    let mut magnification = 1.0;
    let mut steps = Vec::with_capacity(len);
    for t in 1..=len {
        let screen = generate_screen(&mut rng, magnification);
        let label = if t == len {
            Action::complete()
        } else {
            let kind = *non_final.choose(&mut rng).expect("non-empty");
            label_for(kind, &screen, &mut rng)
        };
        if label.kind() == ActionKind::Zoom {
            magnification *= 1.5;
        }
        steps.push(Step {
            index: t,
            image: format!("step_{t:02}.png"),
            raw_label: label.render(),
            label,
            screen: Some(screen),
        });
    }
    Task {
        id,
        goal,
        category: Category::Synthetic,
        split: cfg.split,
        steps,
        root: Default::default(),
    }
}

fn widget_of(screen: &SyntheticScreen, kind: WidgetKind) -> Vec<&Widget> {
    screen.widgets.iter().filter(|w| w.kind == kind).collect()
}

fn label_for(kind: ActionKind, screen: &SyntheticScreen, rng: &mut ChaCha8Rng) -> Action {
    let pick = |kinds: &[WidgetKind], rng: &mut ChaCha8Rng| -> String {
        let candidates: Vec<&Widget> = kinds.iter().flat_map(|k| widget_of(screen, *k)).collect();
        candidates.choose(rng).expect("screen has the widget class").label.clone()
    };
    let b = Action::builder(kind);
    let built = match kind {
        ActionKind::Click => b.target(pick(&[WidgetKind::Button, WidgetKind::Tab], rng)),
        ActionKind::Text => {
            let value = format!("{}-{:04}", ["MRN", "ORD", "LAB", "ACC"].choose(rng).expect("non-empty"), rng.random_range(0..10_000));
            b.target(pick(&[WidgetKind::Field], rng)).text(value)
        }
        ActionKind::Scroll => {
            let mut n = rng.random_range(1..=5i64);
            if rng.random_bool(0.5) {
                n = -n;
            }
            b.target(pick(&[WidgetKind::List], rng)).scroll_units(n)
        }
        ActionKind::Zoom => b.target(pick(&[WidgetKind::Viewport], rng)),
        ActionKind::Segment => {
            let vp = widget_of(screen, WidgetKind::Viewport)[0];
            let w = rng.random_range(10..=vp.bbox.w / 2);
            let h = rng.random_range(10..=vp.bbox.h / 2);
            let x = vp.bbox.x + rng.random_range(0..=vp.bbox.w - w);
            let y = vp.bbox.y + rng.random_range(0..=vp.bbox.h - h);
            b.target(vp.label.clone()).region(BoundingBox::new(x, y, w, h))
        }
        ActionKind::Complete => b,
    };
    built.build().expect("generator emits valid labels")
}

fn text_on(label: &str, b: &BoundingBox) -> ScreenText {
    let w = (label.chars().count() as u32 * 5).clamp(1, b.w.saturating_sub(4).max(1));
    ScreenText {
        content: label.to_string(),
        bbox: BoundingBox::new(b.x + 2, b.y + 2, w, 8.min(b.h.saturating_sub(2)).max(1)),
    }
}

fn generate_screen(rng: &mut ChaCha8Rng, magnification: f64) -> SyntheticScreen {
    let mut widgets = Vec::new();

    let mut buttons = BUTTONS.to_vec();
    buttons.shuffle(rng);
    let n_buttons = rng.random_range(3..=5);
    for (i, (label, icon)) in buttons.into_iter().take(n_buttons).enumerate() {
        widgets.push(Widget {
            label: label.to_string(),
            kind: WidgetKind::Button,
            bbox: BoundingBox::new(4 + i as u32 * 62, 4, 58, 18),
            icon: icon.map(str::to_string),
        });
    }
    let mut tabs = TABS.to_vec();
    tabs.shuffle(rng);
    for (i, label) in tabs.into_iter().take(rng.random_range(2..=4)).enumerate() {
        widgets.push(Widget {
            label: label.to_string(),
            kind: WidgetKind::Tab,
            bbox: BoundingBox::new(4 + i as u32 * 72, 26, 68, 16),
            icon: None,
        });
    }
    widgets.push(Widget {
        label: VIEWPORTS.choose(rng).expect("non-empty").to_string(),
        kind: WidgetKind::Viewport,
        bbox: BoundingBox::new(4, 48, 200, 146),
        icon: None,
    });
    widgets.push(Widget {
        label: FIELDS.choose(rng).expect("non-empty").to_string(),
        kind: WidgetKind::Field,
        bbox: BoundingBox::new(210, 48, 104, 16),
        icon: None,
    });
    widgets.push(Widget {
        label: LISTS.choose(rng).expect("non-empty").to_string(),
        kind: WidgetKind::List,
        bbox: BoundingBox::new(210, 70, 104, 84),
        icon: None,
    });

    let mut texts: Vec<ScreenText> = widgets.iter().map(|w| text_on(&w.label, &w.bbox)).collect();
    texts.push(ScreenText {
        content: format!("Patient P-{:04}", rng.random_range(0..10_000)),
        bbox: BoundingBox::new(210, 160, 100, 10),
    });
    texts.push(ScreenText {
        content: format!("Series {}", rng.random_range(1..=12)),
        bbox: BoundingBox::new(210, 176, 60, 10),
    });

    SyntheticScreen {
        width: SCREEN_W,
        height: SCREEN_H,
        magnification,
        widgets,
        texts,
    }
}

/// Write each task as a bundle under `out/<task id>/`: `task.json`, one PNG
/// per step and its `.screen.json` annotation. Returns the tasks with
/// `root` pointing at their bundle directory.
pub fn write_suite(tasks: &[Task], out: &Path) -> io::Result<Vec<Task>> {
    fs::create_dir_all(out)?;
    let mut written = Vec::with_capacity(tasks.len());
    for task in tasks {
        let dir = out.join(&task.id);
        fs::create_dir_all(&dir)?;
        for step in &task.steps {
            let screen = step
                .screen
                .as_ref()
                .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "step lacks a synthetic screen"))?;
            let png = dir.join(&step.image);
            render_screen(screen)
                .save_with_format(&png, image::ImageFormat::Png)
                .map_err(io::Error::other)?;
            let stem = Path::new(&step.image)
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            let mut ann = serde_json::to_string_pretty(screen).map_err(io::Error::other)?;
            ann.push('\n');
            fs::write(dir.join(format!("{stem}.screen.json")), ann)?;
        }
        fs::write(dir.join(crate::task::MANIFEST_FILE), manifest_json(task))?;
        let mut t = task.clone();
        t.root = dir;
        written.push(t);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::task::{load_suite, validate_trajectory, LengthBounds};

    #[test]
    fn exact_length_and_determinism() {
        let cfg = SynthConfig::new(7, 5, 10, 10);
        let a = generate_synthetic_suite(&cfg).unwrap();
        let b = generate_synthetic_suite(&cfg).unwrap();
        assert_eq!(a.len(), 5);
        assert!(a.iter().all(|t| t.len() == 10));
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_ranges() {
        assert!(generate_synthetic_suite(&SynthConfig::new(1, 1, 1, 4)).is_err());
        assert!(generate_synthetic_suite(&SynthConfig::new(1, 1, 5, 4)).is_err());
        assert_eq!(
            generate_synthetic_suite(&SynthConfig::new(1, 0, 5, 5)),
            Err(SynthError::EmptySuite)
        );
    }

    #[test]
    fn every_task_validates_and_labels_are_realizable() {
        let cfg = SynthConfig::new(11, 60, 2, 24);
        let tasks = generate_synthetic_suite(&cfg).unwrap();
        let mut kinds = std::collections::BTreeSet::new();
        for t in &tasks {
            let r = validate_trajectory(t, LengthBounds::new(2, 24));
            assert!(r.passed, "{r:?}");
            for s in &t.steps {
                let screen = s.screen.as_ref().unwrap();
                screen.check().unwrap();
                kinds.insert(s.label.kind());
                if let Some(target) = s.label.target() {
                    assert!(screen.widget(target).is_some(), "target {target} not on screen");
                }
                if let Some(r) = s.label.region() {
                    assert!(r.fits_within(screen.width, screen.height));
                }
            }
        }
        assert_eq!(kinds.len(), 6);
    }

    #[test]
    fn target_mean_statistics() {
        let mut cfg = SynthConfig::new(2024, 735, 7, 22);
        cfg.target_mean = Some(12.7);
        cfg.split = Split::Train;
        let stats = suite_stats(&generate_synthetic_suite(&cfg).unwrap());
        assert_eq!(stats.tasks, 735);
        assert!(stats.min_len >= 7 && stats.max_len <= 22);
        // binomial sd of a length is sqrt(15 * p * (1 - p)) ~ 1.88; the mean
        // of 735 draws has sd ~0.07
        assert!((stats.mean_len - 12.7).abs() < 0.3, "mean {}", stats.mean_len);
    }

    #[test]
    fn written_bundles_reload_identically() {
        let dir = tempfile::tempdir().unwrap();
        let tasks = generate_synthetic_suite(&SynthConfig::new(3, 3, 4, 6)).unwrap();
        let written = write_suite(&tasks, dir.path()).unwrap();
        let loaded = load_suite(dir.path()).unwrap();
        assert_eq!(loaded.len(), 3);
        for (entry, expected) in loaded.iter().zip(&written) {
            assert_eq!(entry.task.as_ref().unwrap(), expected);
        }
        let first = fs::read(dir.path().join(&tasks[0].id).join("step_01.png")).unwrap();
        let dir2 = tempfile::tempdir().unwrap();
        write_suite(&tasks, dir2.path()).unwrap();
        assert_eq!(first, fs::read(dir2.path().join(&tasks[0].id).join("step_01.png")).unwrap());
    }
}
