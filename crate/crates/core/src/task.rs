//! Tasks, steps, on-disk task bundles and trajectory validation.
//!
//! A bundle is a directory holding `task.json` and the PNG screenshots it
//! references by relative path. Synthetic bundles additionally carry a
//! `<image stem>.screen.json` annotation next to each screenshot.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::{parse_action, Action, ActionKind};
use crate::grounding::{ScreenView, SyntheticScreen};

pub const MANIFEST_FILE: &str = "task.json";

/// Default accepted trajectory length range.
pub const DEFAULT_BOUNDS: LengthBounds = LengthBounds { min: 8, max: 24 };

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LengthBounds {
    pub min: usize,
    pub max: usize,
}

impl LengthBounds {
    pub fn new(min: usize, max: usize) -> Self {
        Self { min, max }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    Weasis,
    #[serde(rename = "3D Slicer")]
    Slicer3D,
    Orthanc,
    OpenEMR,
    OpenHospital,
    #[serde(rename = "synthetic")]
    Synthetic,
}

impl Category {
    pub fn as_str(self) -> &'static str {
        match self {
            Category::Weasis => "Weasis",
            Category::Slicer3D => "3D Slicer",
            Category::Orthanc => "Orthanc",
            Category::OpenEMR => "OpenEMR",
            Category::OpenHospital => "OpenHospital",
            Category::Synthetic => "synthetic",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
    Ood,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    /// 1-based position in the trajectory.
    pub index: usize,
    /// Screenshot path relative to the bundle directory.
    pub image: String,
    pub label: Action,
    pub raw_label: String,
    pub screen: Option<SyntheticScreen>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub id: String,
    pub goal: String,
    pub category: Category,
    pub split: Split,
    pub steps: Vec<Step>,
    /// Bundle directory screenshots are resolved against.
    pub root: PathBuf,
}

impl Task {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn image_path(&self, step: &Step) -> PathBuf {
        self.root.join(&step.image)
    }

    /// Image reference relative to the suite root (`<task id>/<image>`).
    pub fn image_ref(&self, step: &Step) -> String {
        format!("{}/{}", self.id, step.image)
    }

    pub fn labels(&self) -> impl Iterator<Item = &Action> {
        self.steps.iter().map(|s| &s.label)
    }
}

impl Step {
    /// The step's screen as seen by tools; `path` is the resolved screenshot.
    pub fn view<'a>(&'a self, path: &'a Path) -> ScreenView<'a> {
        ScreenView {
            image_path: Some(path),
            synthetic: self.screen.as_ref(),
        }
    }
}

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("missing manifest {0}")]
    MissingManifest(PathBuf),
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid manifest {path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("step {step}: unresolvable image {path}")]
    UnresolvableImage { step: usize, path: PathBuf },
    #[error("step {step}: invalid screen annotation: {reason}")]
    BadAnnotation { step: usize, reason: String },
    #[error("index gap: expected step {expected}, found {found}")]
    IndexGap { expected: usize, found: usize },
    #[error("duplicate step index {0}")]
    DuplicateIndex(usize),
    #[error("task has no steps")]
    Empty,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestStep {
    t: usize,
    image: String,
    action: Action,
    raw: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    id: String,
    goal: String,
    category: Category,
    split: Split,
    steps: Vec<ManifestStep>,
}

fn annotation_path(image: &Path) -> PathBuf {
    let stem = image.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    image.with_file_name(format!("{stem}.screen.json"))
}

fn is_readable_image(path: &Path) -> bool {
    image::image_dimensions(path).is_ok()
}

/// Load and resolve one task bundle.
pub fn load_task_bundle(dir: &Path) -> Result<Task, TaskError> {
    let manifest_path = dir.join(MANIFEST_FILE);
    if !manifest_path.is_file() {
        return Err(TaskError::MissingManifest(manifest_path));
    }
    let text = fs::read_to_string(&manifest_path).map_err(|source| TaskError::Io {
        path: manifest_path.clone(),
        source,
    })?;
    let mut manifest: Manifest = serde_json::from_str(&text).map_err(|source| TaskError::Json {
        path: manifest_path.clone(),
        source,
    })?;
    if manifest.steps.is_empty() {
        return Err(TaskError::Empty);
    }
    manifest.steps.sort_by_key(|s| s.t);
    for (i, s) in manifest.steps.iter().enumerate() {
        let expected = i + 1;
        if s.t != expected {
            if i > 0 && manifest.steps[i - 1].t == s.t {
                return Err(TaskError::DuplicateIndex(s.t));
            }
            return Err(TaskError::IndexGap { expected, found: s.t });
        }
    }
    let mut steps = Vec::with_capacity(manifest.steps.len());
    for s in manifest.steps {
        let path = dir.join(&s.image);
        if !is_readable_image(&path) {
            return Err(TaskError::UnresolvableImage { step: s.t, path });
        }
        let ann = annotation_path(&path);
        let screen = if ann.is_file() {
            let text = fs::read_to_string(&ann).map_err(|source| TaskError::Io {
                path: ann.clone(),
                source,
            })?;
            let screen: SyntheticScreen = serde_json::from_str(&text).map_err(|e| TaskError::BadAnnotation {
                step: s.t,
                reason: e.to_string(),
            })?;
            screen
                .check()
                .map_err(|reason| TaskError::BadAnnotation { step: s.t, reason })?;
            Some(screen)
        } else {
            None
        };
        steps.push(Step {
            index: s.t,
            image: s.image,
            label: s.action,
            raw_label: s.raw,
            screen,
        });
    }
    Ok(Task {
        id: manifest.id,
        goal: manifest.goal,
        category: manifest.category,
        split: manifest.split,
        steps,
        root: dir.to_path_buf(),
    })
}

/// Serialize the bundle manifest (newline-terminated, pretty JSON).
pub fn manifest_json(task: &Task) -> String {
    let manifest = Manifest {
        id: task.id.clone(),
        goal: task.goal.clone(),
        category: task.category,
        split: task.split,
        steps: task
            .steps
            .iter()
            .map(|s| ManifestStep {
                t: s.index,
                image: s.image.clone(),
                action: s.label.clone(),
                raw: s.raw_label.clone(),
            })
            .collect(),
    };
    let mut out = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    out.push('\n');
    out
}

/// One entry of a suite directory: the bundle name and its load outcome.
#[derive(Debug)]
pub struct SuiteEntry {
    pub name: String,
    pub task: Result<Task, TaskError>,
}

/// Load every bundle in `dir`, sorted by directory name. A directory that
/// is itself a bundle is treated as a one-task suite.
pub fn load_suite(dir: &Path) -> Result<Vec<SuiteEntry>, TaskError> {
    if dir.join(MANIFEST_FILE).is_file() {
        let name = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        return Ok(vec![SuiteEntry {
            name,
            task: load_task_bundle(dir),
        }]);
    }
    let read = fs::read_dir(dir).map_err(|source| TaskError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut dirs: Vec<PathBuf> = read
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    Ok(dirs
        .into_iter()
        .map(|p| SuiteEntry {
            name: p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
            task: load_task_bundle(&p),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub task_id: String,
    pub passed: bool,
    pub violations: Vec<Violation>,
}

/// Check chronological and completeness rules. Violations are data: this
/// never fails.
pub fn validate_trajectory(task: &Task, bounds: LengthBounds) -> ValidationReport {
    let mut violations = Vec::new();
    let mut push = |code: &str, message: String, step: Option<usize>| {
        violations.push(Violation {
            code: code.to_string(),
            message,
            step,
        })
    };

    for (i, s) in task.steps.iter().enumerate() {
        if s.index != i + 1 {
            push(
                "index-not-monotone",
                format!("position {} holds step index {}", i + 1, s.index),
                Some(s.index),
            );
        }
    }

    let len = task.steps.len();
    if len < bounds.min {
        push("length-below-min", format!("{len} steps, minimum is {}", bounds.min), None);
    }
    if len > bounds.max {
        push("length-above-max", format!("{len} steps, maximum is {}", bounds.max), None);
    }

    for (i, s) in task.steps.iter().enumerate() {
        let last = i + 1 == len;
        if s.label.kind() == ActionKind::Complete && !last {
            push(
                "premature-complete",
                format!("COMPLETE at step {} of {len}", s.index),
                Some(s.index),
            );
        }
        if last && s.label.kind() != ActionKind::Complete {
            push(
                "missing-complete",
                format!("last step is {}, not COMPLETE", s.label.kind()),
                Some(s.index),
            );
        }
        match parse_action(&s.raw_label) {
            Err(e) => push("label-unparseable", format!("raw label `{}`: {e}", s.raw_label), Some(s.index)),
            Ok(a) if a != s.label => push(
                "label-mismatch",
                format!("raw label `{}` differs from action {}", s.raw_label, s.label),
                Some(s.index),
            ),
            Ok(_) => {}
        }
    }

    ValidationReport {
        task_id: task.id.clone(),
        passed: violations.is_empty(),
        violations,
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn task_with_labels(labels: &[Action]) -> Task {
        Task {
            id: "t".into(),
            goal: "goal".into(),
            category: Category::Synthetic,
            split: Split::Test,
            steps: labels
                .iter()
                .enumerate()
                .map(|(i, a)| Step {
                    index: i + 1,
                    image: format!("step_{:02}.png", i + 1),
                    label: a.clone(),
                    raw_label: a.render(),
                    screen: None,
                })
                .collect(),
            root: PathBuf::new(),
        }
    }

    fn labels(n: usize, complete_at: usize) -> Vec<Action> {
        (1..=n)
            .map(|i| {
                if i == complete_at {
                    Action::complete()
                } else {
                    Action::click(format!("button {i}"))
                }
            })
            .collect()
    }

    fn codes(r: &ValidationReport) -> Vec<&str> {
        r.violations.iter().map(|v| v.code.as_str()).collect()
    }

    #[test]
    fn well_formed_passes() {
        let r = validate_trajectory(&task_with_labels(&labels(12, 12)), DEFAULT_BOUNDS);
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn too_short() {
        let r = validate_trajectory(&task_with_labels(&labels(7, 7)), DEFAULT_BOUNDS);
        assert_eq!(codes(&r), ["length-below-min"]);
        assert!(!r.passed);
    }

    #[test]
    fn premature_complete() {
        let mut l = labels(12, 12);
        l[4] = Action::complete();
        let r = validate_trajectory(&task_with_labels(&l), DEFAULT_BOUNDS);
        assert_eq!(codes(&r), ["premature-complete"]);
        assert_eq!(r.violations[0].step, Some(5));
    }

    #[test]
    fn missing_complete_and_bad_raw() {
        let mut t = task_with_labels(&labels(9, 0));
        t.steps[2].raw_label = "FLY(target=x)".into();
        let r = validate_trajectory(&t, DEFAULT_BOUNDS);
        assert_eq!(codes(&r), ["label-unparseable", "missing-complete"]);
    }
}
