//! Step-wise and task accuracy, length buckets, and report files.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::action::{Action, Prediction};

pub const METRICS_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMode {
    KindOnly,
    CanonicalFull,
}

impl MatchMode {
    pub const ALL: [MatchMode; 2] = [MatchMode::KindOnly, MatchMode::CanonicalFull];

    pub fn as_str(self) -> &'static str {
        match self {
            MatchMode::KindOnly => "kind_only",
            MatchMode::CanonicalFull => "canonical_full",
        }
    }
}

impl fmt::Display for MatchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for MatchMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MatchMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown match mode `{s}` (expected kind_only or canonical_full)"))
    }
}

fn collapse_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Targets compare case-folded with whitespace runs collapsed.
pub fn normalize_target(s: &str) -> String {
    collapse_ws(&s.to_lowercase())
}

/// Typed text keeps its case; only whitespace runs collapse.
pub fn normalize_text(s: &str) -> String {
    collapse_ws(s)
}

/// Whether `predicted` matches `label`. `CanonicalFull` compares the kind,
/// the normalized target, scroll units and the normalized typed text;
/// pointer coordinates and regions are not compared. A kind-only
/// prediction matches in full mode only when the label carries none of the
/// compared arguments.
pub fn step_correct(predicted: &Prediction, label: &Action, mode: MatchMode) -> bool {
    if predicted.kind() != label.kind() {
        return false;
    }
    if mode == MatchMode::KindOnly {
        return true;
    }
    let key = |a: &Action| {
        (
            a.target().map(normalize_target),
            a.scroll_units(),
            a.text().map(normalize_text),
        )
    };
    match predicted.action() {
        Some(a) => key(a) == key(label),
        None => key(label) == (None, None, None),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LengthBucket {
    #[serde(rename = "<10")]
    UpTo9,
    #[serde(rename = "10-15")]
    From10To15,
    #[serde(rename = "16-20")]
    From16To20,
    #[serde(rename = ">20")]
    Over20,
}

impl LengthBucket {
    pub const ALL: [LengthBucket; 4] = [
        LengthBucket::UpTo9,
        LengthBucket::From10To15,
        LengthBucket::From16To20,
        LengthBucket::Over20,
    ];

    /// Upper edges are inclusive: 9, 15 and 20 fall in the lower bucket.
    pub fn of(len: usize) -> Self {
        match len {
            0..=9 => LengthBucket::UpTo9,
            10..=15 => LengthBucket::From10To15,
            16..=20 => LengthBucket::From16To20,
            _ => LengthBucket::Over20,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            LengthBucket::UpTo9 => "<10",
            LengthBucket::From10To15 => "10-15",
            LengthBucket::From16To20 => "16-20",
            LengthBucket::Over20 => ">20",
        }
    }
}

/// Per-step correctness of one task. `steps` covers every step of the
/// task; steps never reached count as incorrect.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskOutcome {
    pub task_id: String,
    pub category: String,
    pub steps: Vec<bool>,
}

impl TaskOutcome {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// The task-success bit: every step correct, in order.
    pub fn verified(&self) -> bool {
        !self.steps.is_empty() && self.steps.iter().all(|c| *c)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ScopeMetrics {
    pub swa: f64,
    pub ta: f64,
    pub steps_total: u64,
    pub steps_correct: u64,
    pub tasks_total: u64,
    pub tasks_correct: u64,
}

fn percent(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        100.0 * num as f64 / den as f64
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct Counts {
    steps_total: u64,
    steps_correct: u64,
    tasks_total: u64,
    tasks_correct: u64,
}

impl Counts {
    fn add(&mut self, t: &TaskOutcome) {
        self.steps_total += t.steps.len() as u64;
        self.steps_correct += t.steps.iter().filter(|c| **c).count() as u64;
        self.tasks_total += 1;
        self.tasks_correct += u64::from(t.verified());
    }

    fn metrics(self) -> ScopeMetrics {
        ScopeMetrics {
            swa: percent(self.steps_correct, self.steps_total),
            ta: percent(self.tasks_correct, self.tasks_total),
            steps_total: self.steps_total,
            steps_correct: self.steps_correct,
            tasks_total: self.tasks_total,
            tasks_correct: self.tasks_correct,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedScope {
    pub scope: String,
    #[serde(flatten)]
    pub metrics: ScopeMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub format_version: u32,
    pub match_mode: MatchMode,
    pub config_hash: String,
    #[serde(flatten)]
    pub overall: ScopeMetrics,
    /// Sorted by category name.
    pub per_category: Vec<NamedScope>,
    /// Always the four buckets, shortest first.
    pub per_length_bucket: Vec<NamedScope>,
}

/// Streaming SWA/TA: tasks are folded in one at a time and the result does
/// not depend on their order.
#[derive(Debug, Clone, Default)]
pub struct MetricsAccumulator {
    overall: Counts,
    categories: BTreeMap<String, Counts>,
    buckets: BTreeMap<LengthBucket, Counts>,
}

impl MetricsAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, task: &TaskOutcome) {
        self.overall.add(task);
        self.categories.entry(task.category.clone()).or_default().add(task);
        self.buckets.entry(LengthBucket::of(task.len())).or_default().add(task);
    }

    pub fn finish(&self, match_mode: MatchMode, config_hash: &str) -> MetricsReport {
        MetricsReport {
            format_version: METRICS_FORMAT_VERSION,
            match_mode,
            config_hash: config_hash.to_string(),
            overall: self.overall.metrics(),
            per_category: self
                .categories
                .iter()
                .map(|(name, c)| NamedScope {
                    scope: name.clone(),
                    metrics: c.metrics(),
                })
                .collect(),
            per_length_bucket: LengthBucket::ALL
                .into_iter()
                .map(|b| NamedScope {
                    scope: b.label().to_string(),
                    metrics: self.buckets.get(&b).copied().unwrap_or_default().metrics(),
                })
                .collect(),
        }
    }
}

pub fn compute_report<'a>(outcomes: impl IntoIterator<Item = &'a TaskOutcome>, match_mode: MatchMode, config_hash: &str) -> MetricsReport {
    let mut acc = MetricsAccumulator::new();
    for o in outcomes {
        acc.add(o);
    }
    acc.finish(match_mode, config_hash)
}

/// One metrics file holds the report under both match modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsFile {
    pub format_version: u32,
    pub kind_only: MetricsReport,
    pub canonical_full: MetricsReport,
}

impl MetricsFile {
    pub fn get(&self, mode: MatchMode) -> &MetricsReport {
        match mode {
            MatchMode::KindOnly => &self.kind_only,
            MatchMode::CanonicalFull => &self.canonical_full,
        }
    }
}

pub fn report_csv(report: &MetricsReport) -> String {
    let mut out = String::from("scope,swa,ta,n\n");
    let mut row = |scope: &str, m: &ScopeMetrics| {
        out.push_str(&format!("{},{:.2},{:.2},{}\n", csv_field(scope), m.swa, m.ta, m.tasks_total));
    };
    row("overall", &report.overall);
    for c in &report.per_category {
        row(&c.scope, &c.metrics);
    }
    for b in &report.per_length_bucket {
        row(&b.scope, &b.metrics);
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Plain-text table: one row per scope with SWA and TA side by side.
pub fn report_text(report: &MetricsReport) -> String {
    let mut out = format!(
        "match mode: {}\nconfig: {}\n\n{:<16} {:>8} {:>8} {:>6} {:>8}\n",
        report.match_mode, report.config_hash, "scope", "SWA", "TA", "tasks", "steps"
    );
    let mut row = |scope: &str, m: &ScopeMetrics| {
        out.push_str(&format!(
            "{:<16} {:>8.2} {:>8.2} {:>6} {:>8}\n",
            scope, m.swa, m.ta, m.tasks_total, m.steps_total
        ));
    };
    row("overall", &report.overall);
    for c in &report.per_category {
        row(&c.scope, &c.metrics);
    }
    for b in &report.per_length_bucket {
        row(&format!("len {}", b.scope), &b.metrics);
    }
    out
}

/// Write `report.csv` and `report.txt` into `dir`.
pub fn emit_report(report: &MetricsReport, dir: &Path) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("report.csv"), report_csv(report))?;
    fs::write(dir.join("report.txt"), report_text(report))
}
