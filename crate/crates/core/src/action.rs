//! The closed semantic action vocabulary and its canonical text grammar.
//!
//! Labels are written as `KIND(key=value, ...)`:
//!
//! ```text
//! action := KIND [ "(" [ arg { "," arg } ] ")" ]
//! arg    := key "=" value
//! value  := "\"" escaped-string "\""      (\" and \\ escapes)
//!         | "(" int { "," int } ")"      (coords, region)
//!         | bare text up to the next top-level "," or ")"
//! key    := target | coords | scroll_units | text | region
//! ```
//!
//! Kinds are matched case-insensitively. [`Action::render`] always quotes
//! strings, so `parse_action(a.render()) == a` for every valid action.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::BoundingBox;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ActionKind {
    Click,
    Scroll,
    Zoom,
    Text,
    Segment,
    Complete,
}

impl ActionKind {
    pub const ALL: [ActionKind; 6] = [
        ActionKind::Click,
        ActionKind::Scroll,
        ActionKind::Zoom,
        ActionKind::Text,
        ActionKind::Segment,
        ActionKind::Complete,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ActionKind::Click => "CLICK",
            ActionKind::Scroll => "SCROLL",
            ActionKind::Zoom => "ZOOM",
            ActionKind::Text => "TEXT",
            ActionKind::Segment => "SEGMENT",
            ActionKind::Complete => "COMPLETE",
        }
    }

    /// One-line description used when listing the vocabulary in prompts.
    pub fn description(self) -> &'static str {
        match self {
            ActionKind::Click => "click the named UI element (button, menu, icon, tab)",
            ActionKind::Scroll => "scroll the active view by a signed number of units",
            ActionKind::Zoom => "change the magnification of the displayed image or view",
            ActionKind::Text => "type a string into the focused input field",
            ActionKind::Segment => "draw or edit a segmentation / region of interest on the image",
            ActionKind::Complete => "declare the workflow finished (last step only)",
        }
    }

    fn allows(self, arg: ArgKey) -> bool {
        use ArgKey::*;
        match self {
            ActionKind::Click => matches!(arg, Target | Coords),
            ActionKind::Scroll => matches!(arg, Target | Coords | ScrollUnits),
            ActionKind::Zoom => matches!(arg, Target | Coords | Region),
            ActionKind::Text => matches!(arg, Target | Coords | Text),
            ActionKind::Segment => matches!(arg, Target | Coords | Region),
            ActionKind::Complete => false,
        }
    }
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ActionKind {
    type Err = ActionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let token = s.trim();
        ActionKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(token))
            .ok_or_else(|| ActionError::UnknownKind(token.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ArgKey {
    Target,
    Coords,
    ScrollUnits,
    Text,
    Region,
}

impl ArgKey {
    fn name(self) -> &'static str {
        match self {
            ArgKey::Target => "target",
            ArgKey::Coords => "coords",
            ArgKey::ScrollUnits => "scroll_units",
            ArgKey::Text => "text",
            ArgKey::Region => "region",
        }
    }

    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "target" => ArgKey::Target,
            "coords" => ArgKey::Coords,
            "scroll_units" => ArgKey::ScrollUnits,
            "text" => ArgKey::Text,
            "region" => ArgKey::Region,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ActionError {
    #[error("empty action label")]
    Empty,
    #[error("unknown action kind `{0}`")]
    UnknownKind(String),
    #[error("malformed action label: {0}")]
    Malformed(String),
    #[error("{kind} requires argument `{arg}`")]
    MissingArgument { kind: ActionKind, arg: &'static str },
    #[error("argument `{arg}` is not applicable to {kind}")]
    InapplicableArgument { kind: ActionKind, arg: &'static str },
    #[error("unknown argument `{0}`")]
    UnknownArgument(String),
    #[error("argument `{0}` given more than once")]
    DuplicateArgument(String),
    #[error("invalid value for `{arg}`: {reason}")]
    InvalidValue { arg: &'static str, reason: String },
}

/// A semantic GUI action. Construct through [`Action::builder`] or
/// [`parse_action`]; both enforce the per-kind argument rules.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawAction", into = "RawAction")]
pub struct Action {
    kind: ActionKind,
    target: Option<String>,
    coords: Option<(u32, u32)>,
    scroll_units: Option<i64>,
    text: Option<String>,
    region: Option<BoundingBox>,
}

/// What an actor committed to at a step: a full action, or only its kind
/// when the prompt asks for the action type alone.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum Prediction {
    Action { action: Action },
    KindOnly { kind: ActionKind },
}

impl Prediction {
    pub fn kind(&self) -> ActionKind {
        match self {
            Prediction::Action { action } => action.kind(),
            Prediction::KindOnly { kind } => *kind,
        }
    }

    pub fn action(&self) -> Option<&Action> {
        match self {
            Prediction::Action { action } => Some(action),
            Prediction::KindOnly { .. } => None,
        }
    }

    pub fn render(&self) -> String {
        match self {
            Prediction::Action { action } => action.render(),
            Prediction::KindOnly { kind } => kind.as_str().to_string(),
        }
    }
}

impl From<Action> for Prediction {
    fn from(action: Action) -> Self {
        Prediction::Action { action }
    }
}

/// Unchecked field bag mirroring the JSON shape of an action.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAction {
    kind: ActionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    target: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    coords: Option<(u32, u32)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scroll_units: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    region: Option<BoundingBox>,
}

impl TryFrom<RawAction> for Action {
    type Error = ActionError;

    fn try_from(raw: RawAction) -> Result<Self, Self::Error> {
        let action = Action {
            kind: raw.kind,
            target: raw.target,
            coords: raw.coords,
            scroll_units: raw.scroll_units,
            text: raw.text,
            region: raw.region,
        };
        action.check()?;
        Ok(action)
    }
}

impl From<Action> for RawAction {
    fn from(a: Action) -> Self {
        RawAction {
            kind: a.kind,
            target: a.target,
            coords: a.coords,
            scroll_units: a.scroll_units,
            text: a.text,
            region: a.region,
        }
    }
}

impl Action {
    pub fn builder(kind: ActionKind) -> ActionBuilder {
        ActionBuilder(RawAction {
            kind,
            target: None,
            coords: None,
            scroll_units: None,
            text: None,
            region: None,
        })
    }

    pub fn complete() -> Action {
        Action::builder(ActionKind::Complete).build().expect("COMPLETE without arguments")
    }

    pub fn click(target: impl Into<String>) -> Action {
        Action::builder(ActionKind::Click)
            .target(target)
            .build()
            .expect("CLICK with a target")
    }

    pub fn kind(&self) -> ActionKind {
        self.kind
    }

    pub fn target(&self) -> Option<&str> {
        self.target.as_deref()
    }

    pub fn coords(&self) -> Option<(u32, u32)> {
        self.coords
    }

    pub fn scroll_units(&self) -> Option<i64> {
        self.scroll_units
    }

    pub fn text(&self) -> Option<&str> {
        self.text.as_deref()
    }

    pub fn region(&self) -> Option<BoundingBox> {
        self.region
    }

    fn present_args(&self) -> impl Iterator<Item = ArgKey> + '_ {
        [
            (ArgKey::Target, self.target.is_some()),
            (ArgKey::Coords, self.coords.is_some()),
            (ArgKey::ScrollUnits, self.scroll_units.is_some()),
            (ArgKey::Text, self.text.is_some()),
            (ArgKey::Region, self.region.is_some()),
        ]
        .into_iter()
        .filter_map(|(k, present)| present.then_some(k))
    }

    fn check(&self) -> Result<(), ActionError> {
        for arg in self.present_args() {
            if !self.kind.allows(arg) {
                return Err(ActionError::InapplicableArgument {
                    kind: self.kind,
                    arg: arg.name(),
                });
            }
        }
        if self.kind == ActionKind::Text && self.text.is_none() {
            return Err(ActionError::MissingArgument {
                kind: self.kind,
                arg: "text",
            });
        }
        if self.kind == ActionKind::Scroll && self.scroll_units.is_none() {
            return Err(ActionError::MissingArgument {
                kind: self.kind,
                arg: "scroll_units",
            });
        }
        if matches!(self.target.as_deref(), Some(t) if t.is_empty()) {
            return Err(ActionError::InvalidValue {
                arg: "target",
                reason: "empty string".into(),
            });
        }
        if matches!(self.text.as_deref(), Some(t) if t.is_empty()) {
            return Err(ActionError::InvalidValue {
                arg: "text",
                reason: "empty string".into(),
            });
        }
        if let Some(r) = self.region {
            if r.w == 0 || r.h == 0 {
                return Err(ActionError::InvalidValue {
                    arg: "region",
                    reason: "zero-area rectangle".into(),
                });
            }
        }
        Ok(())
    }

    /// Canonical label text, e.g. `CLICK(target="Load Data button")`.
    pub fn render(&self) -> String {
        let mut args = Vec::new();
        if let Some(t) = &self.target {
            args.push(format!("target={}", quote(t)));
        }
        if let Some((x, y)) = self.coords {
            args.push(format!("coords=({x},{y})"));
        }
        if let Some(n) = self.scroll_units {
            args.push(format!("scroll_units={n}"));
        }
        if let Some(s) = &self.text {
            args.push(format!("text={}", quote(s)));
        }
        if let Some(r) = self.region {
            args.push(format!("region=({},{},{},{})", r.x, r.y, r.w, r.h));
        }
        if args.is_empty() {
            self.kind.as_str().to_string()
        } else {
            format!("{}({})", self.kind, args.join(", "))
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

impl FromStr for Action {
    type Err = ActionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_action(s)
    }
}

pub struct ActionBuilder(RawAction);

impl ActionBuilder {
    pub fn target(mut self, target: impl Into<String>) -> Self {
        self.0.target = Some(target.into());
        self
    }

    pub fn coords(mut self, x: u32, y: u32) -> Self {
        self.0.coords = Some((x, y));
        self
    }

    pub fn scroll_units(mut self, n: i64) -> Self {
        self.0.scroll_units = Some(n);
        self
    }

    pub fn text(mut self, text: impl Into<String>) -> Self {
        self.0.text = Some(text.into());
        self
    }

    pub fn region(mut self, region: BoundingBox) -> Self {
        self.0.region = Some(region);
        self
    }

    pub fn build(self) -> Result<Action, ActionError> {
        Action::try_from(self.0)
    }
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        if c == '"' || c == '\\' {
            out.push('\\');
        }
        out.push(c);
    }
    out.push('"');
    out
}

/// Parse a label written in the canonical grammar (see module docs).
pub fn parse_action(raw: &str) -> Result<Action, ActionError> {
    let raw = raw.trim();
    if raw.is_empty() {
        return Err(ActionError::Empty);
    }
    let (kind_token, rest) = match raw.find('(') {
        Some(i) => (&raw[..i], Some(&raw[i..])),
        None => (raw, None),
    };
    let kind: ActionKind = kind_token.parse()?;
    let mut builder = Action::builder(kind);
    if let Some(rest) = rest {
        let inner = rest
            .strip_prefix('(')
            .and_then(|r| r.strip_suffix(')'))
            .ok_or_else(|| ActionError::Malformed("unbalanced parentheses".into()))?;
        let mut seen: Vec<ArgKey> = Vec::new();
        for (key, value) in ArgLexer::new(inner).collect::<Result<Vec<_>, _>>()? {
            let arg = ArgKey::from_name(&key).ok_or_else(|| ActionError::UnknownArgument(key.clone()))?;
            if seen.contains(&arg) {
                return Err(ActionError::DuplicateArgument(key));
            }
            seen.push(arg);
            builder = apply_arg(builder, arg, value)?;
        }
    }
    builder.build()
}

fn apply_arg(b: ActionBuilder, arg: ArgKey, value: ArgValue) -> Result<ActionBuilder, ActionError> {
    let invalid = |reason: &str| ActionError::InvalidValue {
        arg: arg.name(),
        reason: reason.to_string(),
    };
    match arg {
        ArgKey::Target => Ok(b.target(value.into_text().ok_or_else(|| invalid("expected text"))?)),
        ArgKey::Text => Ok(b.text(value.into_text().ok_or_else(|| invalid("expected text"))?)),
        ArgKey::ScrollUnits => {
            let s = value.into_text().ok_or_else(|| invalid("expected integer"))?;
            let n = s.trim().parse::<i64>().map_err(|_| invalid("expected integer"))?;
            Ok(b.scroll_units(n))
        }
        ArgKey::Coords => match value {
            ArgValue::Tuple(v) if v.len() == 2 => Ok(b.coords(v[0], v[1])),
            _ => Err(invalid("expected (x,y)")),
        },
        ArgKey::Region => match value {
            ArgValue::Tuple(v) if v.len() == 4 => Ok(b.region(BoundingBox::new(v[0], v[1], v[2], v[3]))),
            _ => Err(invalid("expected (x,y,w,h)")),
        },
    }
}

#[derive(Debug)]
enum ArgValue {
    Quoted(String),
    Bare(String),
    Tuple(Vec<u32>),
}

impl ArgValue {
    fn into_text(self) -> Option<String> {
        match self {
            ArgValue::Quoted(s) | ArgValue::Bare(s) => Some(s),
            ArgValue::Tuple(_) => None,
        }
    }
}

struct ArgLexer<'a> {
    chars: std::iter::Peekable<std::str::CharIndices<'a>>,
    src: &'a str,
    done: bool,
}

impl<'a> ArgLexer<'a> {
    fn new(src: &'a str) -> Self {
        Self {
            chars: src.char_indices().peekable(),
            src,
            done: src.trim().is_empty(),
        }
    }

    fn skip_ws(&mut self) {
        while matches!(self.chars.peek(), Some((_, c)) if c.is_whitespace()) {
            self.chars.next();
        }
    }

    fn next_arg(&mut self) -> Result<(String, ArgValue), ActionError> {
        self.skip_ws();
        let start = self.chars.peek().map(|(i, _)| *i).unwrap_or(self.src.len());
        let mut end = start;
        loop {
            match self.chars.next() {
                Some((_, '=')) => break,
                Some((i, c)) if c.is_ascii_alphanumeric() || c == '_' => end = i + c.len_utf8(),
                Some((_, c)) if c.is_whitespace() => {}
                _ => return Err(ActionError::Malformed("expected key=value".into())),
            }
        }
        let key = self.src[start..end].to_string();
        if key.is_empty() {
            return Err(ActionError::Malformed("empty argument key".into()));
        }
        self.skip_ws();
        let value = match self.chars.peek().map(|(_, c)| *c) {
            Some('"') => {
                self.chars.next();
                let mut s = String::new();
                loop {
                    match self.chars.next() {
                        Some((_, '\\')) => match self.chars.next() {
                            Some((_, c)) => s.push(c),
                            None => return Err(ActionError::Malformed("dangling escape".into())),
                        },
                        Some((_, '"')) => break,
                        Some((_, c)) => s.push(c),
                        None => return Err(ActionError::Malformed("unterminated string".into())),
                    }
                }
                ArgValue::Quoted(s)
            }
            Some('(') => {
                self.chars.next();
                let body_start = self.chars.peek().map(|(i, _)| *i).unwrap_or(self.src.len());
                let mut body_end = None;
                for (i, c) in self.chars.by_ref() {
                    if c == ')' {
                        body_end = Some(i);
                        break;
                    }
                }
                let body_end = body_end.ok_or_else(|| ActionError::Malformed("unterminated tuple".into()))?;
                let nums = self.src[body_start..body_end]
                    .split(',')
                    .map(|p| p.trim().parse::<u32>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|_| ActionError::Malformed("tuple entries must be non-negative integers".into()))?;
                ArgValue::Tuple(nums)
            }
            _ => {
                let vstart = self.chars.peek().map(|(i, _)| *i).unwrap_or(self.src.len());
                let mut vend = self.src.len();
                while let Some((i, c)) = self.chars.peek().copied() {
                    if c == ',' {
                        vend = i;
                        break;
                    }
                    if matches!(c, '(' | ')' | '"' | '=') {
                        return Err(ActionError::Malformed(
                            "bare values cannot contain quotes, parentheses or `=`".into(),
                        ));
                    }
                    self.chars.next();
                }
                let v = self.src[vstart..vend].trim();
                if v.is_empty() {
                    return Err(ActionError::Malformed(format!("missing value for `{key}`")));
                }
                ArgValue::Bare(v.to_string())
            }
        };
        self.skip_ws();
        match self.chars.next() {
            None => self.done = true,
            Some((_, ',')) => {}
            Some(_) => return Err(ActionError::Malformed("expected `,` between arguments".into())),
        }
        Ok((key, value))
    }
}

impl Iterator for ArgLexer<'_> {
    type Item = Result<(String, ArgValue), ActionError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let item = self.next_arg();
        if item.is_err() {
            self.done = true;
        }
        Some(item)
    }
}
