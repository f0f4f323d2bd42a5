use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actor::{PolicyBackend, RemotePolicyBackend, ScriptedActor, ScriptedPolicy};
use crate::critic::{ScriptedCritic, DEFAULT_ACCEPT_THRESHOLD};
use crate::digest::sha256_hex;
use crate::evaluation::MatchMode;
use crate::grounding::{GroundingBackend, MockBackend, RemoteToolBackend};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    /// Every step sees the ground-truth history, whatever the actor did.
    TeacherForced,
    /// The run advances only on correct accepted actions.
    FreeRunning,
    /// Action-type-only prompting without memory or critic; history is
    /// ground truth as in teacher forcing.
    ZeroShotBaseline,
}

impl RunMode {
    pub fn as_str(self) -> &'static str {
        match self {
            RunMode::TeacherForced => "teacher_forced",
            RunMode::FreeRunning => "free_running",
            RunMode::ZeroShotBaseline => "zero_shot_baseline",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunFlags {
    pub use_tools: bool,
    pub use_stm: bool,
    pub use_ltm: bool,
    pub critic_enabled: bool,
    pub expose_total_steps: bool,
    pub critic_sees_ground_truth: bool,
}

impl Default for RunFlags {
    fn default() -> Self {
        Self {
            use_tools: true,
            use_stm: true,
            use_ltm: true,
            critic_enabled: true,
            expose_total_steps: false,
            critic_sees_ground_truth: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "backend", rename_all = "snake_case")]
pub enum ActorSpec {
    Scripted {
        #[serde(flatten)]
        policy: ScriptedPolicy,
    },
    /// Endpoint falls back to `MODEL_ENDPOINT`; the key is read from
    /// `MODEL_API_KEY` only.
    Remote {
        #[serde(default)]
        endpoint: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "backend", rename_all = "snake_case")]
pub enum CriticSpec {
    Scripted,
    Remote {
        #[serde(default)]
        endpoint: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "backend", rename_all = "snake_case")]
pub enum ToolsSpec {
    Mock,
    /// Base URL falls back to `TOOL_ENDPOINT`.
    Remote {
        #[serde(default)]
        endpoint: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mode: RunMode,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_threshold")]
    pub accept_threshold: f64,
    #[serde(default = "default_window")]
    pub window: usize,
    #[serde(default = "default_stall")]
    pub stall: usize,
    #[serde(default = "default_revisions")]
    pub max_revisions: usize,
    #[serde(default = "default_repairs")]
    pub repair_attempts: usize,
    #[serde(default = "default_match_mode")]
    pub match_mode: MatchMode,
    pub actor: ActorSpec,
    #[serde(default = "default_critic")]
    pub critic: CriticSpec,
    #[serde(default = "default_tools")]
    pub tools: ToolsSpec,
    #[serde(default)]
    pub flags: RunFlags,
    /// Scheduling only; excluded from the config hash.
    #[serde(default = "default_workers")]
    pub workers: usize,
}

fn default_threshold() -> f64 {
    DEFAULT_ACCEPT_THRESHOLD
}
fn default_window() -> usize {
    5
}
fn default_stall() -> usize {
    3
}
fn default_revisions() -> usize {
    3
}
fn default_repairs() -> usize {
    2
}
fn default_match_mode() -> MatchMode {
    MatchMode::CanonicalFull
}
fn default_critic() -> CriticSpec {
    CriticSpec::Scripted
}
fn default_tools() -> ToolsSpec {
    ToolsSpec::Mock
}
fn default_workers() -> usize {
    1
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(String),
    #[error("invalid config value: {0}")]
    Invalid(String),
    #[error("cannot build backend: {0}")]
    Backend(String),
}

impl RunConfig {
    /// Defaults everywhere except the actor and mode.
    pub fn new(mode: RunMode, actor: ActorSpec) -> Self {
        Self {
            mode,
            seed: 0,
            accept_threshold: default_threshold(),
            window: default_window(),
            stall: default_stall(),
            max_revisions: default_revisions(),
            repair_attempts: default_repairs(),
            match_mode: default_match_mode(),
            actor,
            critic: default_critic(),
            tools: default_tools(),
            flags: RunFlags::default(),
            workers: default_workers(),
        }
    }

    pub fn scripted(mode: RunMode, policy: ScriptedPolicy) -> Self {
        Self::new(mode, ActorSpec::Scripted { policy })
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg.normalized())
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if !(0.0..=1.0).contains(&self.accept_threshold) {
            return bad(format!("accept_threshold {} is outside [0, 1]", self.accept_threshold));
        }
        if self.window == 0 {
            return bad("window must be at least 1".into());
        }
        if self.stall < 2 {
            return bad("stall must be at least 2".into());
        }
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        if let ActorSpec::Scripted {
            policy: ScriptedPolicy::Noisy { flip },
        } = &self.actor
        {
            if !(0.0..=1.0).contains(flip) {
                return bad(format!("flip {flip} is outside [0, 1]"));
            }
        }
        Ok(())
    }

    /// The config as it will actually run: the zero-shot baseline has no
    /// critic.
    pub fn normalized(&self) -> Self {
        let mut c = self.clone();
        if c.mode == RunMode::ZeroShotBaseline {
            c.flags.critic_enabled = false;
        }
        c
    }

    /// sha256 of the normalized config with `workers` removed, over JSON
    /// with sorted keys.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self.normalized()).expect("config serializes");
        if let Some(obj) = v.as_object_mut() {
            obj.remove("workers");
        }
        sha256_hex(v.to_string().as_bytes())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to toml")
    }
}

/// The three backends a run talks to.
#[derive(Clone)]
pub struct Backends {
    pub actor: Arc<dyn PolicyBackend>,
    pub critic: Arc<dyn PolicyBackend>,
    pub tools: Arc<dyn GroundingBackend>,
}

impl Backends {
    pub fn from_config(cfg: &RunConfig) -> Result<Self, ConfigError> {
        let model_key = || std::env::var(crate::actor::MODEL_API_KEY_ENV).ok();
        let actor: Arc<dyn PolicyBackend> = match &cfg.actor {
            ActorSpec::Scripted { policy } => Arc::new(ScriptedActor::new(policy.clone(), cfg.seed)),
            ActorSpec::Remote { endpoint: Some(e) } => Arc::new(RemotePolicyBackend::new(e.clone(), model_key())),
            ActorSpec::Remote { endpoint: None } => Arc::new(RemotePolicyBackend::from_env().map_err(ConfigError::Backend)?),
        };
        let critic: Arc<dyn PolicyBackend> = match &cfg.critic {
            CriticSpec::Scripted => Arc::new(ScriptedCritic::new(cfg.match_mode)),
            CriticSpec::Remote { endpoint: Some(e) } => Arc::new(RemotePolicyBackend::new(e.clone(), model_key())),
            CriticSpec::Remote { endpoint: None } => Arc::new(RemotePolicyBackend::from_env().map_err(ConfigError::Backend)?),
        };
        let tools: Arc<dyn GroundingBackend> = match &cfg.tools {
            ToolsSpec::Mock => Arc::new(MockBackend::new()),
            ToolsSpec::Remote { endpoint: Some(e) } => Arc::new(RemoteToolBackend::new(e.clone())),
            ToolsSpec::Remote { endpoint: None } => Arc::new(RemoteToolBackend::from_env().map_err(ConfigError::Backend)?),
        };
        Ok(Self { actor, critic, tools })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::actor::FaultSite;

    #[test]
    fn toml_round_trip_and_defaults() {
        let cfg = RunConfig::from_toml(
            r#"
            mode = "teacher_forced"
            seed = 7
            [actor]
            backend = "scripted"
            policy = "noisy"
            flip = 0.3
            "#,
        )
        .unwrap();
        assert_eq!(cfg.actor, ActorSpec::Scripted { policy: ScriptedPolicy::Noisy { flip: 0.3 } });
        assert_eq!(cfg.max_revisions, 3);
        assert_eq!(cfg.accept_threshold, 0.5);
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);

        let mut faults = RunConfig::scripted(
            RunMode::FreeRunning,
            ScriptedPolicy::Faults {
                at: [FaultSite { task: "a".into(), step: 4 }].into(),
            },
        );
        faults.tools = ToolsSpec::Remote { endpoint: Some("http://x".into()) };
        assert_eq!(RunConfig::from_toml(&faults.to_toml()).unwrap(), faults);
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(RunConfig::from_toml("mode = \"teacher_forced\"\nbogus = 1\n[actor]\nbackend = \"scripted\"\npolicy = \"oracle\"").is_err());
        assert!(RunConfig::from_toml("mode = \"teacher_forced\"\naccept_threshold = 2.0\n[actor]\nbackend = \"scripted\"\npolicy = \"oracle\"").is_err());
    }

    #[test]
    fn baseline_has_no_critic_and_workers_do_not_hash() {
        let mut c = RunConfig::scripted(RunMode::ZeroShotBaseline, ScriptedPolicy::Oracle);
        assert!(!c.normalized().flags.critic_enabled);
        let h = c.hash();
        c.workers = 8;
        assert_eq!(c.hash(), h);
        c.seed = 1;
        assert_ne!(c.hash(), h);
    }
}
