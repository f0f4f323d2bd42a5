#![allow(dead_code)]

use std::sync::{Arc, Mutex};

use stepwise_core::actor::{BackendError, PolicyBackend, PolicyRequest, ReplyFormat, ScriptedPolicy};
use stepwise_core::rollout::{Backends, RunConfig, RunMode};
use stepwise_core::synth::{generate_synthetic_suite, SynthConfig};
use stepwise_core::Task;

pub fn suite(seed: u64, count: usize, min: usize, max: usize) -> Vec<Task> {
    generate_synthetic_suite(&SynthConfig::new(seed, count, min, max)).unwrap()
}

pub fn config(mode: RunMode, policy: ScriptedPolicy) -> RunConfig {
    RunConfig::scripted(mode, policy)
}

pub fn backends(cfg: &RunConfig) -> Backends {
    Backends::from_config(cfg).unwrap()
}

/// One request seen by a wrapped backend.
#[derive(Debug, Clone)]
pub struct Seen {
    pub task: String,
    pub step: usize,
    pub attempt: usize,
    pub format: ReplyFormat,
    pub prompt: String,
}

/// Forwards to an inner backend and keeps every prompt it was sent.
pub struct Recording {
    pub inner: Arc<dyn PolicyBackend>,
    pub seen: Mutex<Vec<Seen>>,
}

impl Recording {
    pub fn wrap(inner: Arc<dyn PolicyBackend>) -> Arc<Self> {
        Arc::new(Self {
            inner,
            seen: Mutex::new(Vec::new()),
        })
    }

    pub fn prompts(&self) -> Vec<Seen> {
        self.seen.lock().unwrap().clone()
    }
}

impl PolicyBackend for Recording {
    fn identity(&self) -> String {
        self.inner.identity()
    }

    fn complete(&self, request: &PolicyRequest) -> Result<String, BackendError> {
        let r = request.reference.as_ref();
        self.seen.lock().unwrap().push(Seen {
            task: r.map(|r| r.task_id.clone()).unwrap_or_default(),
            step: r.map(|r| r.step).unwrap_or(0),
            attempt: r.map(|r| r.attempt).unwrap_or(0),
            format: request.format,
            prompt: request.prompt.joined(),
        });
        self.inner.complete(request)
    }
}

/// Always fails at the transport level.
pub struct Down;

impl PolicyBackend for Down {
    fn identity(&self) -> String {
        "down".into()
    }

    fn complete(&self, _: &PolicyRequest) -> Result<String, BackendError> {
        Err(BackendError::Transport("connection refused".into()))
    }
}
