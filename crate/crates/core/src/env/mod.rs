//! Sparse binary-reward environments and the episode/transition records
//! they produce.
//!
//! Every environment pays reward 1 at most once, on the step that ends the
//! episode, and 0 everywhere else. Episodes end when the termination
//! subaction fires or the horizon elapses.

mod dataset;
mod nav;
mod policy;
mod reach;

pub use dataset::{generate_dataset, read_jsonl, write_jsonl, KeepMode};
pub use nav::{NavConfig, NavEnv, NavState, Rect, NAV_RAYS};
pub use policy::{
    rollout, ActorModePolicy, Policy, RandomPolicy, ScriptedNavPolicy, ScriptedReachPolicy,
};
pub use reach::{ReachConfig, ReachEnv};

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::action::{ActionSpec, MixedAction};
use crate::error::Result;

/// Who generated an episode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BehaviorTag {
    Demo,
    Scripted,
    Actor,
    Cem,
    Random,
}

/// One environment step.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub observation: Vec<f64>,
    pub action: MixedAction,
    pub reward: f64,
    pub next_observation: Vec<f64>,
    pub done: bool,
    pub episode_id: u64,
    pub step: usize,
    pub behavior: BehaviorTag,
    /// Success flag of the enclosing episode.
    pub success: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    pub transitions: Vec<Transition>,
    pub success: bool,
    pub behavior: BehaviorTag,
}

impl Episode {
    /// Assembles an episode, stamping the success flag on every transition.
    pub fn new(mut transitions: Vec<Transition>, behavior: BehaviorTag) -> Self {
        let success = transitions.last().is_some_and(|t| t.reward == 1.0);
        for t in &mut transitions {
            t.success = success;
            t.behavior = behavior;
        }
        Self {
            transitions,
            success,
            behavior,
        }
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    /// Checks the sparse-reward shape: binary rewards, nonzero only on the
    /// final transition, which is the only one marked done.
    pub fn is_well_formed(&self) -> bool {
        let n = self.transitions.len();
        n > 0
            && self.transitions.iter().enumerate().all(|(i, t)| {
                let last = i + 1 == n;
                (t.reward == 0.0 || (t.reward == 1.0 && last))
                    && t.done == last
                    && t.success == self.success
            })
            && self.success == (self.transitions[n - 1].reward == 1.0)
    }
}

/// Result of a single environment step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub done: bool,
}

/// Episodic sparse-reward environment.
pub trait Env: Send {
    fn observation_dim(&self) -> usize;
    fn action_spec(&self) -> &ActionSpec;
    fn horizon(&self) -> usize;
    /// Samples a fresh start state. All environment randomness lives here.
    fn reset(&mut self, rng: &mut dyn RngCore) -> Vec<f64>;
    /// Deterministic given the current state and `action`. Stepping a
    /// finished episode is a usage error.
    fn step(&mut self, action: &MixedAction) -> Result<StepResult>;
    /// Total steps taken over the environment's lifetime.
    fn total_steps(&self) -> u64;
}

/// Which environment to build.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvConfig {
    Nav(#[serde(default)] NavConfig),
    Reach(#[serde(default)] ReachConfig),
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig::Nav(NavConfig::default())
    }
}

impl EnvConfig {
    pub fn build(&self) -> Result<Box<dyn Env>> {
        Ok(match self {
            EnvConfig::Nav(c) => Box::new(NavEnv::new(c.clone())?),
            EnvConfig::Reach(c) => Box::new(ReachEnv::new(c.clone())?),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            EnvConfig::Nav(_) => "nav",
            EnvConfig::Reach(_) => "reach",
        }
    }

    /// The hand-written controller for this environment.
    pub fn scripted_policy(&self, noise: f64) -> Box<dyn Policy> {
        match self {
            EnvConfig::Nav(c) => Box::new(ScriptedNavPolicy::new(c, noise)),
            EnvConfig::Reach(c) => Box::new(ScriptedReachPolicy::new(c, noise)),
        }
    }
}
