use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::{Env, StepResult};
use crate::action::{ActionSpec, ContinuousSubaction, DiscreteSubaction, MixedAction};
use crate::error::{Error, Result};

/// One-dimensional reach: move a point on `[-1, 1]` onto a target and
/// terminate there. Observation is `[position, target − position]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReachConfig {
    pub horizon: usize,
    pub max_step: f64,
    pub success_radius: f64,
    pub min_start_distance: f64,
}

impl Default for ReachConfig {
    fn default() -> Self {
        Self {
            horizon: 10,
            max_step: 0.5,
            success_radius: 0.1,
            min_start_distance: 0.3,
        }
    }
}

impl ReachConfig {
    pub fn action_spec(&self) -> ActionSpec {
        ActionSpec {
            continuous: vec![ContinuousSubaction {
                name: "velocity".into(),
                low: -self.max_step,
                high: self.max_step,
                weight: 1.0,
            }],
            discrete: vec![DiscreteSubaction {
                name: "terminate".into(),
                cardinality: 2,
                weight: 1.0,
            }],
        }
    }
}

pub struct ReachEnv {
    config: ReachConfig,
    spec: ActionSpec,
    position: f64,
    target: f64,
    steps: usize,
    done: bool,
    total_steps: u64,
}

impl ReachEnv {
    pub fn new(config: ReachConfig) -> Result<Self> {
        if config.horizon == 0 || config.max_step <= 0.0 || config.success_radius <= 0.0 || config.min_start_distance >= 2.0
        {
            return Err(Error::Config(format!("invalid reach config {config:?}")));
        }
        Ok(Self {
            spec: config.action_spec(),
            config,
            position: 0.0,
            target: 0.0,
            steps: 0,
            done: false,
            total_steps: 0,
        })
    }

    pub fn set_state(&mut self, position: f64, target: f64) -> Vec<f64> {
        self.position = position;
        self.target = target;
        self.steps = 0;
        self.done = false;
        self.observe()
    }

    pub fn position(&self) -> f64 {
        self.position
    }

    fn observe(&self) -> Vec<f64> {
        vec![self.position, self.target - self.position]
    }
}

impl Env for ReachEnv {
    fn observation_dim(&self) -> usize {
        2
    }

    fn action_spec(&self) -> &ActionSpec {
        &self.spec
    }

    fn horizon(&self) -> usize {
        self.config.horizon
    }

    fn reset(&mut self, rng: &mut dyn RngCore) -> Vec<f64> {
        let target = rng.random_range(-1.0..=1.0);
        let position = loop {
            let p: f64 = rng.random_range(-1.0..=1.0);
            if (p - target).abs() >= self.config.min_start_distance {
                break p;
            }
        };
        self.set_state(position, target)
    }

    fn step(&mut self, action: &MixedAction) -> Result<StepResult> {
        if self.done {
            return Err(Error::Usage("step called on a finished reach episode".into()));
        }
        self.spec.conforms(action)?;
        self.total_steps += 1;
        self.steps += 1;
        let terminate = action.discrete[0] == 1;
        if !terminate {
            self.position = (self.position + action.continuous[0]).clamp(-1.0, 1.0);
        }
        let done = terminate || self.steps >= self.config.horizon;
        let reward = if done && (self.target - self.position).abs() <= self.config.success_radius {
            1.0
        } else {
            0.0
        };
        self.done = done;
        Ok(StepResult {
            observation: self.observe(),
            reward,
            done,
        })
    }

    fn total_steps(&self) -> u64 {
        self.total_steps
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reach_success_and_failure() {
        let mut env = ReachEnv::new(ReachConfig::default()).unwrap();
        env.set_state(0.0, 0.4);
        let moved = env
            .step(&MixedAction {
                continuous: vec![0.35],
                discrete: vec![0],
            })
            .unwrap();
        assert_eq!((moved.reward, moved.done), (0.0, false));
        let end = env
            .step(&MixedAction {
                continuous: vec![0.0],
                discrete: vec![1],
            })
            .unwrap();
        assert_eq!((end.reward, end.done), (1.0, true));

        env.set_state(-0.8, 0.4);
        let end = env
            .step(&MixedAction {
                continuous: vec![0.0],
                discrete: vec![1],
            })
            .unwrap();
        assert_eq!((end.reward, end.done), (0.0, true));
    }
}
