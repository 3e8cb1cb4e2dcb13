//! Critic and actor learners and their composition into QT-Opt, AWAC and
//! AW-Opt style agents.
//!
//! The learner owns the online networks. Data collection reads a frozen
//! snapshot of them that is refreshed every `publish_every` gradient steps.

mod config;
mod nets;
mod update;

pub use config::{
    make_algorithm, AgentConfig, Algorithm, EvalPolicy, ExplorationStrategy, Overrides, TargetStrategy, Variant,
    DEFAULT_P_CRITIC,
};
pub use nets::{critic_rows, ActorNet, CriticNets, CriticView};
pub use update::{
    actor_update, advantage, advantage_weight, advantages, bellman_target, bellman_targets, critic_update,
    weighted_actor_gradients, TargetParams,
};

use std::path::Path;

use rand::Rng;

use crate::action::{ActionSpec, MixedAction};
use crate::cem::cem_policy_action;
use crate::env::BehaviorTag;
use crate::error::{Error, Result};
use crate::nn::{Mlp, OptimizerState};
use crate::replay::ReplayBuffer;

/// Losses of one gradient step. `actor_loss` is `None` when no actor batch
/// was available.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepLosses {
    pub critic_loss: f64,
    pub actor_loss: Option<f64>,
}

#[derive(Clone, Debug)]
struct Snapshot {
    actor: ActorNet,
    critic: Mlp,
}

#[derive(Clone, Debug)]
pub struct Agent {
    config: AgentConfig,
    critic: CriticNets,
    actor: ActorNet,
    critic_opt: OptimizerState,
    actor_opt: OptimizerState,
    published: Snapshot,
    grad_steps: u64,
}

impl Agent {
    pub fn new<R: Rng + ?Sized>(config: AgentConfig, obs_dim: usize, spec: &ActionSpec, rng: &mut R) -> Result<Self> {
        config.validate()?;
        spec.validate()?;
        let critic = CriticNets::new(obs_dim, spec, &config.hidden, config.tau, rng)?;
        let actor = ActorNet::new(obs_dim, spec, &config.hidden, rng)?;
        let critic_opt = OptimizerState::new(config.optimizer, config.critic_lr, &critic.online);
        let actor_opt = OptimizerState::new(config.optimizer, config.actor_lr, &actor.net);
        let published = Snapshot {
            actor: actor.clone(),
            critic: critic.online.clone(),
        };
        Ok(Self {
            config,
            critic,
            actor,
            critic_opt,
            actor_opt,
            published,
            grad_steps: 0,
        })
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn spec(&self) -> &ActionSpec {
        &self.actor.spec
    }

    pub fn critic(&self) -> &CriticNets {
        &self.critic
    }

    pub fn actor(&self) -> &ActorNet {
        &self.actor
    }

    pub fn grad_steps(&self) -> u64 {
        self.grad_steps
    }

    /// Copies the online networks into the snapshot used for acting.
    pub fn publish(&mut self) {
        self.published = Snapshot {
            actor: self.actor.clone(),
            critic: self.critic.online.clone(),
        };
    }

    /// One critic step and, when the configuration trains an actor, one
    /// actor step.
    pub fn train_step<R: Rng + ?Sized>(&mut self, buffer: &ReplayBuffer, rng: &mut R) -> Result<StepLosses> {
        let c = &self.config;
        let batch = if c.balanced_sampling {
            buffer.sample_critic_batch(c.batch_size, rng)?
        } else {
            buffer.sample_uniform_batch(c.batch_size, rng)?
        };
        let params = TargetParams {
            strategy: c.target_strategy,
            gamma: c.gamma,
            n_adv_samples: c.n_adv_samples,
            cem: &c.target_cem,
        };
        let targets = bellman_targets(&self.critic, &self.actor, &batch.transitions, &params, rng)?;
        let critic_loss = critic_update(
            &mut self.critic,
            &self.actor.spec,
            &batch.transitions,
            &targets,
            &mut self.critic_opt,
        )?;

        let mut actor_loss = None;
        if c.trains_actor() {
            let actor_batch = if c.positive_filtering {
                match buffer.sample_actor_batch(c.batch_size, c.actor_filter, rng) {
                    Ok(b) => Some(b),
                    Err(Error::EmptyBuffer(_)) => None,
                    Err(e) => return Err(e),
                }
            } else {
                Some(buffer.sample_uniform_batch(c.batch_size, rng)?)
            };
            if let Some(b) = actor_batch {
                actor_loss = Some(actor_update(
                    &mut self.actor,
                    &self.critic,
                    &b.transitions,
                    &self.config,
                    &mut self.actor_opt,
                    rng,
                )?);
            }
        }
        self.grad_steps += 1;
        if self.grad_steps % self.config.publish_every == 0 {
            self.publish();
        }
        Ok(StepLosses {
            critic_loss,
            actor_loss,
        })
    }

    /// Per-episode coin of the episode-level switcher: `true` means the
    /// critic policy acts for the whole episode. Degenerate probabilities
    /// draw nothing.
    pub fn begin_episode<R: Rng + ?Sized>(&self, rng: &mut R) -> bool {
        match self.config.exploration {
            ExplorationStrategy::CriticOnly => true,
            ExplorationStrategy::ActorOnly | ExplorationStrategy::StepSwitch { .. } => false,
            ExplorationStrategy::EpisodeSwitch { p_critic } => coin(p_critic, rng),
        }
    }

    /// Data-collection action from the published snapshot.
    pub fn explore<R: Rng + ?Sized>(
        &self,
        obs: &[f64],
        episode_flag: bool,
        rng: &mut R,
    ) -> Result<(MixedAction, BehaviorTag)> {
        select_exploration_action(self, obs, self.config.exploration, episode_flag, rng)
    }

    /// Sample from the published actor.
    pub fn actor_sample<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R) -> Result<MixedAction> {
        self.published.actor.sample(obs, rng)
    }

    /// CEM maximization of the published critic.
    pub fn cem_action<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R) -> Result<MixedAction> {
        let view = CriticView {
            net: &self.published.critic,
            spec: &self.actor.spec,
        };
        cem_policy_action(&view, obs, &self.actor.spec, &self.config.cem, rng)
    }

    /// Mode of the online actor.
    pub fn actor_mode(&self, obs: &[f64]) -> Result<MixedAction> {
        self.actor.mode(obs)
    }

    /// CEM maximization of the online critic.
    pub fn critic_greedy<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R) -> Result<MixedAction> {
        let view = CriticView {
            net: &self.critic.online,
            spec: &self.actor.spec,
        };
        cem_policy_action(&view, obs, &self.actor.spec, &self.config.cem, rng)
    }

    /// Evaluation action under the configured evaluation policy.
    pub fn act_greedy<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R) -> Result<MixedAction> {
        match self.config.eval_policy {
            EvalPolicy::Actor => self.actor_mode(obs),
            EvalPolicy::Cem => self.critic_greedy(obs, rng),
        }
    }

    pub fn eval_tag(&self) -> BehaviorTag {
        match self.config.eval_policy {
            EvalPolicy::Actor => BehaviorTag::Actor,
            EvalPolicy::Cem => BehaviorTag::Cem,
        }
    }

    /// Writes `actor.ckpt`, `critic.ckpt` and `critic_target.ckpt` into `dir`.
    pub fn save_checkpoint(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        self.actor.net.save(dir.join("actor.ckpt"))?;
        self.critic.online.save(dir.join("critic.ckpt"))?;
        self.critic.target.save(dir.join("critic_target.ckpt"))?;
        Ok(())
    }

    /// Restores the networks written by [`Agent::save_checkpoint`] and
    /// republishes them. Optimizer moments start fresh.
    pub fn load_checkpoint(&mut self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        let load = |name: &str, like: &Mlp| -> Result<Mlp> {
            let net = Mlp::load(dir.join(name))?;
            if net.input_dim() != like.input_dim()
                || net.output_dim() != like.output_dim()
                || net.parameter_count() != like.parameter_count()
            {
                return Err(Error::Checkpoint(format!("{name} does not match the configured network shape")));
            }
            Ok(net)
        };
        let actor = load("actor.ckpt", &self.actor.net)?;
        let online = load("critic.ckpt", &self.critic.online)?;
        let target = load("critic_target.ckpt", &self.critic.target)?;
        self.actor.net = actor;
        self.critic.online = online;
        self.critic.target = target;
        self.critic_opt = OptimizerState::new(self.config.optimizer, self.config.critic_lr, &self.critic.online);
        self.actor_opt = OptimizerState::new(self.config.optimizer, self.config.actor_lr, &self.actor.net);
        self.publish();
        Ok(())
    }
}

fn coin<R: Rng + ?Sized>(p: f64, rng: &mut R) -> bool {
    if p >= 1.0 {
        true
    } else if p <= 0.0 {
        false
    } else {
        rng.random::<f64>() < p
    }
}

/// Chooses between the actor sample and the CEM policy. For the
/// episode-level switcher `episode_flag` is the coin drawn by
/// [`Agent::begin_episode`]; the step-level switcher draws afresh.
pub fn select_exploration_action<R: Rng + ?Sized>(
    agent: &Agent,
    obs: &[f64],
    strategy: ExplorationStrategy,
    episode_flag: bool,
    rng: &mut R,
) -> Result<(MixedAction, BehaviorTag)> {
    let use_critic = match strategy {
        ExplorationStrategy::ActorOnly => false,
        ExplorationStrategy::CriticOnly => true,
        ExplorationStrategy::EpisodeSwitch { .. } => episode_flag,
        ExplorationStrategy::StepSwitch { p_critic } => coin(p_critic, rng),
    };
    if use_critic {
        Ok((agent.cem_action(obs, rng)?, BehaviorTag::Cem))
    } else {
        Ok((agent.actor_sample(obs, rng)?, BehaviorTag::Actor))
    }
}
