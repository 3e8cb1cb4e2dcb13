use rand::{Rng, RngCore};
use rand_distr::StandardNormal;

use super::{BehaviorTag, Env, Episode, NavConfig, ReachConfig, Transition, NAV_RAYS};
use crate::action::{ActionSpec, MixedAction};
use crate::error::{Error, Result};

/// Anything that maps observations to actions.
pub trait Policy: Send {
    fn tag(&self) -> BehaviorTag;

    /// Called once per episode, after the environment reset.
    fn begin_episode(&mut self, _rng: &mut dyn RngCore) {}

    fn act(&mut self, observation: &[f64], rng: &mut dyn RngCore) -> Result<MixedAction>;
}

/// Fraction of the success radius inside which scripted controllers terminate.
const TERMINATE_FRACTION: f64 = 0.75;

/// Proportional controller: turn toward the goal, drive when roughly facing
/// it, terminate inside the success radius. `noise` is the standard
/// deviation of Gaussian perturbations added to both velocities; the
/// terminate decision sees the goal distance perturbed by `noise` success
/// radii.
#[derive(Clone, Debug)]
pub struct ScriptedNavPolicy {
    config: NavConfig,
    spec: ActionSpec,
    noise: f64,
    tag: BehaviorTag,
}

impl ScriptedNavPolicy {
    pub fn new(config: &NavConfig, noise: f64) -> Self {
        Self {
            spec: config.action_spec(),
            config: config.clone(),
            noise,
            tag: BehaviorTag::Scripted,
        }
    }

    pub fn with_tag(mut self, tag: BehaviorTag) -> Self {
        self.tag = tag;
        self
    }
}

impl Policy for ScriptedNavPolicy {
    fn tag(&self) -> BehaviorTag {
        self.tag
    }

    fn act(&mut self, observation: &[f64], rng: &mut dyn RngCore) -> Result<MixedAction> {
        if observation.len() != NAV_RAYS + 2 {
            return Err(Error::shape("nav observation", NAV_RAYS + 2, observation.len()));
        }
        let (gx, gy) = (observation[NAV_RAYS], observation[NAV_RAYS + 1]);
        let distance = gx.hypot(gy);
        let radius = self.config.success_radius;
        if perceived(distance, self.noise * radius, rng) < TERMINATE_FRACTION * radius {
            return Ok(MixedAction {
                continuous: vec![0.0, 0.0],
                discrete: vec![1],
            });
        }
        let bearing = gy.atan2(gx);
        let angular = 2.5 * bearing;
        let linear = self.config.max_linear * (2.0 * distance).min(1.0) * bearing.cos().max(0.0);
        let mut action = MixedAction {
            continuous: vec![linear, angular],
            discrete: vec![0],
        };
        if self.noise > 0.0 {
            for v in &mut action.continuous {
                let z: f64 = rng.sample(StandardNormal);
                *v += self.noise * z;
            }
        }
        self.spec.clip(&mut action);
        Ok(action)
    }
}

fn perceived(distance: f64, sd: f64, rng: &mut dyn RngCore) -> f64 {
    if sd > 0.0 {
        let z: f64 = rng.sample(StandardNormal);
        distance + sd * z
    } else {
        distance
    }
}

/// Moves straight at the target and terminates inside the success radius.
#[derive(Clone, Debug)]
pub struct ScriptedReachPolicy {
    config: ReachConfig,
    spec: ActionSpec,
    noise: f64,
}

impl ScriptedReachPolicy {
    pub fn new(config: &ReachConfig, noise: f64) -> Self {
        Self {
            spec: config.action_spec(),
            config: config.clone(),
            noise,
        }
    }
}

impl Policy for ScriptedReachPolicy {
    fn tag(&self) -> BehaviorTag {
        BehaviorTag::Scripted
    }

    fn act(&mut self, observation: &[f64], rng: &mut dyn RngCore) -> Result<MixedAction> {
        if observation.len() != 2 {
            return Err(Error::shape("reach observation", 2, observation.len()));
        }
        let offset = observation[1];
        let radius = self.config.success_radius;
        if perceived(offset.abs(), self.noise * radius, rng) < TERMINATE_FRACTION * radius {
            return Ok(MixedAction {
                continuous: vec![0.0],
                discrete: vec![1],
            });
        }
        let mut action = MixedAction {
            continuous: vec![offset],
            discrete: vec![0],
        };
        if self.noise > 0.0 {
            let z: f64 = rng.sample(StandardNormal);
            action.continuous[0] += self.noise * z;
        }
        self.spec.clip(&mut action);
        Ok(action)
    }
}

/// Uniformly random actions.
#[derive(Clone, Debug)]
pub struct RandomPolicy {
    spec: ActionSpec,
}

impl RandomPolicy {
    pub fn new(spec: ActionSpec) -> Self {
        Self { spec }
    }
}

impl Policy for RandomPolicy {
    fn tag(&self) -> BehaviorTag {
        BehaviorTag::Random
    }

    fn act(&mut self, _observation: &[f64], rng: &mut dyn RngCore) -> Result<MixedAction> {
        Ok(self.spec.uniform_random_action(rng))
    }
}

/// Adapts any closure to a [`Policy`], mostly for evaluation of learned agents.
pub struct ActorModePolicy<F> {
    tag: BehaviorTag,
    select: F,
}

impl<F> ActorModePolicy<F>
where
    F: FnMut(&[f64], &mut dyn RngCore) -> Result<MixedAction> + Send,
{
    pub fn new(tag: BehaviorTag, select: F) -> Self {
        Self { tag, select }
    }
}

impl<F> Policy for ActorModePolicy<F>
where
    F: FnMut(&[f64], &mut dyn RngCore) -> Result<MixedAction> + Send,
{
    fn tag(&self) -> BehaviorTag {
        self.tag
    }

    fn act(&mut self, observation: &[f64], rng: &mut dyn RngCore) -> Result<MixedAction> {
        (self.select)(observation, rng)
    }
}

/// Runs one episode to completion.
pub fn rollout(env: &mut dyn Env, policy: &mut dyn Policy, episode_id: u64, rng: &mut dyn RngCore) -> Result<Episode> {
    let mut observation = env.reset(rng);
    policy.begin_episode(rng);
    let mut transitions = Vec::new();
    for step in 0..env.horizon() {
        let action = policy.act(&observation, rng)?;
        let out = env.step(&action)?;
        transitions.push(Transition {
            observation: std::mem::replace(&mut observation, out.observation.clone()),
            action,
            reward: out.reward,
            next_observation: out.observation,
            done: out.done,
            episode_id,
            step,
            behavior: policy.tag(),
            success: false,
        });
        if out.done {
            break;
        }
    }
    Ok(Episode::new(transitions, policy.tag()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{NavEnv, NavState, ReachEnv};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn success_rate(env: &mut dyn Env, policy: &mut dyn Policy, n: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let wins = (0..n)
            .filter(|&i| rollout(env, policy, i as u64, &mut rng).unwrap().success)
            .count();
        wins as f64 / n as f64
    }

    #[test]
    fn scripted_nav_solves_open_arena() {
        let cfg = NavConfig {
            max_obstacles: 0,
            ..NavConfig::default()
        };
        let mut env = NavEnv::new(cfg.clone()).unwrap();
        let rate = success_rate(&mut env, &mut ScriptedNavPolicy::new(&cfg, 0.0), 200, 5);
        assert!(rate >= 0.95, "scripted success {rate}");
    }

    #[test]
    fn heavy_noise_hurts_scripted_nav() {
        let cfg = NavConfig {
            max_obstacles: 0,
            ..NavConfig::default()
        };
        let mut env = NavEnv::new(cfg.clone()).unwrap();
        let clean = success_rate(&mut env, &mut ScriptedNavPolicy::new(&cfg, 0.0), 200, 6);
        let noisy = success_rate(&mut env, &mut ScriptedNavPolicy::new(&cfg, 1.0), 200, 6);
        assert!(noisy < clean, "noisy {noisy} vs clean {clean}");
    }

    #[test]
    fn goal_within_radius_terminates_immediately() {
        let cfg = NavConfig::default();
        let mut env = NavEnv::new(cfg.clone()).unwrap();
        let obs = env.set_state(NavState {
            x: 0.0,
            y: 0.0,
            heading: 0.0,
            goal: (0.1, 0.0),
            obstacles: vec![],
            steps: 0,
            done: false,
        });
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = ScriptedNavPolicy::new(&cfg, 0.0).act(&obs, &mut rng).unwrap();
        assert_eq!(a.discrete, vec![1]);
        assert_eq!(env.step(&a).unwrap().reward, 1.0);
    }

    #[test]
    fn scripted_reach_is_reliable() {
        let cfg = ReachConfig::default();
        let mut env = ReachEnv::new(cfg.clone()).unwrap();
        let rate = success_rate(&mut env, &mut ScriptedReachPolicy::new(&cfg, 0.0), 200, 1);
        assert!(rate >= 0.99, "reach scripted success {rate}");
    }

    #[test]
    fn rewards_are_sparse_for_every_policy() {
        let nav = NavConfig::default();
        let reach = ReachConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut nav_env = NavEnv::new(nav.clone()).unwrap();
        let mut reach_env = ReachEnv::new(reach.clone()).unwrap();
        let mut policies: Vec<Box<dyn Policy>> = vec![
            Box::new(ScriptedNavPolicy::new(&nav, 0.0)),
            Box::new(ScriptedNavPolicy::new(&nav, 0.7)),
            Box::new(RandomPolicy::new(nav.action_spec())),
        ];
        for i in 0..1_000u64 {
            let p = &mut policies[(i % 3) as usize];
            let ep = rollout(&mut nav_env, p.as_mut(), i, &mut rng).unwrap();
            assert!(ep.is_well_formed());
            assert!(ep.len() <= nav.horizon);
        }
        let mut random = RandomPolicy::new(reach.action_spec());
        for i in 0..200u64 {
            let ep = rollout(&mut reach_env, &mut random, i, &mut rng).unwrap();
            assert!(ep.is_well_formed());
            assert!(ep.len() <= reach.horizon);
        }
    }

    #[test]
    fn nav_step_is_deterministic_given_state_and_action() {
        let cfg = NavConfig::default();
        let mut a = NavEnv::new(cfg.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        a.reset(&mut rng);
        let snapshot = a.state().clone();
        let mut b = NavEnv::new(cfg.clone()).unwrap();
        b.set_state(snapshot);
        let mut policy = RandomPolicy::new(cfg.action_spec());
        for _ in 0..cfg.horizon {
            let obs = a.observe();
            let act = policy.act(&obs, &mut rng).unwrap();
            let (ra, rb) = (a.step(&act).unwrap(), b.step(&act).unwrap());
            assert_eq!(ra, rb);
            if ra.done {
                break;
            }
        }
    }
}
