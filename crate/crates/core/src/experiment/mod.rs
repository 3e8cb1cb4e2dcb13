//! Offline pretraining followed by online finetuning, with periodic
//! evaluation and the run-level metrics.
//!
//! Every source of randomness is derived from the run seed and a purpose
//! tag, so a run is a pure function of its configuration and seed.
//! Evaluations reuse the same per-episode streams (common random numbers),
//! so successive evaluations see the same start states.

mod metrics;
pub mod study;

pub use metrics::{read_metrics_csv, transitions_to_threshold, write_metrics_csv, MetricsRecord, Phase};

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::action::MixedAction;
use crate::agent::{Agent, AgentConfig};
use crate::env::{
    generate_dataset, read_jsonl, rollout, BehaviorTag, Env, EnvConfig, Episode, KeepMode, Policy, RandomPolicy,
    Transition,
};
use crate::error::{Error, Result};
use crate::replay::{ReplayBuffer, DEFAULT_PARTITION_CAPACITY};

/// Where prior data comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSpec {
    /// Episodes previously written as JSONL.
    File { path: PathBuf },
    /// The environment's scripted controller with Gaussian action noise.
    Scripted {
        episodes: usize,
        #[serde(default)]
        noise: f64,
        #[serde(default = "keep_all")]
        keep: KeepMode,
    },
    /// Uniformly random actions.
    Random {
        episodes: usize,
        #[serde(default = "keep_all")]
        keep: KeepMode,
    },
}

fn keep_all() -> KeepMode {
    KeepMode::All
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: EnvConfig,
    pub agent: AgentConfig,
    #[serde(default)]
    pub data: Vec<DataSpec>,
    /// Gradient steps before online collection starts.
    #[serde(default)]
    pub pretrain_steps: u64,
    #[serde(default)]
    pub online_episodes: u64,
    /// Ends the online phase early once this many transitions have been
    /// collected (the running round still finishes); 0 disables the cap.
    #[serde(default)]
    pub online_transitions: u64,
    #[serde(default = "one")]
    pub grad_steps_per_episode: u64,
    /// Offline evaluation cadence in gradient steps; 0 evaluates only at
    /// the end of the phase.
    #[serde(default)]
    pub eval_every_steps: u64,
    /// Online evaluation cadence in collected episodes; 0 evaluates only at
    /// the end of the phase.
    #[serde(default)]
    pub eval_every_episodes: u64,
    #[serde(default = "default_eval_episodes")]
    pub eval_episodes: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_capacity")]
    pub replay_capacity: usize,
    /// Environment instances collecting concurrently per round.
    #[serde(default = "one_usize")]
    pub collect_workers: usize,
    /// Write measured action-selection times into the metrics file. Off by
    /// default so the file is reproducible byte for byte.
    #[serde(default)]
    pub record_timing: bool,
}

fn one() -> u64 {
    1
}

fn one_usize() -> usize {
    1
}

fn default_eval_episodes() -> usize {
    100
}

fn default_seeds() -> Vec<u64> {
    vec![0, 1, 2]
}

fn default_capacity() -> usize {
    DEFAULT_PARTITION_CAPACITY
}

impl ExperimentConfig {
    pub fn new(env: EnvConfig, agent: AgentConfig) -> Self {
        Self {
            env,
            agent,
            data: Vec::new(),
            pretrain_steps: 0,
            online_episodes: 0,
            online_transitions: 0,
            grad_steps_per_episode: 1,
            eval_every_steps: 0,
            eval_every_episodes: 0,
            eval_episodes: default_eval_episodes(),
            seeds: default_seeds(),
            replay_capacity: default_capacity(),
            collect_workers: 1,
            record_timing: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.agent.validate()?;
        self.env.build()?;
        if self.eval_episodes == 0 {
            return Err(Error::Config("eval_episodes must be ≥ 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.replay_capacity == 0 {
            return Err(Error::Config("replay_capacity must be ≥ 1".into()));
        }
        if self.collect_workers == 0 {
            return Err(Error::Config("collect_workers must be ≥ 1".into()));
        }
        for d in &self.data {
            match d {
                DataSpec::Scripted { episodes, noise, .. } => {
                    if *episodes == 0 || !(*noise >= 0.0 && noise.is_finite()) {
                        return Err(Error::Config("scripted data needs episodes ≥ 1 and noise ≥ 0".into()));
                    }
                }
                DataSpec::Random { episodes, .. } if *episodes == 0 => {
                    return Err(Error::Config("random data needs episodes ≥ 1".into()));
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// Purposes of the derived random streams.
#[derive(Clone, Copy, Debug)]
#[repr(u64)]
enum Stream {
    Init = 1,
    Data = 2,
    Train = 3,
    Explore = 4,
    Eval = 5,
}

/// Independent generator keyed by `(seed, purpose, index)`.
fn stream_rng(seed: u64, stream: Stream, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(stream as u64).to_le_bytes());
    key[16..24].copy_from_slice(&index.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// Builds the prior dataset. Episode ids are consecutive across sources.
pub fn load_data(config: &ExperimentConfig, seed: u64) -> Result<Vec<Episode>> {
    let mut env = config.env.build()?;
    let mut rng = stream_rng(seed, Stream::Data, 0);
    let mut out: Vec<Episode> = Vec::new();
    for spec in &config.data {
        let first_id = out.len() as u64;
        let mut episodes = match spec {
            DataSpec::File { path } => {
                let file = std::fs::File::open(path)
                    .map_err(|e| Error::Config(format!("cannot open dataset {}: {e}", path.display())))?;
                read_jsonl(std::io::BufReader::new(file))?
            }
            DataSpec::Scripted { episodes, noise, keep } => {
                let mut policy = config.env.scripted_policy(*noise);
                generate_dataset(env.as_mut(), policy.as_mut(), *episodes, *keep, first_id, &mut rng)?
            }
            DataSpec::Random { episodes, keep } => {
                let mut policy = RandomPolicy::new(env.action_spec().clone());
                generate_dataset(env.as_mut(), &mut policy, *episodes, *keep, first_id, &mut rng)?
            }
        };
        for (k, ep) in episodes.iter_mut().enumerate() {
            for t in &mut ep.transitions {
                t.episode_id = first_id + k as u64;
            }
        }
        out.extend(episodes);
    }
    Ok(out)
}

/// Success fraction and mean wall time per action selection.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalReport {
    pub success_rate: f64,
    pub mean_action_ms: f64,
}

/// Rolls out `policy` for `episodes` episodes. Each episode uses its own
/// generator derived from one draw of `rng`, so two evaluations started
/// from equal generators face the same start states.
pub fn evaluate(policy: &mut dyn Policy, env: &mut dyn Env, episodes: usize, rng: &mut dyn RngCore) -> Result<EvalReport> {
    if episodes == 0 {
        return Err(Error::Usage("evaluation needs at least one episode".into()));
    }
    let base = rng.next_u64();
    let mut timed = Timed {
        inner: policy,
        seconds: 0.0,
        calls: 0,
    };
    let mut wins = 0usize;
    for j in 0..episodes {
        let mut ep_rng = stream_rng(base, Stream::Eval, j as u64);
        if rollout(env, &mut timed, j as u64, &mut ep_rng)?.success {
            wins += 1;
        }
    }
    Ok(EvalReport {
        success_rate: wins as f64 / episodes as f64,
        mean_action_ms: 1e3 * timed.seconds / timed.calls.max(1) as f64,
    })
}

struct Timed<'a> {
    inner: &'a mut dyn Policy,
    seconds: f64,
    calls: u64,
}

impl Policy for Timed<'_> {
    fn tag(&self) -> BehaviorTag {
        self.inner.tag()
    }

    fn begin_episode(&mut self, rng: &mut dyn RngCore) {
        self.inner.begin_episode(rng);
    }

    fn act(&mut self, observation: &[f64], rng: &mut dyn RngCore) -> Result<MixedAction> {
        let start = Instant::now();
        let a = self.inner.act(observation, rng);
        self.seconds += start.elapsed().as_secs_f64();
        self.calls += 1;
        a
    }
}

/// Which of an agent's deterministic policies to evaluate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GreedyMode {
    /// The configured evaluation policy.
    Configured,
    ActorMode,
    Cem,
}

/// An agent's evaluation policy as a [`Policy`].
pub struct GreedyPolicy<'a> {
    pub agent: &'a Agent,
    pub mode: GreedyMode,
}

impl Policy for GreedyPolicy<'_> {
    fn tag(&self) -> BehaviorTag {
        match self.mode {
            GreedyMode::Configured => self.agent.eval_tag(),
            GreedyMode::ActorMode => BehaviorTag::Actor,
            GreedyMode::Cem => BehaviorTag::Cem,
        }
    }

    fn act(&mut self, observation: &[f64], mut rng: &mut dyn RngCore) -> Result<MixedAction> {
        match self.mode {
            GreedyMode::Configured => self.agent.act_greedy(observation, &mut rng),
            GreedyMode::ActorMode => self.agent.actor_mode(observation),
            GreedyMode::Cem => self.agent.critic_greedy(observation, &mut rng),
        }
    }
}

/// Per-run summary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    /// Success of the last offline evaluation.
    pub post_offline_success: f64,
    /// Best offline evaluation.
    pub offline_peak: f64,
    /// Worst online evaluation, if any.
    pub online_min: Option<f64>,
    pub final_success: f64,
    pub online_transitions: u64,
    pub grad_steps: u64,
    /// Measured during the final evaluation.
    pub final_action_ms: f64,
}

/// One seeded run of an experiment.
pub struct Run {
    config: ExperimentConfig,
    seed: u64,
    agent: Agent,
    buffer: ReplayBuffer,
    envs: Vec<Box<dyn Env>>,
    eval_env: Box<dyn Env>,
    train_rng: ChaCha8Rng,
    records: Vec<MetricsRecord>,
    transitions: u64,
    episodes_collected: u64,
    last_action_ms: f64,
    abort_dir: Option<PathBuf>,
    episode_log: Option<Vec<Episode>>,
    /// Online episode ids continue after the prior data's.
    first_online_id: u64,
}

impl Run {
    /// Generates or loads the prior data and seeds the buffer with it.
    pub fn new(config: ExperimentConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let data = load_data(&config, seed)?;
        Self::with_data(config, seed, &data)
    }

    pub fn with_data(config: ExperimentConfig, seed: u64, data: &[Episode]) -> Result<Self> {
        config.validate()?;
        let eval_env = config.env.build()?;
        let envs = (0..config.collect_workers)
            .map(|_| config.env.build())
            .collect::<Result<Vec<_>>>()?;
        let mut init = stream_rng(seed, Stream::Init, 0);
        let agent = Agent::new(
            config.agent.clone(),
            eval_env.observation_dim(),
            eval_env.action_spec(),
            &mut init,
        )?;
        let mut buffer = ReplayBuffer::new(config.replay_capacity);
        for ep in data {
            if let Some(t) = ep.transitions.first() {
                if t.observation.len() != eval_env.observation_dim() {
                    return Err(Error::Config(format!(
                        "dataset observations have {} entries, the {} environment produces {}",
                        t.observation.len(),
                        config.env.name(),
                        eval_env.observation_dim()
                    )));
                }
                eval_env.action_spec().conforms(&t.action)?;
            }
            buffer.insert_episode(ep);
        }
        Ok(Self {
            train_rng: stream_rng(seed, Stream::Train, 0),
            config,
            seed,
            agent,
            buffer,
            envs,
            eval_env,
            records: Vec::new(),
            transitions: 0,
            episodes_collected: 0,
            last_action_ms: 0.0,
            abort_dir: None,
            episode_log: None,
            first_online_id: data.len() as u64,
        })
    }

    /// On a numeric failure the networks are dumped here before the error
    /// is returned.
    pub fn with_abort_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.abort_dir = Some(dir.into());
        self
    }

    /// Keeps a copy of every episode collected online.
    pub fn with_episode_log(mut self) -> Self {
        self.episode_log = Some(Vec::new());
        self
    }

    /// Online episodes, if logging was requested.
    pub fn episodes(&self) -> Option<&[Episode]> {
        self.episode_log.as_deref()
    }

    pub fn agent(&self) -> &Agent {
        &self.agent
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn records(&self) -> &[MetricsRecord] {
        &self.records
    }

    /// Environment steps taken by the collection environments.
    pub fn env_steps(&self) -> u64 {
        self.envs.iter().map(|e| e.total_steps()).sum()
    }

    /// Transitions collected online so far.
    pub fn transitions(&self) -> u64 {
        self.transitions
    }

    pub fn episodes_collected(&self) -> u64 {
        self.episodes_collected
    }

    fn guard<T>(&self, r: Result<T>) -> Result<T> {
        if let (Err(e), Some(dir)) = (&r, &self.abort_dir) {
            if e.is_numeric() {
                let _ = self.agent.save_checkpoint(dir);
            }
        }
        r
    }

    /// Evaluates the current agent and appends a record.
    pub fn evaluate_now(&mut self, phase: Phase) -> Result<MetricsRecord> {
        let mut policy = GreedyPolicy {
            agent: &self.agent,
            mode: GreedyMode::Configured,
        };
        let mut rng = stream_rng(self.seed, Stream::Eval, 0);
        let report = evaluate(&mut policy, self.eval_env.as_mut(), self.config.eval_episodes, &mut rng)?;
        self.last_action_ms = report.mean_action_ms;
        let record = MetricsRecord {
            step: self.agent.grad_steps(),
            transitions: self.transitions,
            phase,
            success_rate: report.success_rate,
            action_select_ms: self.config.record_timing.then_some(report.mean_action_ms),
        };
        self.records.push(record.clone());
        Ok(record)
    }

    fn train(&mut self) -> Result<()> {
        let r = self.agent.train_step(&self.buffer, &mut self.train_rng).map(|_| ());
        self.guard(r)
    }

    /// `pretrain_steps` gradient steps on the buffer with no environment
    /// interaction, evaluating at the configured cadence and once at the end.
    pub fn run_offline_phase(&mut self) -> Result<()> {
        let steps = self.config.pretrain_steps;
        if steps > 0 && self.buffer.is_empty() {
            return Err(Error::Config("offline pretraining needs prior data in the buffer".into()));
        }
        let every = self.config.eval_every_steps;
        for i in 1..=steps {
            self.train()?;
            if every > 0 && i % every == 0 && i != steps {
                self.evaluate_now(Phase::Offline)?;
            }
        }
        self.evaluate_now(Phase::Offline)?;
        Ok(())
    }

    /// Alternates collection rounds (one episode per worker) with gradient
    /// steps, inserting every episode into the buffer.
    pub fn run_online_phase(&mut self) -> Result<()> {
        let total = self.config.online_episodes;
        if total == 0 {
            return Ok(());
        }
        self.agent.publish();
        let every = self.config.eval_every_episodes;
        let cap = self.config.online_transitions;
        let mut done = 0u64;
        let mut finished = false;
        while !finished {
            let round = (total - done).min(self.envs.len() as u64) as usize;
            let episodes = self.collect_round(round)?;
            for ep in &episodes {
                self.buffer.insert_episode(ep);
                self.transitions += ep.len() as u64;
            }
            if let Some(log) = &mut self.episode_log {
                log.extend(episodes);
            }
            for _ in 0..self.config.grad_steps_per_episode * round as u64 {
                self.train()?;
            }
            let before = done;
            done += round as u64;
            finished = done >= total || (cap > 0 && self.transitions >= cap);
            if every > 0 && done / every > before / every && !finished {
                self.evaluate_now(Phase::Online)?;
            }
        }
        self.evaluate_now(Phase::Online)?;
        Ok(())
    }

    fn collect_round(&mut self, n: usize) -> Result<Vec<Episode>> {
        let agent = &self.agent;
        let seed = self.seed;
        let first = self.episodes_collected;
        let id_offset = self.first_online_id;
        let results: Vec<Result<Episode>> = self.envs[..n]
            .par_iter_mut()
            .enumerate()
            .map(|(w, env)| {
                let index = first + w as u64;
                let mut rng = stream_rng(seed, Stream::Explore, index);
                explore_episode(agent, env.as_mut(), id_offset + index, &mut rng)
            })
            .collect();
        self.episodes_collected += n as u64;
        let episodes = results.into_iter().collect::<Result<Vec<_>>>();
        self.guard(episodes)
    }

    pub fn summary(&self) -> RunSummary {
        let offline: Vec<f64> = self
            .records
            .iter()
            .filter(|r| r.phase == Phase::Offline)
            .map(|r| r.success_rate)
            .collect();
        let online_min = self
            .records
            .iter()
            .filter(|r| r.phase == Phase::Online)
            .map(|r| r.success_rate)
            .reduce(f64::min);
        RunSummary {
            seed: self.seed,
            post_offline_success: offline.last().copied().unwrap_or(0.0),
            offline_peak: offline.iter().copied().fold(0.0, f64::max),
            online_min,
            final_success: self.records.last().map_or(0.0, |r| r.success_rate),
            online_transitions: self.transitions,
            grad_steps: self.agent.grad_steps(),
            final_action_ms: self.last_action_ms,
        }
    }

    pub fn save_checkpoint(&self, dir: impl AsRef<Path>) -> Result<()> {
        self.agent.save_checkpoint(dir)
    }
}

/// One exploration episode: the per-episode coin is drawn at reset and the
/// episode is tagged with the policy that chose most of its actions.
fn explore_episode(agent: &Agent, env: &mut dyn Env, episode_id: u64, rng: &mut ChaCha8Rng) -> Result<Episode> {
    let mut observation = env.reset(rng);
    let flag = agent.begin_episode(rng);
    let mut transitions = Vec::new();
    let mut cem_steps = 0usize;
    for step in 0..env.horizon() {
        let (action, tag) = agent.explore(&observation, flag, rng)?;
        if tag == BehaviorTag::Cem {
            cem_steps += 1;
        }
        let out = env.step(&action)?;
        transitions.push(Transition {
            observation: std::mem::replace(&mut observation, out.observation.clone()),
            action,
            reward: out.reward,
            next_observation: out.observation,
            done: out.done,
            episode_id,
            step,
            behavior: tag,
            success: false,
        });
        if out.done {
            break;
        }
    }
    let tag = if 2 * cem_steps > transitions.len() {
        BehaviorTag::Cem
    } else {
        BehaviorTag::Actor
    };
    Ok(Episode::new(transitions, tag))
}

/// Offline then online phase for one seed.
pub fn run_experiment(config: &ExperimentConfig, seed: u64) -> Result<Run> {
    let mut run = Run::new(config.clone(), seed)?;
    run.run_offline_phase()?;
    run.run_online_phase()?;
    Ok(run)
}

/// Mean of `f` over summaries.
pub fn mean_of(summaries: &[RunSummary], f: impl Fn(&RunSummary) -> f64) -> f64 {
    summaries.iter().map(f).sum::<f64>() / summaries.len().max(1) as f64
}
