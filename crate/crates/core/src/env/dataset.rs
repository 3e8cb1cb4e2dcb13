use std::io::{BufRead, Write};

use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::{rollout, BehaviorTag, Env, Episode, Policy, Transition};
use crate::action::MixedAction;
use crate::error::{Error, Result};

/// Which rollouts to keep when generating a dataset.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeepMode {
    All,
    #[serde(alias = "positives")]
    PositivesOnly,
    #[serde(alias = "negatives")]
    NegativesOnly,
}

impl KeepMode {
    fn keeps(self, episode: &Episode) -> bool {
        match self {
            KeepMode::All => true,
            KeepMode::PositivesOnly => episode.success,
            KeepMode::NegativesOnly => !episode.success,
        }
    }
}

/// Rolls out `policy` until `episodes` rollouts pass the `keep` filter or
/// `100 × episodes` attempts are spent. Episode ids are assigned
/// consecutively from `first_id` over kept episodes.
pub fn generate_dataset(
    env: &mut dyn Env,
    policy: &mut dyn Policy,
    episodes: usize,
    keep: KeepMode,
    first_id: u64,
    rng: &mut dyn RngCore,
) -> Result<Vec<Episode>> {
    if episodes == 0 {
        return Err(Error::Usage("dataset needs at least one episode".into()));
    }
    let cap = episodes.saturating_mul(100);
    let mut kept = Vec::with_capacity(episodes);
    let mut attempts = 0;
    while kept.len() < episodes && attempts < cap {
        attempts += 1;
        let id = first_id + kept.len() as u64;
        let episode = rollout(env, policy, id, rng)?;
        if keep.keeps(&episode) {
            kept.push(episode);
        }
    }
    if kept.is_empty() {
        return Err(Error::DataGeneration(format!(
            "no episode passed the {keep:?} filter in {attempts} rollouts"
        )));
    }
    Ok(kept)
}

#[derive(Serialize, Deserialize)]
struct Line {
    episode_id: u64,
    step: usize,
    observation: Vec<f64>,
    action: MixedAction,
    reward: f64,
    done: bool,
    behavior_tag: BehaviorTag,
}

/// Writes one JSON object per transition.
pub fn write_jsonl<W: Write>(mut out: W, episodes: &[Episode]) -> Result<()> {
    for ep in episodes {
        for t in &ep.transitions {
            let line = Line {
                episode_id: t.episode_id,
                step: t.step,
                observation: t.observation.clone(),
                action: t.action.clone(),
                reward: t.reward,
                done: t.done,
                behavior_tag: t.behavior,
            };
            serde_json::to_writer(&mut out, &line)?;
            out.write_all(b"\n")?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Reads episodes back. Consecutive lines sharing an episode id form one
/// episode; next observations are taken from the following line, and the
/// final transition (never bootstrapped) reuses its own observation.
pub fn read_jsonl<R: BufRead>(input: R) -> Result<Vec<Episode>> {
    let mut episodes = Vec::new();
    let mut current: Vec<Line> = Vec::new();
    let flush = |lines: &mut Vec<Line>, out: &mut Vec<Episode>| -> Result<()> {
        if lines.is_empty() {
            return Ok(());
        }
        let behavior = lines[0].behavior_tag;
        let n = lines.len();
        let mut transitions = Vec::with_capacity(n);
        for i in 0..n {
            let next = if i + 1 < n {
                lines[i + 1].observation.clone()
            } else {
                lines[i].observation.clone()
            };
            let l = &lines[i];
            transitions.push(Transition {
                observation: l.observation.clone(),
                action: l.action.clone(),
                reward: l.reward,
                next_observation: next,
                done: l.done,
                episode_id: l.episode_id,
                step: l.step,
                behavior,
                success: false,
            });
        }
        let episode = Episode::new(transitions, behavior);
        if !episode.is_well_formed() {
            return Err(Error::DataGeneration(format!(
                "episode {} violates the sparse terminal reward format",
                lines[0].episode_id
            )));
        }
        out.push(episode);
        lines.clear();
        Ok(())
    };
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: Line = serde_json::from_str(&line)
            .map_err(|e| Error::DataGeneration(format!("line {}: {e}", n + 1)))?;
        if current.last().is_some_and(|l| l.episode_id != parsed.episode_id || l.done) {
            flush(&mut current, &mut episodes)?;
        }
        current.push(parsed);
    }
    flush(&mut current, &mut episodes)?;
    Ok(episodes)
}
