//! Replay storage split by episode outcome.
//!
//! Transitions from successful episodes live in the positive partition,
//! everything else in the negative one. Critic batches draw half of their
//! rows from each partition; actor batches draw only from the positive one.
//! All sampling is uniform with replacement.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{Episode, Transition};
use crate::error::{Error, Result};

pub const DEFAULT_PARTITION_CAPACITY: usize = 200_000;

/// Which positive transitions may train the actor.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActorFilter {
    /// Every transition of a successful episode.
    #[default]
    EpisodeSuccess,
    /// Only transitions that themselves received reward 1.
    FinalReward,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub transitions: Vec<Transition>,
    /// `(from positive partition, from negative partition)`.
    pub source_mix: (usize, usize),
}

impl Batch {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }
}

#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    positive: VecDeque<Transition>,
    negative: VecDeque<Transition>,
    capacity: usize,
    inserted: (u64, u64),
}

impl Default for ReplayBuffer {
    fn default() -> Self {
        Self::new(DEFAULT_PARTITION_CAPACITY)
    }
}

impl ReplayBuffer {
    /// `capacity` applies to each partition separately.
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            positive: VecDeque::new(),
            negative: VecDeque::new(),
            capacity,
            inserted: (0, 0),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn positives(&self) -> &VecDeque<Transition> {
        &self.positive
    }

    pub fn negatives(&self) -> &VecDeque<Transition> {
        &self.negative
    }

    pub fn len(&self) -> usize {
        self.positive.len() + self.negative.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Lifetime insertion counts `(positive, negative)`.
    pub fn inserted(&self) -> (u64, u64) {
        self.inserted
    }

    /// Routes every transition by the episode's success flag, evicting the
    /// oldest entries of a full partition.
    pub fn insert_episode(&mut self, episode: &Episode) {
        let (part, counter) = if episode.success {
            (&mut self.positive, &mut self.inserted.0)
        } else {
            (&mut self.negative, &mut self.inserted.1)
        };
        for t in &episode.transitions {
            if part.len() == self.capacity {
                part.pop_front();
            }
            let mut t = t.clone();
            t.success = episode.success;
            part.push_back(t);
            *counter += 1;
        }
    }

    /// `⌈n/2⌉` positive rows and the rest negative; if one partition is
    /// empty the whole batch comes from the other.
    pub fn sample_critic_batch<R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Result<Batch> {
        if self.is_empty() {
            return Err(Error::EmptyBuffer("critic batch requested from an empty buffer"));
        }
        let n_pos = if self.negative.is_empty() {
            batch_size
        } else if self.positive.is_empty() {
            0
        } else {
            batch_size.div_ceil(2)
        };
        let n_neg = batch_size - n_pos;
        let mut transitions = Vec::with_capacity(batch_size);
        draw(&self.positive, n_pos, rng, &mut transitions);
        draw(&self.negative, n_neg, rng, &mut transitions);
        Ok(Batch {
            transitions,
            source_mix: (n_pos, n_neg),
        })
    }

    /// Uniform over all stored transitions regardless of outcome.
    pub fn sample_uniform_batch<R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Result<Batch> {
        let total = self.len();
        if total == 0 {
            return Err(Error::EmptyBuffer("uniform batch requested from an empty buffer"));
        }
        let mut transitions = Vec::with_capacity(batch_size);
        let mut mix = (0, 0);
        for _ in 0..batch_size {
            let i = rng.random_range(0..total);
            if i < self.positive.len() {
                transitions.push(self.positive[i].clone());
                mix.0 += 1;
            } else {
                transitions.push(self.negative[i - self.positive.len()].clone());
                mix.1 += 1;
            }
        }
        Ok(Batch {
            transitions,
            source_mix: mix,
        })
    }

    /// Positive-partition batch for the actor.
    pub fn sample_actor_batch<R: Rng + ?Sized>(&self, batch_size: usize, filter: ActorFilter, rng: &mut R) -> Result<Batch> {
        let mut transitions = Vec::with_capacity(batch_size);
        match filter {
            ActorFilter::EpisodeSuccess => {
                if self.positive.is_empty() {
                    return Err(Error::EmptyBuffer("actor batch requested with no positive transitions"));
                }
                draw(&self.positive, batch_size, rng, &mut transitions);
            }
            ActorFilter::FinalReward => {
                let rewarded: Vec<&Transition> = self.positive.iter().filter(|t| t.reward == 1.0).collect();
                if rewarded.is_empty() {
                    return Err(Error::EmptyBuffer("actor batch requested with no rewarded transitions"));
                }
                for _ in 0..batch_size {
                    transitions.push(rewarded[rng.random_range(0..rewarded.len())].clone());
                }
            }
        }
        Ok(Batch {
            transitions,
            source_mix: (batch_size, 0),
        })
    }
}

fn draw<R: Rng + ?Sized>(part: &VecDeque<Transition>, n: usize, rng: &mut R, out: &mut Vec<Transition>) {
    if part.is_empty() {
        return;
    }
    for _ in 0..n {
        out.push(part[rng.random_range(0..part.len())].clone());
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action::MixedAction;
    use crate::env::BehaviorTag;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn episode(id: u64, len: usize, success: bool) -> Episode {
        let transitions = (0..len)
            .map(|step| {
                let last = step + 1 == len;
                Transition {
                    observation: vec![id as f64, step as f64],
                    action: MixedAction {
                        continuous: vec![0.0],
                        discrete: vec![last as usize],
                    },
                    reward: if last && success { 1.0 } else { 0.0 },
                    next_observation: vec![id as f64, step as f64 + 1.0],
                    done: last,
                    episode_id: id,
                    step,
                    behavior: BehaviorTag::Demo,
                    success,
                }
            })
            .collect();
        Episode::new(transitions, BehaviorTag::Demo)
    }

    #[test]
    fn routing_by_episode_outcome() {
        let mut buf = ReplayBuffer::new(100);
        buf.insert_episode(&episode(0, 5, true));
        assert_eq!((buf.positives().len(), buf.negatives().len()), (5, 0));
        buf.insert_episode(&episode(1, 3, false));
        assert_eq!((buf.positives().len(), buf.negatives().len()), (5, 3));
        assert!(buf.positives().iter().all(|t| t.success));
        assert!(buf.negatives().iter().all(|t| !t.success));
    }

    #[test]
    fn fifo_eviction_drops_oldest() {
        let mut buf = ReplayBuffer::new(4);
        for id in 0..3 {
            buf.insert_episode(&episode(id, 2, true));
        }
        let ids: Vec<(u64, usize)> = buf.positives().iter().map(|t| (t.episode_id, t.step)).collect();
        assert_eq!(ids, vec![(1, 0), (1, 1), (2, 0), (2, 1)]);
        assert_eq!(buf.inserted(), (6, 0));
    }

    #[test]
    fn balanced_and_fallback_mixes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut buf = ReplayBuffer::new(1000);
        for id in 0..2 {
            buf.insert_episode(&episode(id, 5, true));
        }
        assert_eq!(buf.sample_critic_batch(64, &mut rng).unwrap().source_mix, (64, 0));
        assert_eq!(buf.sample_critic_batch(1, &mut rng).unwrap().source_mix, (1, 0));
        for id in 2..20 {
            buf.insert_episode(&episode(id, 5, false));
        }
        let b = buf.sample_critic_batch(64, &mut rng).unwrap();
        assert_eq!(b.source_mix, (32, 32));
        assert_eq!(b.transitions.iter().filter(|t| t.success).count(), 32);
        assert_eq!(buf.sample_critic_batch(1, &mut rng).unwrap().source_mix, (1, 0));
        assert_eq!(buf.sample_critic_batch(7, &mut rng).unwrap().source_mix, (4, 3));
    }

    #[test]
    fn negatives_only_fallback() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut buf = ReplayBuffer::new(100);
        buf.insert_episode(&episode(0, 3, false));
        assert_eq!(buf.sample_critic_batch(8, &mut rng).unwrap().source_mix, (0, 8));
        assert!(matches!(
            buf.sample_actor_batch(8, ActorFilter::EpisodeSuccess, &mut rng),
            Err(Error::EmptyBuffer(_))
        ));
    }

    #[test]
    fn empty_buffer_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let buf = ReplayBuffer::new(10);
        assert!(matches!(buf.sample_critic_batch(4, &mut rng), Err(Error::EmptyBuffer(_))));
        assert!(matches!(buf.sample_uniform_batch(4, &mut rng), Err(Error::EmptyBuffer(_))));
    }

    #[test]
    fn actor_batches_are_positive_with_replacement() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut buf = ReplayBuffer::new(100);
        buf.insert_episode(&episode(0, 3, true));
        buf.insert_episode(&episode(1, 6, false));
        let b = buf.sample_actor_batch(8, ActorFilter::EpisodeSuccess, &mut rng).unwrap();
        assert_eq!(b.len(), 8);
        assert!(b.transitions.iter().all(|t| t.success));
        let finals = buf.sample_actor_batch(8, ActorFilter::FinalReward, &mut rng).unwrap();
        assert!(finals.transitions.iter().all(|t| t.reward == 1.0));
    }

    #[test]
    fn actor_sampling_is_uniform_over_positives() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut buf = ReplayBuffer::new(100);
        buf.insert_episode(&episode(0, 10, true));
        let draws = 50_000;
        let mut counts = [0usize; 10];
        let b = buf.sample_actor_batch(draws, ActorFilter::EpisodeSuccess, &mut rng).unwrap();
        for t in &b.transitions {
            counts[t.step] += 1;
        }
        let expected = draws as f64 / 10.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // χ²₀.₉₉ with 9 degrees of freedom.
        assert!(chi2 < 21.666, "chi-square {chi2}");
    }

    proptest::proptest! {
        #[test]
        fn fuzzed_insert_sample_cycles_keep_the_contract(
            seed in 0u64..1_000,
            ops in proptest::collection::vec((1usize..8, proptest::bool::ANY, 1usize..40), 1..60),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut buf = ReplayBuffer::new(25);
            for (id, &(len, success, batch)) in ops.iter().enumerate() {
                buf.insert_episode(&episode(id as u64, len, success));
                proptest::prop_assert!(buf.positives().len() <= 25 && buf.negatives().len() <= 25);
                let b = buf.sample_critic_batch(batch, &mut rng).unwrap();
                let (p, n) = b.source_mix;
                proptest::prop_assert_eq!(p + n, batch);
                proptest::prop_assert_eq!(b.transitions.iter().filter(|t| t.success).count(), p);
                if !buf.positives().is_empty() && !buf.negatives().is_empty() {
                    proptest::prop_assert_eq!(p, batch.div_ceil(2));
                }
                if !buf.positives().is_empty() {
                    let a = buf.sample_actor_batch(batch, ActorFilter::EpisodeSuccess, &mut rng).unwrap();
                    proptest::prop_assert!(a.transitions.iter().all(|t| t.success));
                }
            }
        }
    }
}
