//! Mixed continuous/discrete actions, the actor's distribution head and the
//! weighted per-subaction imitation loss.
//!
//! The actor network emits a flat head vector laid out as
//! `[means.., raw variances.., logits of discrete subaction 0.., logits of 1.., ..]`.
//! Variances go through softplus with a floor, logits through softmax.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower bound added to every softplus variance.
pub const VARIANCE_FLOOR: f64 = 1e-4;
/// Probabilities below this are clamped inside the cross-entropy log.
pub const PROB_CLAMP: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContinuousSubaction {
    pub name: String,
    pub low: f64,
    pub high: f64,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscreteSubaction {
    pub name: String,
    pub cardinality: usize,
    pub weight: f64,
}

/// Structure of an action: bounded continuous subactions followed by
/// categorical subactions, each with an imitation-loss weight.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionSpec {
    #[serde(default)]
    pub continuous: Vec<ContinuousSubaction>,
    #[serde(default)]
    pub discrete: Vec<DiscreteSubaction>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixedAction {
    pub continuous: Vec<f64>,
    pub discrete: Vec<usize>,
}

/// Gaussian per continuous subaction, categorical per discrete one.
#[derive(Clone, Debug, PartialEq)]
pub struct ActorDistribution {
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
    pub probs: Vec<Vec<f64>>,
}

/// Gradient of a scalar loss with respect to an [`ActorDistribution`]'s parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct DistributionGrad {
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
    pub probs: Vec<Vec<f64>>,
}

impl DistributionGrad {
    pub fn zeros_like(dist: &ActorDistribution) -> Self {
        Self {
            means: vec![0.0; dist.means.len()],
            variances: vec![0.0; dist.variances.len()],
            probs: dist.probs.iter().map(|p| vec![0.0; p.len()]).collect(),
        }
    }
}

impl ActionSpec {
    pub fn new(continuous: Vec<ContinuousSubaction>, discrete: Vec<DiscreteSubaction>) -> Result<Self> {
        let spec = Self { continuous, discrete };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.continuous.is_empty() && self.discrete.is_empty() {
            return Err(Error::Config("action spec needs at least one subaction".into()));
        }
        for c in &self.continuous {
            if !(c.low.is_finite() && c.high.is_finite() && c.low < c.high) {
                return Err(Error::Config(format!(
                    "subaction {}: bounds must be finite with low < high",
                    c.name
                )));
            }
            if !(c.weight > 0.0 && c.weight.is_finite()) {
                return Err(Error::Config(format!("subaction {}: weight must be positive", c.name)));
            }
        }
        for d in &self.discrete {
            if d.cardinality == 0 {
                return Err(Error::Config(format!("subaction {}: cardinality must be ≥ 1", d.name)));
            }
            if !(d.weight > 0.0 && d.weight.is_finite()) {
                return Err(Error::Config(format!("subaction {}: weight must be positive", d.name)));
            }
        }
        Ok(())
    }

    pub fn subaction_count(&self) -> usize {
        self.continuous.len() + self.discrete.len()
    }

    /// Width of the critic's action encoding: raw continuous values plus one-hot discretes.
    pub fn encoded_dim(&self) -> usize {
        self.continuous.len() + self.discrete.iter().map(|d| d.cardinality).sum::<usize>()
    }

    /// Width of the actor's raw head.
    pub fn head_dim(&self) -> usize {
        2 * self.continuous.len() + self.discrete.iter().map(|d| d.cardinality).sum::<usize>()
    }

    pub fn conforms(&self, action: &MixedAction) -> Result<()> {
        if action.continuous.len() != self.continuous.len() {
            return Err(Error::shape("continuous subactions", self.continuous.len(), action.continuous.len()));
        }
        if action.discrete.len() != self.discrete.len() {
            return Err(Error::shape("discrete subactions", self.discrete.len(), action.discrete.len()));
        }
        for (v, c) in action.continuous.iter().zip(&self.continuous) {
            if !(v.is_finite() && *v >= c.low && *v <= c.high) {
                return Err(Error::Usage(format!(
                    "subaction {} = {v} outside [{}, {}]",
                    c.name, c.low, c.high
                )));
            }
        }
        for (i, d) in action.discrete.iter().zip(&self.discrete) {
            if *i >= d.cardinality {
                return Err(Error::Usage(format!(
                    "subaction {} index {i} ≥ cardinality {}",
                    d.name, d.cardinality
                )));
            }
        }
        Ok(())
    }

    /// Clips continuous entries into their bounds.
    pub fn clip(&self, action: &mut MixedAction) {
        for (v, c) in action.continuous.iter_mut().zip(&self.continuous) {
            *v = v.clamp(c.low, c.high);
        }
    }

    /// Appends the critic encoding of `action` to `out`.
    pub fn encode_into(&self, action: &MixedAction, out: &mut Vec<f64>) {
        out.extend_from_slice(&action.continuous);
        for (&idx, d) in action.discrete.iter().zip(&self.discrete) {
            let start = out.len();
            out.resize(start + d.cardinality, 0.0);
            out[start + idx] = 1.0;
        }
    }

    /// Interprets a raw actor head.
    pub fn distribution_from_head(&self, raw: &[f64]) -> Result<ActorDistribution> {
        if raw.len() != self.head_dim() {
            return Err(Error::shape("actor head", self.head_dim(), raw.len()));
        }
        let nc = self.continuous.len();
        let means = raw[..nc].to_vec();
        let variances = raw[nc..2 * nc]
            .iter()
            .map(|&r| softplus(r) + VARIANCE_FLOOR)
            .collect();
        let mut offset = 2 * nc;
        let mut probs = Vec::with_capacity(self.discrete.len());
        for d in &self.discrete {
            probs.push(softmax(&raw[offset..offset + d.cardinality]));
            offset += d.cardinality;
        }
        Ok(ActorDistribution {
            means,
            variances,
            probs,
        })
    }

    /// Chains a distribution-parameter gradient back through softplus and
    /// softmax onto the raw head.
    pub fn head_grad(&self, raw: &[f64], dist: &ActorDistribution, grad: &DistributionGrad) -> Result<Vec<f64>> {
        if raw.len() != self.head_dim() {
            return Err(Error::shape("actor head", self.head_dim(), raw.len()));
        }
        let nc = self.continuous.len();
        let mut out = vec![0.0; raw.len()];
        out[..nc].copy_from_slice(&grad.means);
        for k in 0..nc {
            out[nc + k] = grad.variances[k] * sigmoid(raw[nc + k]);
        }
        let mut offset = 2 * nc;
        for (p, gp) in dist.probs.iter().zip(&grad.probs) {
            let dot: f64 = p.iter().zip(gp).map(|(a, b)| a * b).sum();
            for j in 0..p.len() {
                out[offset + j] = p[j] * (gp[j] - dot);
            }
            offset += p.len();
        }
        Ok(out)
    }

    /// Deterministic action: clipped means and most likely indices.
    pub fn mode(&self, dist: &ActorDistribution) -> MixedAction {
        let mut a = MixedAction {
            continuous: dist.means.clone(),
            discrete: dist.probs.iter().map(|p| argmax(p)).collect(),
        };
        self.clip(&mut a);
        a
    }

    /// Draws an action: Gaussian continuous entries clipped to bounds and
    /// categorical discrete indices.
    pub fn sample<R: Rng + ?Sized>(&self, dist: &ActorDistribution, rng: &mut R) -> MixedAction {
        let continuous = dist
            .means
            .iter()
            .zip(&dist.variances)
            .zip(&self.continuous)
            .map(|((m, v), c)| {
                let z: f64 = rng.sample(StandardNormal);
                (m + v.sqrt() * z).clamp(c.low, c.high)
            })
            .collect();
        let discrete = dist.probs.iter().map(|p| sample_categorical(p, rng)).collect();
        MixedAction { continuous, discrete }
    }

    /// Uniform draw over the box and the index sets.
    pub fn uniform_random_action<R: Rng + ?Sized>(&self, rng: &mut R) -> MixedAction {
        MixedAction {
            continuous: self
                .continuous
                .iter()
                .map(|c| rng.random_range(c.low..=c.high))
                .collect(),
            discrete: self
                .discrete
                .iter()
                .map(|d| rng.random_range(0..d.cardinality))
                .collect(),
        }
    }
}

/// Weighted imitation loss
/// `Σ_k w_k (a_k − μ_k)² + Σ_d w_d · (−log p_d[a_d])`
/// with its gradient with respect to the distribution parameters. Target
/// probabilities below [`PROB_CLAMP`] are clamped inside the log, which
/// zeroes their gradient.
pub fn actor_loss(spec: &ActionSpec, target: &MixedAction, dist: &ActorDistribution) -> Result<(f64, DistributionGrad)> {
    spec.conforms(target)?;
    if dist.means.len() != spec.continuous.len() || dist.variances.len() != spec.continuous.len() {
        return Err(Error::shape("distribution means", spec.continuous.len(), dist.means.len()));
    }
    if dist.probs.len() != spec.discrete.len() {
        return Err(Error::shape("distribution categoricals", spec.discrete.len(), dist.probs.len()));
    }
    let mut grad = DistributionGrad::zeros_like(dist);
    let mut loss = 0.0;
    for (k, c) in spec.continuous.iter().enumerate() {
        let err = dist.means[k] - target.continuous[k];
        loss += c.weight * err * err;
        grad.means[k] = 2.0 * c.weight * err;
    }
    for (d, sub) in spec.discrete.iter().enumerate() {
        let idx = target.discrete[d];
        let p = dist.probs[d][idx];
        if p < PROB_CLAMP {
            loss += sub.weight * -PROB_CLAMP.ln();
        } else {
            loss += sub.weight * -p.ln();
            grad.probs[d][idx] = -sub.weight / p;
        }
    }
    Ok((loss, grad))
}

pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// First index of the largest entry.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

pub fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // Rounding left u above the cumulative sum: fall back to the last
    // index with nonzero mass.
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}
