use rand::Rng;

use crate::action::{ActionSpec, ActorDistribution, MixedAction};
use crate::cem::QEvaluator;
use crate::error::{Error, Result};
use crate::nn::{Activation, Matrix, Mlp};

/// Online and target action-value networks. The input is the observation
/// followed by the action encoding (continuous raw, discrete one-hot).
#[derive(Clone, Debug, PartialEq)]
pub struct CriticNets {
    pub online: Mlp,
    pub target: Mlp,
    pub tau: f64,
}

impl CriticNets {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, spec: &ActionSpec, hidden: &[usize], tau: f64, rng: &mut R) -> Result<Self> {
        if !(tau > 0.0 && tau <= 1.0) {
            return Err(Error::Config(format!("polyak tau {tau} outside (0, 1]")));
        }
        let mut dims = vec![obs_dim + spec.encoded_dim()];
        dims.extend_from_slice(hidden);
        dims.push(1);
        let online = Mlp::new(&dims, Activation::Relu, rng)?;
        Ok(Self {
            target: online.clone(),
            online,
            tau,
        })
    }

    /// Replaces the target with `τ·online + (1−τ)·target`.
    pub fn polyak(&mut self) -> Result<()> {
        self.target.polyak_toward(&self.online, self.tau)
    }
}

/// Builds critic input rows `obs ++ encode(action)`.
pub fn critic_rows<'a>(
    spec: &ActionSpec,
    pairs: impl ExactSizeIterator<Item = (&'a [f64], &'a MixedAction)>,
) -> Result<Matrix> {
    let n = pairs.len();
    let mut data = Vec::new();
    let mut width = None;
    for (obs, action) in pairs {
        let start = data.len();
        data.extend_from_slice(obs);
        spec.encode_into(action, &mut data);
        let w = data.len() - start;
        match width {
            None => width = Some(w),
            Some(expected) if expected != w => return Err(Error::shape("critic row", expected, w)),
            _ => {}
        }
    }
    Matrix::from_vec(n, width.unwrap_or(0), data)
}

/// Batched evaluation of one critic network.
pub struct CriticView<'a> {
    pub net: &'a Mlp,
    pub spec: &'a ActionSpec,
}

impl CriticView<'_> {
    pub fn q(&self, obs: &[f64], action: &MixedAction) -> Result<f64> {
        Ok(self.q_values(obs, std::slice::from_ref(action))?[0])
    }
}

impl QEvaluator for CriticView<'_> {
    fn q_values(&self, state: &[f64], actions: &[MixedAction]) -> Result<Vec<f64>> {
        if actions.is_empty() {
            return Ok(Vec::new());
        }
        let rows = critic_rows(self.spec, actions.iter().map(|a| (state, a)))?;
        if rows.cols() != self.net.input_dim() {
            return Err(Error::shape("critic input", self.net.input_dim(), rows.cols()));
        }
        Ok(self.net.forward_batch(&rows)?.as_slice().to_vec())
    }
}

/// Observation → distribution head. No action input.
#[derive(Clone, Debug, PartialEq)]
pub struct ActorNet {
    pub net: Mlp,
    pub spec: ActionSpec,
}

impl ActorNet {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, spec: &ActionSpec, hidden: &[usize], rng: &mut R) -> Result<Self> {
        let mut dims = vec![obs_dim];
        dims.extend_from_slice(hidden);
        dims.push(spec.head_dim());
        Ok(Self {
            net: Mlp::new(&dims, Activation::Relu, rng)?,
            spec: spec.clone(),
        })
    }

    pub fn from_net(net: Mlp, spec: ActionSpec) -> Result<Self> {
        if net.output_dim() != spec.head_dim() {
            return Err(Error::shape("actor head", spec.head_dim(), net.output_dim()));
        }
        Ok(Self { net, spec })
    }

    pub fn distribution(&self, obs: &[f64]) -> Result<ActorDistribution> {
        self.spec.distribution_from_head(&self.net.forward(obs)?)
    }

    /// One distribution per observation row.
    pub fn distributions(&self, observations: &Matrix) -> Result<Vec<ActorDistribution>> {
        let heads = self.net.forward_batch(observations)?;
        (0..heads.rows())
            .map(|r| self.spec.distribution_from_head(heads.row(r)))
            .collect()
    }

    pub fn mode(&self, obs: &[f64]) -> Result<MixedAction> {
        Ok(self.spec.mode(&self.distribution(obs)?))
    }

    pub fn sample<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R) -> Result<MixedAction> {
        Ok(self.spec.sample(&self.distribution(obs)?, rng))
    }
}

pub(crate) fn observation_matrix<'a>(observations: impl ExactSizeIterator<Item = &'a [f64]>) -> Result<Matrix> {
    let n = observations.len();
    let mut data = Vec::new();
    let mut width = 0;
    for (i, o) in observations.enumerate() {
        if i == 0 {
            width = o.len();
        } else if o.len() != width {
            return Err(Error::shape("observation batch", width, o.len()));
        }
        data.extend_from_slice(o);
    }
    Matrix::from_vec(n, width, data)
}
