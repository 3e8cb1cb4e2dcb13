use rand::Rng;

use super::config::{AgentConfig, TargetStrategy};
use super::nets::{critic_rows, observation_matrix, ActorNet, CriticNets, CriticView};
use crate::action::{actor_loss, ActionSpec, ActorDistribution, MixedAction};
use crate::cem::{cem_argmax, CemConfig};
use crate::env::Transition;
use crate::error::{Error, Result};
use crate::nn::{apply_gradients, Matrix, OptimizerState, ParamGrads};

/// Knobs of a Bellman backup besides the strategy.
#[derive(Clone, Debug)]
pub struct TargetParams<'a> {
    pub strategy: TargetStrategy,
    pub gamma: f64,
    pub n_adv_samples: usize,
    pub cem: &'a CemConfig,
}

/// Bellman target of one transition; see [`bellman_targets`].
pub fn bellman_target<R: Rng + ?Sized>(
    critic: &CriticNets,
    actor: &ActorNet,
    transition: &Transition,
    params: &TargetParams<'_>,
    rng: &mut R,
) -> Result<f64> {
    Ok(bellman_targets(critic, actor, std::slice::from_ref(transition), params, rng)?[0])
}

/// `r` for terminal transitions, otherwise `r + γ·Q̄(s', a*)` with the
/// next-state value chosen by the strategy: the mean over actor samples for
/// the expectation target, the CEM maximum for the max-Q family.
pub fn bellman_targets<R: Rng + ?Sized>(
    critic: &CriticNets,
    actor: &ActorNet,
    transitions: &[Transition],
    params: &TargetParams<'_>,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let spec = &actor.spec;
    let mut targets: Vec<f64> = transitions.iter().map(|t| t.reward).collect();
    let live: Vec<usize> = (0..transitions.len())
        .filter(|&i| !transitions[i].done)
        .collect();
    if live.is_empty() || params.gamma == 0.0 {
        return check_finite(targets);
    }
    let view = CriticView {
        net: &critic.target,
        spec,
    };
    let next_values: Vec<f64> = match params.strategy.cem_mode() {
        None => {
            let next = observation_matrix(live.iter().map(|&i| transitions[i].next_observation.as_slice()))?;
            let dists = actor.distributions(&next)?;
            let states: Vec<&[f64]> = live.iter().map(|&i| transitions[i].next_observation.as_slice()).collect();
            expected_values(&view, spec, &states, &dists, params.n_adv_samples, rng)?
        }
        Some(mode) => {
            let cem = params.cem.with_mode(mode);
            let proposals: Option<Vec<MixedAction>> = if params.strategy.uses_actor() {
                let next = observation_matrix(live.iter().map(|&i| transitions[i].next_observation.as_slice()))?;
                Some(actor.distributions(&next)?.iter().map(|d| spec.mode(d)).collect())
            } else {
                None
            };
            let mut values = Vec::with_capacity(live.len());
            for (j, &i) in live.iter().enumerate() {
                let proposal = proposals.as_ref().map(|p| &p[j]);
                let out = cem_argmax(&view, &transitions[i].next_observation, spec, &cem, proposal, rng)?;
                values.push(out.value);
            }
            values
        }
    };
    for (&i, v) in live.iter().zip(next_values) {
        targets[i] += params.gamma * v;
    }
    check_finite(targets)
}

fn check_finite(targets: Vec<f64>) -> Result<Vec<f64>> {
    if let Some(i) = targets.iter().position(|t| !t.is_finite()) {
        return Err(Error::Numeric(format!("Bellman target {} at batch row {i}", targets[i])));
    }
    Ok(targets)
}

/// Monte-Carlo mean of `Q(s, a)` over `n` actions drawn from each
/// distribution, evaluated in a single batched forward pass.
fn expected_values<R: Rng + ?Sized>(
    view: &CriticView<'_>,
    spec: &ActionSpec,
    states: &[&[f64]],
    dists: &[ActorDistribution],
    n: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let samples: Vec<MixedAction> = dists
        .iter()
        .flat_map(|d| (0..n).map(|_| spec.sample(d, rng)).collect::<Vec<_>>())
        .collect();
    let rows = critic_rows(
        spec,
        samples.iter().enumerate().map(|(k, a)| (states[k / n], a)),
    )?;
    let q = view.net.forward_batch(&rows)?;
    Ok(q.as_slice().chunks(n).map(|c| c.iter().sum::<f64>() / n as f64).collect())
}

/// One regression step of the online critic toward `targets`, followed by
/// the Polyak update of the target network. Returns the mean squared
/// Bellman error measured before the step.
pub fn critic_update(
    critic: &mut CriticNets,
    spec: &ActionSpec,
    transitions: &[Transition],
    targets: &[f64],
    optimizer: &mut OptimizerState,
) -> Result<f64> {
    if transitions.len() != targets.len() {
        return Err(Error::shape("critic targets", transitions.len(), targets.len()));
    }
    if transitions.is_empty() {
        return Err(Error::Usage("critic update on an empty batch".into()));
    }
    let rows = critic_rows(
        spec,
        transitions.iter().map(|t| (t.observation.as_slice(), &t.action)),
    )?;
    let trace = critic.online.forward_trace(&rows)?;
    let n = transitions.len() as f64;
    let residuals: Vec<f64> = trace
        .output()
        .as_slice()
        .iter()
        .zip(targets)
        .map(|(q, y)| q - y)
        .collect();
    let loss = residuals.iter().map(|r| r * r).sum::<f64>() / n;
    if !loss.is_finite() {
        return Err(Error::Numeric(format!("critic loss {loss}")));
    }
    let upstream = Matrix::from_vec(residuals.len(), 1, residuals.iter().map(|r| 2.0 * r / n).collect())?;
    let (grads, _) = critic.online.backward_batch(&trace, &upstream)?;
    apply_gradients(&mut critic.online, &grads, optimizer)?;
    critic.polyak()?;
    Ok(loss)
}

/// `Q̄(s, a_data) − mean_j Q̄(s, a_j)` with `a_j` drawn from the actor at `s`.
pub fn advantage<R: Rng + ?Sized>(
    critic: &CriticNets,
    actor: &ActorNet,
    transition: &Transition,
    n_adv_samples: usize,
    rng: &mut R,
) -> Result<f64> {
    let dist = actor.distribution(&transition.observation)?;
    Ok(advantages(critic, actor, std::slice::from_ref(transition), &[dist], n_adv_samples, rng)?[0])
}

/// Batched [`advantage`] given the actor's distributions at each observation.
pub fn advantages<R: Rng + ?Sized>(
    critic: &CriticNets,
    actor: &ActorNet,
    transitions: &[Transition],
    dists: &[ActorDistribution],
    n_adv_samples: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if n_adv_samples == 0 {
        return Err(Error::Usage("n_adv_samples must be ≥ 1".into()));
    }
    if dists.len() != transitions.len() {
        return Err(Error::shape("advantage distributions", transitions.len(), dists.len()));
    }
    if transitions.is_empty() {
        return Ok(Vec::new());
    }
    let spec = &actor.spec;
    let view = CriticView {
        net: &critic.target,
        spec,
    };
    let data_rows = critic_rows(
        spec,
        transitions.iter().map(|t| (t.observation.as_slice(), &t.action)),
    )?;
    let q_data = critic.target.forward_batch(&data_rows)?;
    let states: Vec<&[f64]> = transitions.iter().map(|t| t.observation.as_slice()).collect();
    let baseline = expected_values(&view, spec, &states, dists, n_adv_samples, rng)?;
    Ok(q_data.as_slice().iter().zip(baseline).map(|(q, b)| q - b).collect())
}

/// `min(exp(adv/λ), clip)`, computed in log space so large advantages
/// cannot overflow before clipping. Underflow is floored at the smallest
/// normal float.
pub fn advantage_weight(adv: f64, lambda: f64, adv_clip: f64) -> Result<f64> {
    let log_w = adv / lambda;
    if log_w.is_nan() {
        return Err(Error::Numeric(format!("advantage weight from advantage {adv}")));
    }
    if log_w >= adv_clip.ln() {
        return Ok(adv_clip);
    }
    // Keep the weight strictly positive when exp underflows.
    Ok(log_w.max(f64::MIN_POSITIVE.ln()).exp())
}

/// Gradient of `(1/B)·Σ_i w_i·L_A(a_i, A_φ(s_i))` with respect to the actor
/// parameters, with `w_i = min(exp(adv_i/λ), clip)`. With `fit_variance`
/// each sample adds a Gaussian likelihood term for the variances, mean
/// held fixed. Returns the weighted imitation loss and the gradient.
pub fn weighted_actor_gradients(
    actor: &ActorNet,
    transitions: &[Transition],
    advantages: &[f64],
    config: &AgentConfig,
) -> Result<(f64, ParamGrads)> {
    if advantages.len() != transitions.len() {
        return Err(Error::shape("actor advantages", transitions.len(), advantages.len()));
    }
    let spec = &actor.spec;
    let obs = observation_matrix(transitions.iter().map(|t| t.observation.as_slice()))?;
    let trace = actor.net.forward_trace(&obs)?;
    let heads = trace.output();
    let n = transitions.len() as f64;
    let mut upstream = Matrix::zeros(transitions.len(), spec.head_dim());
    let mut loss = 0.0;
    for (i, (t, &adv)) in transitions.iter().zip(advantages).enumerate() {
        let w = advantage_weight(adv, config.lambda, config.adv_clip)?;
        let raw = heads.row(i);
        let dist = spec.distribution_from_head(raw)?;
        let (l, mut g) = actor_loss(spec, &t.action, &dist)?;
        loss += w * l;
        let scale = w / n;
        g.means.iter_mut().for_each(|v| *v *= scale);
        g.probs.iter_mut().flatten().for_each(|v| *v *= scale);
        for (k, c) in spec.continuous.iter().enumerate() {
            g.variances[k] = if config.fit_variance {
                let v = dist.variances[k];
                let e2 = (t.action.continuous[k] - dist.means[k]).powi(2);
                scale * c.weight * 0.5 * (1.0 / v - e2 / (v * v))
            } else {
                0.0
            };
        }
        upstream.row_mut(i).copy_from_slice(&spec.head_grad(raw, &dist, &g)?);
    }
    let (grads, _) = actor.net.backward_batch(&trace, &upstream)?;
    Ok((loss / n, grads))
}

/// Advantage-weighted imitation step. With positive filtering every
/// transition must come from a successful episode; an empty batch is a
/// no-op. Returns the weighted imitation loss before the step.
pub fn actor_update<R: Rng + ?Sized>(
    actor: &mut ActorNet,
    critic: &CriticNets,
    transitions: &[Transition],
    config: &AgentConfig,
    optimizer: &mut OptimizerState,
    rng: &mut R,
) -> Result<f64> {
    if transitions.is_empty() {
        return Ok(0.0);
    }
    if config.positive_filtering {
        if let Some(t) = transitions.iter().find(|t| !t.success) {
            return Err(Error::Usage(format!(
                "positive-filtered actor batch holds a failed-episode transition (episode {}, step {})",
                t.episode_id, t.step
            )));
        }
    }
    let obs = observation_matrix(transitions.iter().map(|t| t.observation.as_slice()))?;
    let dists = actor.distributions(&obs)?;
    let adv = advantages(critic, actor, transitions, &dists, config.n_adv_samples, rng)?;
    let (loss, grads) = weighted_actor_gradients(actor, transitions, &adv, config)?;
    if !loss.is_finite() {
        return Err(Error::Numeric(format!("actor loss {loss}")));
    }
    apply_gradients(&mut actor.net, &grads, optimizer)?;
    Ok(loss)
}
