//! Cross-entropy maximization of an action-value function over mixed actions.
//!
//! Continuous subactions are searched with a diagonal Gaussian (clipped to
//! bounds), discrete ones with independent categoricals. Each iteration keeps
//! the top `elites` candidates and refits: elite mean/std for Gaussians
//! (std floored), smoothed elite frequencies for categoricals. The result is
//! the best candidate evaluated in any iteration.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::action::{sample_categorical, ActionSpec, MixedAction};
use crate::error::{Error, Result};

pub const STD_FLOOR: f64 = 1e-3;
pub const DISCRETE_SMOOTHING: f64 = 1e-3;

/// How an actor proposal participates in the search.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CemMode {
    #[default]
    Plain,
    /// The proposal's continuous values seed the first iteration's mean.
    ActorMean,
    /// The proposal is added to every iteration's population.
    ActorCandidate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CemConfig {
    pub iterations: usize,
    pub population: usize,
    pub elites: usize,
    /// Per continuous subaction; defaults to a quarter of the bound range.
    pub initial_std: Option<Vec<f64>>,
    pub mode: CemMode,
}

impl Default for CemConfig {
    fn default() -> Self {
        Self {
            iterations: 3,
            population: 64,
            elites: 6,
            initial_std: None,
            mode: CemMode::Plain,
        }
    }
}

impl CemConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config("cem.iterations must be ≥ 1".into()));
        }
        if self.elites == 0 || self.elites > self.population {
            return Err(Error::Config("cem.elites must lie in [1, population]".into()));
        }
        if let Some(std) = &self.initial_std {
            if std.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
                return Err(Error::Config("cem.initial_std entries must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn with_mode(&self, mode: CemMode) -> Self {
        Self {
            mode,
            ..self.clone()
        }
    }
}

/// Batched action-value oracle.
pub trait QEvaluator {
    fn q_values(&self, state: &[f64], actions: &[MixedAction]) -> Result<Vec<f64>>;
}

/// Wraps a scalar closure as a [`QEvaluator`].
pub struct FnEvaluator<F>(pub F);

impl<F: Fn(&[f64], &MixedAction) -> f64> QEvaluator for FnEvaluator<F> {
    fn q_values(&self, state: &[f64], actions: &[MixedAction]) -> Result<Vec<f64>> {
        Ok(actions.iter().map(|a| (self.0)(state, a)).collect())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CemOutcome {
    pub action: MixedAction,
    pub value: f64,
    /// Best value seen after each iteration.
    pub running_best: Vec<f64>,
    pub evaluations: usize,
}

pub fn cem_argmax<Q, R>(
    q: &Q,
    state: &[f64],
    spec: &ActionSpec,
    config: &CemConfig,
    proposal: Option<&MixedAction>,
    rng: &mut R,
) -> Result<CemOutcome>
where
    Q: QEvaluator + ?Sized,
    R: Rng + ?Sized,
{
    config.validate()?;
    match (config.mode, proposal) {
        (CemMode::Plain, Some(_)) => {
            return Err(Error::Usage("plain CEM does not take an actor proposal".into()));
        }
        (CemMode::ActorMean | CemMode::ActorCandidate, None) => {
            return Err(Error::Usage(format!("{:?} CEM requires an actor proposal", config.mode)));
        }
        _ => {}
    }
    if let Some(p) = proposal {
        spec.conforms(p)?;
    }

    let nc = spec.continuous.len();
    let mut mean: Vec<f64> = spec.continuous.iter().map(|c| 0.5 * (c.low + c.high)).collect();
    let mut std: Vec<f64> = match &config.initial_std {
        Some(s) if s.len() == nc => s.clone(),
        Some(s) => return Err(Error::shape("cem.initial_std", nc, s.len())),
        None => spec.continuous.iter().map(|c| 0.25 * (c.high - c.low)).collect(),
    };
    if let (CemMode::ActorMean, Some(p)) = (config.mode, proposal) {
        mean.copy_from_slice(&p.continuous);
    }
    let mut probs: Vec<Vec<f64>> = spec
        .discrete
        .iter()
        .map(|d| vec![1.0 / d.cardinality as f64; d.cardinality])
        .collect();

    let mut best: Option<(MixedAction, f64)> = None;
    let mut running_best = Vec::with_capacity(config.iterations);
    let mut evaluations = 0;
    let mut population = Vec::with_capacity(config.population + 1);

    for _ in 0..config.iterations {
        population.clear();
        for _ in 0..config.population {
            let continuous = (0..nc)
                .map(|k| {
                    let z: f64 = rng.sample(StandardNormal);
                    let c = &spec.continuous[k];
                    (mean[k] + std[k] * z).clamp(c.low, c.high)
                })
                .collect();
            let discrete = probs.iter().map(|p| sample_categorical(p, rng)).collect();
            population.push(MixedAction { continuous, discrete });
        }
        if let (CemMode::ActorCandidate, Some(p)) = (config.mode, proposal) {
            population.push(p.clone());
        }

        let values = q.q_values(state, &population)?;
        if values.len() != population.len() {
            return Err(Error::shape("cem q values", population.len(), values.len()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "q value {} for CEM candidate {i} ({:?})",
                values[i], population[i]
            )));
        }
        evaluations += values.len();

        let mut order: Vec<usize> = (0..population.len()).collect();
        order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
        let top = order[0];
        if best.as_ref().is_none_or(|(_, v)| values[top] > *v) {
            best = Some((population[top].clone(), values[top]));
        }
        running_best.push(best.as_ref().map(|b| b.1).expect("set above"));

        let elites = &order[..config.elites.min(order.len())];
        let n = elites.len() as f64;
        for k in 0..nc {
            let m = elites.iter().map(|&i| population[i].continuous[k]).sum::<f64>() / n;
            let var = elites
                .iter()
                .map(|&i| (population[i].continuous[k] - m).powi(2))
                .sum::<f64>()
                / n;
            mean[k] = m;
            std[k] = var.sqrt().max(STD_FLOOR);
        }
        for (d, p) in probs.iter_mut().enumerate() {
            let card = p.len() as f64;
            p.iter_mut().for_each(|v| *v = DISCRETE_SMOOTHING);
            for &i in elites {
                p[population[i].discrete[d]] += 1.0;
            }
            let total = n + card * DISCRETE_SMOOTHING;
            p.iter_mut().for_each(|v| *v /= total);
        }
    }

    let (action, value) = best.expect("at least one iteration ran");
    Ok(CemOutcome {
        action,
        value,
        running_best,
        evaluations,
    })
}

/// The implicit critic policy: plain CEM on the given evaluator.
pub fn cem_policy_action<Q, R>(q: &Q, state: &[f64], spec: &ActionSpec, config: &CemConfig, rng: &mut R) -> Result<MixedAction>
where
    Q: QEvaluator + ?Sized,
    R: Rng + ?Sized,
{
    let plain = config.with_mode(CemMode::Plain);
    Ok(cem_argmax(q, state, spec, &plain, None, rng)?.action)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action::{ContinuousSubaction, DiscreteSubaction};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn one_dim() -> ActionSpec {
        ActionSpec::new(
            vec![ContinuousSubaction {
                name: "a".into(),
                low: -1.0,
                high: 1.0,
                weight: 1.0,
            }],
            vec![],
        )
        .unwrap()
    }

    fn discrete_only(card: usize) -> ActionSpec {
        ActionSpec::new(
            vec![],
            vec![DiscreteSubaction {
                name: "d".into(),
                cardinality: card,
                weight: 1.0,
            }],
        )
        .unwrap()
    }

    #[test]
    fn quadratic_matches_grid_search() {
        let spec = one_dim();
        let q = FnEvaluator(|_: &[f64], a: &MixedAction| -(a.continuous[0] - 0.3).powi(2));
        // Grid oracle over 10,001 points of [-1, 1].
        let grid_best = (0..=10_000)
            .map(|i| -1.0 + 2.0 * i as f64 / 10_000.0)
            .max_by(|a, b| (-(a - 0.3f64).powi(2)).total_cmp(&(-(b - 0.3f64).powi(2))))
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = cem_argmax(&q, &[], &spec, &CemConfig::default(), None, &mut rng).unwrap();
        assert!((out.action.continuous[0] - 0.3).abs() <= 0.05);
        assert!((out.action.continuous[0] - grid_best).abs() <= 0.05);
    }

    #[test]
    fn candidate_injection_never_regresses() {
        let spec = one_dim();
        let q = FnEvaluator(|_: &[f64], a: &MixedAction| -(a.continuous[0] - 0.77).abs());
        let proposal = MixedAction {
            continuous: vec![0.77],
            discrete: vec![],
        };
        let cfg = CemConfig {
            mode: CemMode::ActorCandidate,
            ..CemConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let out = cem_argmax(&q, &[], &spec, &cfg, Some(&proposal), &mut rng).unwrap();
        assert!(out.value >= 0.0);
        assert_eq!(out.evaluations, 3 * 65);
    }

    #[test]
    fn single_candidate_is_returned() {
        let spec = one_dim();
        let q = FnEvaluator(|_: &[f64], a: &MixedAction| a.continuous[0]);
        let cfg = CemConfig {
            iterations: 1,
            population: 1,
            elites: 1,
            ..CemConfig::default()
        };
        let out = cem_argmax(&q, &[], &spec, &cfg, None, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        // Replay the single draw the search made.
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let z: f64 = rng.sample(StandardNormal);
        assert_eq!(out.action.continuous[0], (0.5 * z).clamp(-1.0, 1.0));
        assert_eq!(out.evaluations, 1);
    }

    #[test]
    fn proposal_contract() {
        let spec = one_dim();
        let q = FnEvaluator(|_: &[f64], _: &MixedAction| 0.0);
        let p = MixedAction {
            continuous: vec![0.0],
            discrete: vec![],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(matches!(
            cem_argmax(&q, &[], &spec, &CemConfig::default(), Some(&p), &mut rng),
            Err(Error::Usage(_))
        ));
        let cfg = CemConfig {
            mode: CemMode::ActorMean,
            ..CemConfig::default()
        };
        assert!(matches!(cem_argmax(&q, &[], &spec, &cfg, None, &mut rng), Err(Error::Usage(_))));
    }

    #[test]
    fn non_finite_value_names_candidate() {
        let spec = one_dim();
        let q = FnEvaluator(|_: &[f64], _: &MixedAction| f64::NAN);
        let err = cem_argmax(&q, &[], &spec, &CemConfig::default(), None, &mut ChaCha8Rng::seed_from_u64(4)).unwrap_err();
        assert!(err.is_numeric());
        assert!(err.to_string().contains("candidate 0"));
    }

    #[test]
    fn invalid_configs_rejected() {
        for cfg in [
            CemConfig {
                iterations: 0,
                ..CemConfig::default()
            },
            CemConfig {
                elites: 0,
                ..CemConfig::default()
            },
            CemConfig {
                elites: 65,
                ..CemConfig::default()
            },
        ] {
            assert!(cfg.validate().is_err());
        }
    }

    #[test]
    fn constant_critic_policy_is_seed_deterministic() {
        let spec = one_dim();
        let q = FnEvaluator(|_: &[f64], _: &MixedAction| 1.0);
        let cfg = CemConfig::default();
        let a = cem_policy_action(&q, &[], &spec, &cfg, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = cem_policy_action(&q, &[], &spec, &cfg, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        spec.conforms(&a).unwrap();
    }

    #[test]
    fn bump_critic_policy_finds_peak() {
        let spec = one_dim();
        let q = FnEvaluator(|_: &[f64], a: &MixedAction| (-((a.continuous[0] + 0.45) / 0.2).powi(2)).exp());
        let a = cem_policy_action(&q, &[], &spec, &CemConfig::default(), &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert!((a.continuous[0] + 0.45).abs() <= 0.05, "{a:?}");
    }

    #[test]
    fn discrete_refit_concentrates_on_best_index() {
        let spec = discrete_only(4);
        let q = FnEvaluator(|_: &[f64], a: &MixedAction| if a.discrete[0] == 2 { 10.0 } else { 0.0 });
        let hits = (0..100)
            .filter(|&s| {
                let a = cem_policy_action(&q, &[], &spec, &CemConfig::default(), &mut ChaCha8Rng::seed_from_u64(s)).unwrap();
                a.discrete[0] == 2
            })
            .count();
        assert!(hits >= 99);
    }

    proptest! {
        #[test]
        fn running_best_monotone_and_bounds_respected(seed in 0u64..500, c0 in -1.0f64..1.0, c1 in -2.0f64..2.0) {
            let spec = ActionSpec::new(
                vec![
                    ContinuousSubaction { name: "x".into(), low: -1.0, high: 1.0, weight: 1.0 },
                    ContinuousSubaction { name: "y".into(), low: -2.0, high: 2.0, weight: 1.0 },
                ],
                vec![DiscreteSubaction { name: "d".into(), cardinality: 3, weight: 1.0 }],
            ).unwrap();
            let q = FnEvaluator(move |_: &[f64], a: &MixedAction| {
                -(a.continuous[0] - c0).powi(2) - (a.continuous[1] - c1).powi(2) + a.discrete[0] as f64 * 0.1
            });
            let cfg = CemConfig { iterations: 4, population: 16, elites: 3, ..CemConfig::default() };
            let out = cem_argmax(&q, &[], &spec, &cfg, None, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            prop_assert!(out.running_best.windows(2).all(|w| w[1] >= w[0]));
            prop_assert!(spec.conforms(&out.action).is_ok());
            let again = cem_argmax(&q, &[], &spec, &cfg, None, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            prop_assert_eq!(out, again);

            let prop_action = MixedAction { continuous: vec![c0 * 0.5, c1 * 0.5], discrete: vec![1] };
            let cand = cfg.with_mode(CemMode::ActorCandidate);
            let out = cem_argmax(&q, &[], &spec, &cand, Some(&prop_action), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let floor = q.q_values(&[], std::slice::from_ref(&prop_action)).unwrap()[0];
            prop_assert!(out.value >= floor);
        }
    }
}
