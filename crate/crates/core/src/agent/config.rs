use serde::{Deserialize, Serialize};

use crate::cem::{CemConfig, CemMode};
use crate::error::{Error, Result};
use crate::nn::OptimizerKind;
use crate::replay::ActorFilter;

/// Algorithm family. Decides whether the actor takes part in training and
/// which policy is evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    QtOpt,
    Awac,
    AwOpt,
}

/// Action used at the next state of a Bellman backup.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetStrategy {
    /// Mean target value over actor samples.
    AwacExpectation,
    MaxQ,
    MaxQActorMean,
    MaxQActorCandidate,
}

impl TargetStrategy {
    pub fn uses_actor(self) -> bool {
        !matches!(self, TargetStrategy::MaxQ)
    }

    /// CEM mode for the max-Q strategies.
    pub fn cem_mode(self) -> Option<CemMode> {
        match self {
            TargetStrategy::AwacExpectation => None,
            TargetStrategy::MaxQ => Some(CemMode::Plain),
            TargetStrategy::MaxQActorMean => Some(CemMode::ActorMean),
            TargetStrategy::MaxQActorCandidate => Some(CemMode::ActorCandidate),
        }
    }
}

/// Which policy collects online data. `p_critic` is the probability of
/// acting with the CEM policy.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExplorationStrategy {
    ActorOnly,
    CriticOnly,
    EpisodeSwitch { p_critic: f64 },
    StepSwitch { p_critic: f64 },
}

pub const DEFAULT_P_CRITIC: f64 = 0.8;

impl ExplorationStrategy {
    /// True if some actions may come from the actor.
    pub fn uses_actor(self) -> bool {
        match self {
            ExplorationStrategy::ActorOnly => true,
            ExplorationStrategy::CriticOnly => false,
            ExplorationStrategy::EpisodeSwitch { p_critic } | ExplorationStrategy::StepSwitch { p_critic } => {
                p_critic < 1.0
            }
        }
    }

    pub fn label(self) -> String {
        match self {
            ExplorationStrategy::ActorOnly => "actor_only".into(),
            ExplorationStrategy::CriticOnly => "critic_only".into(),
            ExplorationStrategy::EpisodeSwitch { p_critic } => format!("episode_switch({p_critic})"),
            ExplorationStrategy::StepSwitch { p_critic } => format!("step_switch({p_critic})"),
        }
    }
}

/// Policy used for evaluation rollouts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalPolicy {
    /// Mode of the actor distribution.
    Actor,
    /// CEM maximization of the online critic.
    Cem,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    pub algorithm: Algorithm,
    pub gamma: f64,
    /// Advantage temperature.
    pub lambda: f64,
    /// Upper bound on the exponentiated-advantage weight.
    pub adv_clip: f64,
    pub n_adv_samples: usize,
    pub target_strategy: TargetStrategy,
    /// Train the actor only on transitions of successful episodes.
    pub positive_filtering: bool,
    pub actor_filter: ActorFilter,
    /// Draw half of every critic batch from successful episodes.
    pub balanced_sampling: bool,
    pub exploration: ExplorationStrategy,
    pub eval_policy: EvalPolicy,
    /// Whether a critic-only algorithm still fits an actor on the side
    /// (used for action-selection timing, never for training).
    pub auxiliary_actor: bool,
    /// Also fit the actor's variances by Gaussian likelihood with the mean
    /// held fixed. The imitation loss alone never moves them.
    pub fit_variance: bool,
    pub hidden: Vec<usize>,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    pub critic_lr: f64,
    pub actor_lr: f64,
    pub tau: f64,
    /// Gradient steps between parameter snapshots used by exploration.
    pub publish_every: u64,
    /// CEM used to act.
    pub cem: CemConfig,
    /// CEM used inside Bellman targets.
    pub target_cem: CemConfig,
}

impl AgentConfig {
    /// Whether the actor's updates can influence data collection, targets or evaluation.
    pub fn actor_in_loop(&self) -> bool {
        self.algorithm != Algorithm::QtOpt
    }

    pub fn trains_actor(&self) -> bool {
        self.actor_in_loop() || self.auxiliary_actor
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad(format!("gamma {} outside [0, 1]", self.gamma));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda {} must be positive", self.lambda));
        }
        if !(self.adv_clip >= 1.0 && self.adv_clip.is_finite()) {
            return bad(format!("adv_clip {} must be ≥ 1", self.adv_clip));
        }
        if self.n_adv_samples == 0 {
            return bad("n_adv_samples must be ≥ 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be ≥ 1".into());
        }
        if self.hidden.contains(&0) {
            return bad("hidden layer widths must be positive".into());
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad(format!("tau {} outside (0, 1]", self.tau));
        }
        if !(self.critic_lr > 0.0 && self.actor_lr > 0.0) {
            return bad("learning rates must be positive".into());
        }
        if self.publish_every == 0 {
            return bad("publish_every must be ≥ 1".into());
        }
        if let ExplorationStrategy::EpisodeSwitch { p_critic } | ExplorationStrategy::StepSwitch { p_critic } =
            self.exploration
        {
            if !(0.0..=1.0).contains(&p_critic) {
                return bad(format!("exploration p_critic {p_critic} outside [0, 1]"));
            }
        }
        self.cem.validate()?;
        self.target_cem.validate()?;
        if self.cem.mode != CemMode::Plain {
            return bad("the acting CEM is always plain; set target_strategy for actor-assisted targets".into());
        }
        if self.algorithm == Algorithm::QtOpt {
            if self.exploration.uses_actor() {
                return bad(format!(
                    "qt_opt has no actor in the loop but exploration is {}",
                    self.exploration.label()
                ));
            }
            if self.target_strategy.uses_actor() {
                return bad(format!("qt_opt cannot use the {:?} target strategy", self.target_strategy));
            }
            if self.positive_filtering {
                return bad("qt_opt does not train an actor, so positive_filtering must be off".into());
            }
            if self.eval_policy == EvalPolicy::Actor {
                return bad("qt_opt is evaluated with its CEM policy".into());
            }
        }
        Ok(())
    }
}

/// Named configurations: the three algorithms, the intermediate methods
/// between them and the single-feature ablations of the full method.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    QtOpt,
    Awac,
    AwOpt,
    /// AWAC with positive filtering and balanced critic batches.
    AwacP,
    /// ... plus the episode-level switcher.
    AwacPElrs,
    /// ... plus max-Q targets.
    AwacPElrsMaxq,
    /// ... with the actor mean seeding the target CEM.
    AwacPElrsMaxqActormean,
    AwOptNoPf,
    AwOptNoActorCandidate,
    AwOptNoHybridExploration,
}

impl Variant {
    pub const ALL: [Variant; 10] = [
        Variant::QtOpt,
        Variant::Awac,
        Variant::AwOpt,
        Variant::AwacP,
        Variant::AwacPElrs,
        Variant::AwacPElrsMaxq,
        Variant::AwacPElrsMaxqActormean,
        Variant::AwOptNoPf,
        Variant::AwOptNoActorCandidate,
        Variant::AwOptNoHybridExploration,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::QtOpt => "qt_opt",
            Variant::Awac => "awac",
            Variant::AwOpt => "aw_opt",
            Variant::AwacP => "awac_p",
            Variant::AwacPElrs => "awac_p_elrs",
            Variant::AwacPElrsMaxq => "awac_p_elrs_maxq",
            Variant::AwacPElrsMaxqActormean => "awac_p_elrs_maxq_actormean",
            Variant::AwOptNoPf => "aw_opt_no_pf",
            Variant::AwOptNoActorCandidate => "aw_opt_no_actor_candidate",
            Variant::AwOptNoHybridExploration => "aw_opt_no_hybrid_exploration",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == name)
            .ok_or_else(|| {
                let known: Vec<_> = Self::ALL.iter().map(|v| v.name()).collect();
                Error::Usage(format!("unknown algorithm '{name}' (known: {})", known.join(", ")))
            })
    }

    pub fn base(self) -> Algorithm {
        match self {
            Variant::QtOpt => Algorithm::QtOpt,
            Variant::Awac
            | Variant::AwacP
            | Variant::AwacPElrs
            | Variant::AwacPElrsMaxq
            | Variant::AwacPElrsMaxqActormean => Algorithm::Awac,
            Variant::AwOpt
            | Variant::AwOptNoPf
            | Variant::AwOptNoActorCandidate
            | Variant::AwOptNoHybridExploration => Algorithm::AwOpt,
        }
    }
}

/// Individual feature flips applied on top of a preset.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Overrides {
    pub target_strategy: Option<TargetStrategy>,
    pub positive_filtering: Option<bool>,
    pub balanced_sampling: Option<bool>,
    pub exploration: Option<ExplorationStrategy>,
    pub eval_policy: Option<EvalPolicy>,
}

fn base_config(algorithm: Algorithm) -> AgentConfig {
    let (exploration, target_strategy, filtering, eval_policy) = match algorithm {
        Algorithm::QtOpt => (
            ExplorationStrategy::CriticOnly,
            TargetStrategy::MaxQ,
            false,
            EvalPolicy::Cem,
        ),
        Algorithm::Awac => (
            ExplorationStrategy::ActorOnly,
            TargetStrategy::AwacExpectation,
            false,
            EvalPolicy::Actor,
        ),
        Algorithm::AwOpt => (
            ExplorationStrategy::EpisodeSwitch {
                p_critic: DEFAULT_P_CRITIC,
            },
            TargetStrategy::MaxQActorCandidate,
            true,
            EvalPolicy::Actor,
        ),
    };
    AgentConfig {
        algorithm,
        gamma: 0.95,
        lambda: 1.0,
        adv_clip: 20.0,
        n_adv_samples: 10,
        target_strategy,
        positive_filtering: filtering,
        actor_filter: ActorFilter::EpisodeSuccess,
        balanced_sampling: filtering,
        exploration,
        eval_policy,
        auxiliary_actor: algorithm == Algorithm::QtOpt,
        fit_variance: true,
        hidden: vec![64, 64],
        batch_size: 64,
        optimizer: OptimizerKind::Adam,
        critic_lr: 1e-3,
        actor_lr: 1e-3,
        tau: 0.01,
        publish_every: 50,
        cem: CemConfig::default(),
        target_cem: CemConfig {
            iterations: 2,
            population: 32,
            elites: 4,
            ..CemConfig::default()
        },
    }
}

/// Preset for a named variant with `overrides` applied, validated.
pub fn make_algorithm(variant: Variant, overrides: &Overrides) -> Result<AgentConfig> {
    let mut c = base_config(variant.base());
    let elrs = ExplorationStrategy::EpisodeSwitch {
        p_critic: DEFAULT_P_CRITIC,
    };
    match variant {
        Variant::QtOpt | Variant::Awac | Variant::AwOpt => {}
        Variant::AwacP => {
            c.positive_filtering = true;
            c.balanced_sampling = true;
        }
        Variant::AwacPElrs => {
            c.positive_filtering = true;
            c.balanced_sampling = true;
            c.exploration = elrs;
        }
        Variant::AwacPElrsMaxq | Variant::AwacPElrsMaxqActormean => {
            c.positive_filtering = true;
            c.balanced_sampling = true;
            c.exploration = elrs;
            c.target_strategy = if variant == Variant::AwacPElrsMaxq {
                TargetStrategy::MaxQ
            } else {
                TargetStrategy::MaxQActorMean
            };
        }
        // Only the actor filter goes; critic batches stay balanced.
        Variant::AwOptNoPf => c.positive_filtering = false,
        Variant::AwOptNoActorCandidate => c.target_strategy = TargetStrategy::AwacExpectation,
        Variant::AwOptNoHybridExploration => c.exploration = ExplorationStrategy::ActorOnly,
    }
    if let Some(t) = overrides.target_strategy {
        c.target_strategy = t;
    }
    if let Some(p) = overrides.positive_filtering {
        c.positive_filtering = p;
    }
    if let Some(b) = overrides.balanced_sampling {
        c.balanced_sampling = b;
    }
    if let Some(e) = overrides.exploration {
        c.exploration = e;
    }
    if let Some(e) = overrides.eval_policy {
        c.eval_policy = e;
    }
    c.validate()?;
    Ok(c)
}
