//! The navigation comparison: offline pretraining on scripted positive
//! demonstrations, then online finetuning, for the three algorithms, the
//! single-feature ablations of AW-Opt and QT-Opt with added random
//! negatives. The pilot command and the acceptance suite both run it.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{mean_of, DataSpec, ExperimentConfig, MetricsRecord, Run, RunSummary};
use crate::agent::{make_algorithm, Overrides, Variant};
use crate::env::{EnvConfig, KeepMode, NavConfig};
use crate::error::Result;

/// Budgets shared by every arm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudySettings {
    pub nav: NavConfig,
    /// Successful scripted episodes in the prior data.
    pub demos: usize,
    pub demo_noise: f64,
    /// Random-policy failures added for the negatives arm.
    pub random_negatives: usize,
    pub pretrain_steps: u64,
    /// Episode cap of the online phase.
    pub online_episodes: u64,
    /// Transition budget of the online phase, shared by every arm.
    pub online_transitions: u64,
    pub grad_steps_per_episode: u64,
    pub eval_every_steps: u64,
    pub eval_every_episodes: u64,
    pub eval_episodes: usize,
    pub seeds: Vec<u64>,
}

impl Default for StudySettings {
    fn default() -> Self {
        Self {
            nav: NavConfig::default(),
            demos: 100,
            demo_noise: 0.3,
            random_negatives: 100,
            pretrain_steps: 2_000,
            online_episodes: 2_000,
            online_transitions: 20_000,
            grad_steps_per_episode: 4,
            eval_every_steps: 500,
            eval_every_episodes: 100,
            eval_episodes: 100,
            seeds: vec![0, 1, 2],
        }
    }
}

impl StudySettings {
    /// Data-limited start: ten demos, pretraining run to convergence, then
    /// 500 online episodes with no transition cap. Imitation alone settles
    /// well below the task ceiling here, so online progress is measurable.
    pub fn weak_start() -> Self {
        Self {
            demos: 10,
            online_episodes: 500,
            online_transitions: 0,
            ..Self::default()
        }
    }
}

/// Arms of the weak-start comparison.
pub const WEAK_START_ARMS: [Arm; 2] = [Arm::AwOpt, Arm::Awac];

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    AwOpt,
    Awac,
    QtOpt,
    AwOptNoPf,
    AwOptNoActorCandidate,
    AwOptNoHybridExploration,
    /// QT-Opt pretrained on the demos plus random failures; offline only.
    QtOptRandomNegatives,
}

impl Arm {
    pub const ALL: [Arm; 7] = [
        Arm::AwOpt,
        Arm::Awac,
        Arm::QtOpt,
        Arm::AwOptNoPf,
        Arm::AwOptNoActorCandidate,
        Arm::AwOptNoHybridExploration,
        Arm::QtOptRandomNegatives,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Arm::AwOpt => "aw_opt",
            Arm::Awac => "awac",
            Arm::QtOpt => "qt_opt",
            Arm::AwOptNoPf => "aw_opt_no_pf",
            Arm::AwOptNoActorCandidate => "aw_opt_no_actor_candidate",
            Arm::AwOptNoHybridExploration => "aw_opt_no_hybrid_exploration",
            Arm::QtOptRandomNegatives => "qt_opt_random_negatives",
        }
    }

    pub fn variant(self) -> Variant {
        match self {
            Arm::AwOpt => Variant::AwOpt,
            Arm::Awac => Variant::Awac,
            Arm::QtOpt | Arm::QtOptRandomNegatives => Variant::QtOpt,
            Arm::AwOptNoPf => Variant::AwOptNoPf,
            Arm::AwOptNoActorCandidate => Variant::AwOptNoActorCandidate,
            Arm::AwOptNoHybridExploration => Variant::AwOptNoHybridExploration,
        }
    }

    pub fn online(self) -> bool {
        self != Arm::QtOptRandomNegatives
    }
}

/// Experiment configuration of one arm.
pub fn arm_config(arm: Arm, settings: &StudySettings) -> Result<ExperimentConfig> {
    let agent = make_algorithm(arm.variant(), &Overrides::default())?;
    let mut config = ExperimentConfig::new(EnvConfig::Nav(settings.nav.clone()), agent);
    config.data = vec![DataSpec::Scripted {
        episodes: settings.demos,
        noise: settings.demo_noise,
        keep: KeepMode::PositivesOnly,
    }];
    if arm == Arm::QtOptRandomNegatives {
        config.data.push(DataSpec::Random {
            episodes: settings.random_negatives,
            keep: KeepMode::NegativesOnly,
        });
    }
    config.pretrain_steps = settings.pretrain_steps;
    config.online_episodes = if arm.online() { settings.online_episodes } else { 0 };
    config.online_transitions = settings.online_transitions;
    config.grad_steps_per_episode = settings.grad_steps_per_episode;
    config.eval_every_steps = settings.eval_every_steps;
    config.eval_every_episodes = settings.eval_every_episodes;
    config.eval_episodes = settings.eval_episodes;
    config.seeds = settings.seeds.clone();
    Ok(config)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmRun {
    pub summary: RunSummary,
    pub records: Vec<MetricsRecord>,
    /// Wall time of the offline phase, in seconds.
    pub offline_secs: f64,
    pub online_secs: f64,
}

pub fn run_arm(arm: Arm, settings: &StudySettings, seed: u64) -> Result<ArmRun> {
    let config = arm_config(arm, settings)?;
    let mut run = Run::new(config, seed)?;
    let start = Instant::now();
    run.run_offline_phase()?;
    let offline_secs = start.elapsed().as_secs_f64();
    run.run_online_phase()?;
    Ok(ArmRun {
        summary: run.summary(),
        records: run.records().to_vec(),
        offline_secs,
        online_secs: start.elapsed().as_secs_f64() - offline_secs,
    })
}

/// Seed-averaged outcome of one arm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmStats {
    pub post_offline_success: f64,
    pub offline_peak: f64,
    pub online_min: Option<f64>,
    pub final_success: f64,
    pub runs: Vec<RunSummary>,
}

impl ArmStats {
    pub fn from_runs(runs: Vec<RunSummary>) -> Self {
        let online: Vec<f64> = runs.iter().filter_map(|r| r.online_min).collect();
        Self {
            post_offline_success: mean_of(&runs, |r| r.post_offline_success),
            offline_peak: mean_of(&runs, |r| r.offline_peak),
            online_min: (online.len() == runs.len() && !runs.is_empty())
                .then(|| online.iter().sum::<f64>() / online.len() as f64),
            final_success: mean_of(&runs, |r| r.final_success),
            runs,
        }
    }
}

/// Results of every arm, keyed by arm name.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyResults {
    pub settings: StudySettings,
    pub arms: BTreeMap<String, ArmStats>,
}

impl StudyResults {
    pub fn arm(&self, arm: Arm) -> Option<&ArmStats> {
        self.arms.get(arm.name())
    }
}

/// Runs `arms` over every seed, calling `progress` after each run.
pub fn run_study(
    settings: &StudySettings,
    arms: &[Arm],
    mut progress: impl FnMut(Arm, &ArmRun),
) -> Result<StudyResults> {
    let mut out = BTreeMap::new();
    for &arm in arms {
        let mut runs = Vec::with_capacity(settings.seeds.len());
        for &seed in &settings.seeds {
            let r = run_arm(arm, settings, seed)?;
            progress(arm, &r);
            runs.push(r.summary);
        }
        out.insert(arm.name().to_string(), ArmStats::from_runs(runs));
    }
    Ok(StudyResults {
        settings: settings.clone(),
        arms: out,
    })
}

/// Committed pilot results gating the acceptance suite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PilotFixture {
    pub version: String,
    pub generated_at: String,
    pub study: StudyResults,
    pub weak_start: Option<StudyResults>,
}

/// Allowed slack, in success-rate units, between a fresh run and the
/// committed pilot.
pub const PILOT_MARGIN: f64 = 0.10;
