//! Acceptance suite. Every test writes one `PASS`/`FAIL` line to stderr
//! (visible even when output is captured) and then asserts.
//!
//! The navigation criteria share one run of the study per process and are
//! gated against `fixtures/pilot.json`: a fresh value may trail the
//! committed pilot by at most `PILOT_MARGIN` in the unfavourable direction.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::OnceLock;
use std::time::Instant;

use awopt_core::action::{actor_loss, ContinuousSubaction, DiscreteSubaction};
use awopt_core::agent::{
    bellman_targets, critic_update, make_algorithm, weighted_actor_gradients, ActorNet, Agent, CriticNets,
    CriticView, Overrides, TargetParams, TargetStrategy, Variant,
};
use awopt_core::cem::{cem_argmax, CemConfig, FnEvaluator};
use awopt_core::env::{BehaviorTag, EnvConfig, Episode, NavConfig, Transition};
use awopt_core::experiment::study::{
    run_study, Arm, ArmStats, PilotFixture, StudyResults, StudySettings, PILOT_MARGIN, WEAK_START_ARMS,
};
use awopt_core::nn::{Activation, Matrix, Mlp, OptimizerState};
use awopt_core::replay::{ActorFilter, ReplayBuffer};
use awopt_core::{ActionSpec, MixedAction};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(id: &str, title: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "[{verdict}] {id} {title}: {detail}");
    assert!(pass, "{id} {title}: {detail}");
}

fn rel_close(fd: f64, analytic: f64) -> bool {
    let err = (fd - analytic).abs();
    err <= 1e-4 * fd.abs().max(analytic.abs()) || err <= 1e-6
}

fn spec(conts: usize, cards: &[usize]) -> ActionSpec {
    ActionSpec::new(
        (0..conts)
            .map(|i| ContinuousSubaction {
                name: format!("c{i}"),
                low: -1.0,
                high: 1.0,
                weight: 1.0 + i as f64,
            })
            .collect(),
        cards
            .iter()
            .enumerate()
            .map(|(i, &cardinality)| DiscreteSubaction {
                name: format!("d{i}"),
                cardinality,
                weight: 0.5 + i as f64,
            })
            .collect(),
    )
    .unwrap()
}

fn jitter(mlp: &mut Mlp, rng: &mut ChaCha8Rng) {
    for (i, p) in mlp.flat_params().into_iter().enumerate() {
        mlp.set_flat_param(i, p + rng.random_range(-0.1..0.1));
    }
}

/// Central differences of `loss` over every parameter of `mlp`; returns
/// (coordinates checked, coordinates out of tolerance).
fn fd_check(mlp: &Mlp, analytic: &[f64], loss: impl Fn(&Mlp) -> f64) -> (usize, usize) {
    let h = 1e-5;
    let params = mlp.flat_params();
    let mut bad = 0;
    for (i, &p) in params.iter().enumerate() {
        let mut probe = mlp.clone();
        probe.set_flat_param(i, p + h);
        let up = loss(&probe);
        probe.set_flat_param(i, p - h);
        let down = loss(&probe);
        if !rel_close((up - down) / (2.0 * h), analytic[i]) {
            bad += 1;
        }
    }
    (params.len(), bad)
}

#[test]
fn c01_gradient_correctness() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut checked = 0;
    let mut bad = 0;
    for case in 0..20 {
        let input = rng.random_range(1..6);
        let mut dims = vec![input];
        for _ in 0..rng.random_range(0..4) {
            dims.push(rng.random_range(1..9));
        }
        let output = rng.random_range(1..4);
        dims.push(output);
        let act = if case % 2 == 0 { Activation::Tanh } else { Activation::Relu };
        let mut mlp = Mlp::new(&dims, act, &mut rng).unwrap();
        jitter(&mut mlp, &mut rng);
        let rows = 4;
        let x: Vec<f64> = (0..rows * input).map(|_| rng.random_range(-1.0..1.0)).collect();
        let u: Vec<f64> = (0..rows * output).map(|_| rng.random_range(-1.0..1.0)).collect();
        let inputs = Matrix::from_vec(rows, input, x).unwrap();
        let upstream = Matrix::from_vec(rows, output, u).unwrap();
        let trace = mlp.forward_trace(&inputs).unwrap();
        let analytic = mlp.backward_batch(&trace, &upstream).unwrap().0.flatten();
        let (n, b) = fd_check(&mlp, &analytic, |m| {
            let out = m.forward_batch(&inputs).unwrap();
            out.as_slice().iter().zip(upstream.as_slice()).map(|(a, b)| a * b).sum()
        });
        checked += n;
        bad += b;
    }

    // Mixed actor loss, through the distribution head and through a whole
    // actor network under advantage weights.
    let mut loss_bad = 0;
    let mut loss_checked = 0;
    for (conts, cards) in [(1, vec![2]), (2, vec![3]), (3, vec![2, 4]), (0, vec![5]), (2, vec![])] {
        let spec = spec(conts, &cards);
        let obs_dim = 3;
        let mut actor = ActorNet::new(obs_dim, &spec, &[8], &mut rng).unwrap();
        jitter(&mut actor.net, &mut rng);
        let transitions: Vec<Transition> = (0..5)
            .map(|step| {
                let observation: Vec<f64> = (0..obs_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
                let action = MixedAction {
                    continuous: (0..conts).map(|_| rng.random_range(-1.0..1.0)).collect(),
                    discrete: cards.iter().map(|&c| rng.random_range(0..c)).collect(),
                };
                Transition {
                    next_observation: observation.clone(),
                    observation,
                    action,
                    reward: 0.0,
                    done: false,
                    episode_id: 0,
                    step,
                    behavior: BehaviorTag::Demo,
                    success: true,
                }
            })
            .collect();
        let advantages: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut config = make_algorithm(Variant::AwOpt, &Overrides::default()).unwrap();
        config.fit_variance = false;
        let (_, grads) = weighted_actor_gradients(&actor, &transitions, &advantages, &config).unwrap();
        let (n, b) = fd_check(&actor.net, &grads.flatten(), |m| {
            let probe = ActorNet::from_net(m.clone(), spec.clone()).unwrap();
            weighted_actor_gradients(&probe, &transitions, &advantages, &config).unwrap().0
        });
        loss_checked += n;
        loss_bad += b;

        let raw = actor.net.forward(&transitions[0].observation).unwrap();
        let dist = spec.distribution_from_head(&raw).unwrap();
        let (_, g) = actor_loss(&spec, &transitions[0].action, &dist).unwrap();
        let head = spec.head_grad(&raw, &dist, &g).unwrap();
        for i in 0..raw.len() {
            let at = |d: f64| {
                let mut r = raw.clone();
                r[i] += d;
                let dist = spec.distribution_from_head(&r).unwrap();
                actor_loss(&spec, &transitions[0].action, &dist).unwrap().0
            };
            loss_checked += 1;
            if !rel_close((at(1e-5) - at(-1e-5)) / 2e-5, head[i]) {
                loss_bad += 1;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        "C1",
        "gradient correctness",
        bad == 0 && loss_bad == 0 && secs < 30.0,
        &format!(
            "20 MLPs: {bad}/{checked} coordinates off; actor loss: {loss_bad}/{loss_checked} off; {secs:.1}s (< 30s)"
        ),
    );
}

#[test]
fn c02_cem_matches_grid_search() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut continuous_ok = 0;
    let mut discrete_ok = 0;
    let mut worst = 0.0f64;
    let mut misses = Vec::new();
    for case in 0..10 {
        let dims = 1 + case % 3;
        let card = rng.random_range(2..5);
        let spec = spec(dims, &[card]);
        let centers: Vec<Vec<f64>> = (0..card)
            .map(|_| (0..dims).map(|_| rng.random_range(-0.8..0.8)).collect())
            .collect();
        let scales: Vec<f64> = (0..dims).map(|_| rng.random_range(1.0..3.0)).collect();
        let offsets: Vec<f64> = (0..card).map(|_| rng.random_range(0.0..1.0)).collect();
        let f = |a: &[f64], j: usize| {
            offsets[j] - a.iter().zip(&centers[j]).zip(&scales).map(|((x, c), s)| s * (x - c).powi(2)).sum::<f64>()
        };
        // Dense grid: 0.01 spacing in 1-d, 0.02 in 2-d, 0.04 in 3-d.
        let steps = [200usize, 100, 50][dims - 1];
        let mut best = (f64::NEG_INFINITY, Vec::new(), 0);
        let total = (steps + 1).pow(dims as u32);
        let mut point = vec![0.0; dims];
        for j in 0..card {
            for idx in 0..total {
                let mut rest = idx;
                for p in point.iter_mut() {
                    *p = -1.0 + 2.0 * (rest % (steps + 1)) as f64 / steps as f64;
                    rest /= steps + 1;
                }
                let v = f(&point, j);
                if v > best.0 {
                    best = (v, point.clone(), j);
                }
            }
        }
        let q = FnEvaluator(|_: &[f64], a: &MixedAction| f(&a.continuous, a.discrete[0]));
        let out = cem_argmax(&q, &[], &spec, &CemConfig::default(), None, &mut rng).unwrap();
        if out.action.discrete[0] == best.2 {
            discrete_ok += 1;
            let dist = out.action.continuous.iter().zip(&best.1).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            worst = worst.max(dist);
            if dist <= 0.05 {
                continuous_ok += 1;
            } else {
                misses.push(format!("{dims}-d/{card} choices off by {dist:.3}"));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        "C2",
        "CEM vs grid-search oracle",
        discrete_ok >= 9 && continuous_ok == discrete_ok && secs < 60.0,
        &format!(
            "discrete argmax matched {discrete_ok}/10 (>= 9); continuous within 0.05 in {continuous_ok}/{discrete_ok} \
             matched cases (worst {worst:.3}); {secs:.1}s (< 60s){}",
            if misses.is_empty() { String::new() } else { format!("; misses: {}", misses.join(", ")) }
        ),
    );
}

/// Three states on a line with one-hot observations; action 1 moves right
/// and from the last state ends the episode with reward 1, action 0 moves
/// left (the first state stays put).
fn chain() -> Vec<Transition> {
    let one_hot = |s: usize| (0..3).map(|i| if i == s { 1.0 } else { 0.0 }).collect::<Vec<_>>();
    let mut out = Vec::new();
    for s in 0..3usize {
        for a in 0..2usize {
            let (next, reward, done) = match (s, a) {
                (2, 1) => (2, 1.0, true),
                (_, 1) => (s + 1, 0.0, false),
                _ => (s.saturating_sub(1), 0.0, false),
            };
            out.push(Transition {
                observation: one_hot(s),
                action: MixedAction {
                    continuous: vec![],
                    discrete: vec![a],
                },
                reward,
                next_observation: one_hot(next),
                done,
                episode_id: 0,
                step: 0,
                behavior: BehaviorTag::Demo,
                success: reward == 1.0,
            });
        }
    }
    out
}

#[test]
fn c03_tabular_bellman_oracle() {
    let start = Instant::now();
    let gamma = 0.9;
    let mut q_star = [[0.0f64; 2]; 3];
    for _ in 0..1_000 {
        let v: Vec<f64> = q_star.iter().map(|r| r[0].max(r[1])).collect();
        q_star = [[gamma * v[0], gamma * v[1]], [gamma * v[0], gamma * v[2]], [gamma * v[1], 1.0]];
    }
    let spec = spec(0, &[2]);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut critic = CriticNets::new(3, &spec, &[32, 32], 0.1, &mut rng).unwrap();
    let actor = ActorNet::new(3, &spec, &[8], &mut rng).unwrap();
    let mut opt = OptimizerState::adam(3e-3, &critic.online);
    let batch = chain();
    let cem = CemConfig {
        population: 16,
        elites: 2,
        ..CemConfig::default()
    };
    let params = TargetParams {
        strategy: TargetStrategy::MaxQ,
        gamma,
        n_adv_samples: 10,
        cem: &cem,
    };
    for _ in 0..3_000 {
        let targets = bellman_targets(&critic, &actor, &batch, &params, &mut rng).unwrap();
        critic_update(&mut critic, &spec, &batch, &targets, &mut opt).unwrap();
    }
    let view = CriticView {
        net: &critic.online,
        spec: &spec,
    };
    let err = batch
        .iter()
        .map(|t| {
            let s = t.observation.iter().position(|&v| v == 1.0).unwrap();
            (view.q(&t.observation, &t.action).unwrap() - q_star[s][t.action.discrete[0]]).abs()
        })
        .fold(0.0, f64::max);
    let secs = start.elapsed().as_secs_f64();
    report(
        "C3",
        "tabular Bellman oracle",
        err < 1e-2 && secs < 120.0,
        &format!("max |Q - Q*| = {err:.2e} (< 1e-2) over 6 state-action pairs; {secs:.1}s (< 120s)"),
    );
}

fn fuzz_episode(id: u64, len: usize, success: bool) -> Episode {
    let transitions = (0..len)
        .map(|step| {
            let last = step + 1 == len;
            Transition {
                observation: vec![id as f64, step as f64],
                action: MixedAction {
                    continuous: vec![0.0],
                    discrete: vec![0],
                },
                reward: if last && success { 1.0 } else { 0.0 },
                next_observation: vec![id as f64, step as f64 + 1.0],
                done: last,
                episode_id: id,
                step,
                behavior: BehaviorTag::Actor,
                success,
            }
        })
        .collect();
    Episode::new(transitions, BehaviorTag::Actor)
}

#[test]
fn c04_buffer_contract() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut buf = ReplayBuffer::new(500);
    let mut violations = Vec::new();
    let mut balanced_checks = 0;
    for cycle in 0..10_000u64 {
        let len = rng.random_range(1..12);
        let success = rng.random_bool(0.3);
        buf.insert_episode(&fuzz_episode(cycle, len, success));
        let size = 2 * rng.random_range(1..33);
        let critic = buf.sample_critic_batch(size, &mut rng).unwrap();
        let positives = critic.transitions.iter().filter(|t| t.success).count();
        if !buf.positives().is_empty() && !buf.negatives().is_empty() {
            balanced_checks += 1;
            if positives * 2 != size || critic.source_mix != (size / 2, size / 2) {
                violations.push(format!("cycle {cycle}: {positives}/{size} positives"));
            }
        }
        if !buf.positives().is_empty() {
            let actor = buf.sample_actor_batch(size, ActorFilter::EpisodeSuccess, &mut rng).unwrap();
            if !actor.transitions.iter().all(|t| t.success) {
                violations.push(format!("cycle {cycle}: actor batch holds a failure transition"));
            }
        }
    }
    report(
        "C4",
        "buffer contract",
        violations.is_empty() && balanced_checks > 9_000,
        &format!(
            "10000 cycles, {balanced_checks} balanced batches checked, {} violations{}",
            violations.len(),
            violations.first().map_or(String::new(), |v| format!(" (first: {v})"))
        ),
    );
}

#[test]
fn c08_inference_speed_ordering() {
    let mut env = EnvConfig::Nav(NavConfig::default()).build().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let config = make_algorithm(Variant::AwOpt, &Overrides::default()).unwrap();
    let agent = Agent::new(config, env.observation_dim(), env.action_spec(), &mut rng).unwrap();
    let observations: Vec<Vec<f64>> = (0..300).map(|_| env.reset(&mut rng)).collect();
    let time = |f: &mut dyn FnMut(&[f64])| {
        let start = Instant::now();
        for obs in &observations {
            f(obs);
        }
        start.elapsed().as_secs_f64() * 1e3 / observations.len() as f64
    };
    let actor_ms = time(&mut |obs| {
        agent.actor_mode(obs).unwrap();
    });
    let cem_ms = time(&mut |obs| {
        agent.cem_action(obs, &mut rng).unwrap();
    });
    report(
        "C8",
        "inference-speed ordering",
        actor_ms < cem_ms,
        &format!("actor {actor_ms:.4} ms < CEM {cem_ms:.4} ms per selection (ratio {:.1}x)", cem_ms / actor_ms),
    );
}

fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn train_once(out: &Path, name: &str) -> Vec<u8> {
    let status = Command::new(env!("CARGO_BIN_EXE_awopt"))
        .args(["train", "--config"])
        .arg(workspace_root().join("configs/nav_awopt.toml"))
        .args(["--seed", "0", "--name", name, "--out"])
        .arg(out)
        .args([
            "--override",
            "pretrain_steps=60",
            "--override",
            "online_episodes=6",
            "--override",
            "eval_every_episodes=3",
            "--override",
            "eval_episodes=5",
            "--override",
            "data.0.episodes=10",
        ])
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    std::fs::read(out.join(name).join("seed_0/metrics.csv")).unwrap()
}

#[test]
fn c09_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let a = train_once(dir.path(), "first");
    let b = train_once(dir.path(), "second");
    let rows = a.iter().filter(|&&c| c == b'\n').count();
    report(
        "C9",
        "determinism",
        a == b && rows > 2,
        &format!("two `train --seed 0` runs: metrics.csv {} ({} bytes, {rows} lines)", if a == b { "identical" } else { "differ" }, a.len()),
    );
}

struct Study {
    results: StudyResults,
    /// Summed (offline, total) wall seconds per arm.
    secs: Vec<(Arm, f64, f64)>,
}

fn pilot() -> &'static PilotFixture {
    static PILOT: OnceLock<PilotFixture> = OnceLock::new();
    PILOT.get_or_init(|| {
        let path = workspace_root().join("fixtures/pilot.json");
        let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        serde_json::from_str(&text).unwrap()
    })
}

fn run(settings: &StudySettings, arms: &[Arm]) -> Study {
    let mut secs: Vec<(Arm, f64, f64)> = arms.iter().map(|&a| (a, 0.0, 0.0)).collect();
    let results = run_study(settings, arms, |arm, r| {
        let slot = secs.iter_mut().find(|s| s.0 == arm).unwrap();
        slot.1 += r.offline_secs;
        slot.2 += r.offline_secs + r.online_secs;
    })
    .unwrap();
    Study { results, secs }
}

fn study() -> &'static Study {
    static STUDY: OnceLock<Study> = OnceLock::new();
    STUDY.get_or_init(|| {
        let settings = StudySettings::default();
        assert_eq!(pilot().study.settings, settings, "pilot fixture was produced with other settings");
        run(&settings, &Arm::ALL)
    })
}

fn weak_start() -> &'static Study {
    static STUDY: OnceLock<Study> = OnceLock::new();
    STUDY.get_or_init(|| {
        let settings = StudySettings::weak_start();
        let committed = pilot().weak_start.as_ref().expect("pilot fixture lacks the weak-start comparison");
        assert_eq!(committed.settings, settings, "pilot fixture was produced with other settings");
        run(&settings, &WEAK_START_ARMS)
    })
}

fn arm(results: &StudyResults, arm: Arm) -> &ArmStats {
    results.arm(arm).unwrap_or_else(|| panic!("no results for {}", arm.name()))
}

/// Gate for one seed-averaged quantity: `higher` quantities may not fall
/// more than the margin below the pilot, the others may not rise more
/// than the margin above it.
struct Gate {
    failures: Vec<String>,
    lines: Vec<String>,
}

impl Gate {
    fn new() -> Self {
        Self {
            failures: Vec::new(),
            lines: Vec::new(),
        }
    }

    fn check(&mut self, label: &str, fresh: f64, pilot: f64, higher: bool) {
        let ok = if higher {
            fresh >= pilot - PILOT_MARGIN
        } else {
            fresh <= pilot + PILOT_MARGIN
        };
        self.lines.push(format!("{label} {fresh:.3} (pilot {pilot:.3})"));
        if !ok {
            self.failures.push(format!("{label} drifted from pilot {pilot:.3} to {fresh:.3}"));
        }
    }

    fn ordering(&mut self, label: &str, holds: bool) {
        if !holds {
            self.failures.push(format!("ordering violated: {label}"));
        }
    }

    fn detail(&self, extra: &str) -> String {
        let mut s = self.lines.join(", ");
        if !extra.is_empty() {
            s.push_str("; ");
            s.push_str(extra);
        }
        if !self.failures.is_empty() {
            s.push_str("; ");
            s.push_str(&self.failures.join("; "));
        }
        s
    }
}

fn secs_of(study: &Study, arms: &[Arm], total: bool) -> f64 {
    study
        .secs
        .iter()
        .filter(|s| arms.contains(&s.0))
        .map(|s| if total { s.2 } else { s.1 })
        .sum()
}

#[test]
fn c05_positives_only_offline_ordering() {
    let (fresh, committed) = (&study().results, &pilot().study);
    let aw = arm(fresh, Arm::AwOpt).post_offline_success;
    let qt = arm(fresh, Arm::QtOpt).post_offline_success;
    let mut gate = Gate::new();
    gate.check("aw_opt post-offline", aw, arm(committed, Arm::AwOpt).post_offline_success, true);
    gate.check("qt_opt post-offline", qt, arm(committed, Arm::QtOpt).post_offline_success, false);
    gate.ordering("aw_opt - qt_opt >= 0.20", aw - qt >= 0.20);
    gate.ordering("qt_opt <= 0.10", qt <= 0.10);
    let secs = secs_of(study(), &[Arm::AwOpt, Arm::QtOpt], false);
    gate.ordering("runtime < 15 min", secs < 900.0);
    report(
        "C5",
        "positives-only offline ordering",
        gate.failures.is_empty(),
        &gate.detail(&format!("gap {:.3} (>= 0.20); offline phases {secs:.0}s", aw - qt)),
    );
}

#[test]
fn c06_online_finetuning_ordering() {
    let (fresh, committed) = (&study().results, &pilot().study);
    let mut gate = Gate::new();
    for a in [Arm::AwOpt, Arm::Awac, Arm::QtOpt] {
        gate.check(&format!("{} final", a.name()), arm(fresh, a).final_success, arm(committed, a).final_success, a == Arm::AwOpt);
    }
    let aw = arm(fresh, Arm::AwOpt);
    let awac = arm(fresh, Arm::Awac);
    let qt = arm(fresh, Arm::QtOpt);
    gate.ordering("aw_opt final >= awac final", aw.final_success >= awac.final_success);
    gate.ordering("aw_opt final >= qt_opt final", aw.final_success >= qt.final_success);
    gate.ordering("aw_opt post-offline > qt_opt post-offline", aw.post_offline_success > qt.post_offline_success);
    let secs = secs_of(study(), &[Arm::AwOpt, Arm::Awac, Arm::QtOpt], true);
    gate.ordering("runtime < 45 min", secs < 2_700.0);
    let budget = fresh.settings.online_transitions;
    report(
        "C6",
        "online finetuning ordering",
        gate.failures.is_empty(),
        &gate.detail(&format!(
            "post-offline aw_opt {:.3} vs qt_opt {:.3}; {budget} online transitions per run; {secs:.0}s",
            aw.post_offline_success, qt.post_offline_success
        )),
    );
}

#[test]
fn c07_ablation_degradation() {
    let (fresh, committed) = (&study().results, &pilot().study);
    let full = arm(fresh, Arm::AwOpt).final_success;
    let mut gate = Gate::new();
    gate.check("aw_opt final", full, arm(committed, Arm::AwOpt).final_success, true);
    for a in [Arm::AwOptNoPf, Arm::AwOptNoActorCandidate, Arm::AwOptNoHybridExploration] {
        let f = arm(fresh, a).final_success;
        gate.check(&format!("{} final", a.name()), f, arm(committed, a).final_success, false);
        gate.ordering(&format!("{} final <= aw_opt final", a.name()), f <= full);
    }
    let no_pf = arm(fresh, Arm::AwOptNoPf);
    let drop = no_pf.online_min.map(|m| no_pf.offline_peak - m);
    gate.ordering(
        "aw_opt_no_pf online minimum < offline peak",
        drop.is_some_and(|d| d > 0.0),
    );
    report(
        "C7",
        "ablation degradation",
        gate.failures.is_empty(),
        &gate.detail(&format!(
            "no_pf offline peak {:.3} -> online minimum {}",
            no_pf.offline_peak,
            no_pf.online_min.map_or("none".into(), |m| format!("{m:.3}"))
        )),
    );
}

#[test]
fn c10_random_negatives_no_rescue() {
    let (fresh, committed) = (&study().results, &pilot().study);
    let neg = arm(fresh, Arm::QtOptRandomNegatives).post_offline_success;
    let aw = arm(fresh, Arm::AwOpt).post_offline_success;
    let mut gate = Gate::new();
    gate.check(
        "qt_opt+negatives post-offline",
        neg,
        arm(committed, Arm::QtOptRandomNegatives).post_offline_success,
        false,
    );
    gate.check("aw_opt post-offline", aw, arm(committed, Arm::AwOpt).post_offline_success, true);
    gate.ordering("qt_opt+negatives <= 0.10", neg <= 0.10);
    gate.ordering("aw_opt > qt_opt+negatives", aw > neg);
    report("C10", "random-negatives no-rescue", gate.failures.is_empty(), &gate.detail(""));
}

#[test]
fn e1_learning_occurs_from_a_weak_start() {
    let (fresh, committed) = (&weak_start().results, pilot().weak_start.as_ref().unwrap());
    let aw = arm(fresh, Arm::AwOpt);
    let mut gate = Gate::new();
    gate.check("aw_opt final", aw.final_success, arm(committed, Arm::AwOpt).final_success, true);
    gate.ordering("aw_opt final > aw_opt post-offline", aw.final_success > aw.post_offline_success);
    report(
        "E1",
        "aw_opt online learning",
        gate.failures.is_empty(),
        &gate.detail(&format!("post-offline {:.3} -> final {:.3}", aw.post_offline_success, aw.final_success)),
    );
}

#[test]
fn e2_awac_stagnates_from_a_weak_start() {
    let (fresh, committed) = (&weak_start().results, pilot().weak_start.as_ref().unwrap());
    let awac = arm(fresh, Arm::Awac);
    let mut gate = Gate::new();
    gate.check("awac final", awac.final_success, arm(committed, Arm::Awac).final_success, false);
    gate.ordering("awac final <= awac post-offline + 0.05", awac.final_success <= awac.post_offline_success + 0.05);
    report(
        "E2",
        "awac stagnation regression guard",
        gate.failures.is_empty(),
        &gate.detail(&format!(
            "post-offline {:.3} -> after 500 episodes {:.3}",
            awac.post_offline_success, awac.final_success
        )),
    );
}
