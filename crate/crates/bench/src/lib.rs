//! Fixtures shared by the benchmarks.

use awopt_core::agent::{make_algorithm, Agent, Overrides, Variant};
use awopt_core::env::{generate_dataset, Env, KeepMode, NavConfig, NavEnv, ScriptedNavPolicy};
use awopt_core::replay::ReplayBuffer;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A freshly initialized agent of `variant` for the default nav task.
pub fn nav_agent(variant: Variant) -> (Agent, NavEnv) {
    let env = NavEnv::new(NavConfig::default()).expect("default nav config");
    let config = make_algorithm(variant, &Overrides::default()).expect("preset");
    let agent = Agent::new(config, env.observation_dim(), env.action_spec(), &mut rng(0)).expect("agent");
    (agent, env)
}

/// A buffer holding `episodes` noisy scripted nav episodes, both outcomes.
pub fn nav_buffer(episodes: usize) -> ReplayBuffer {
    let config = NavConfig::default();
    let mut env = NavEnv::new(config.clone()).expect("default nav config");
    let mut policy = ScriptedNavPolicy::new(&config, 0.5);
    let data = generate_dataset(&mut env, &mut policy, episodes, KeepMode::All, 0, &mut rng(1)).expect("dataset");
    let mut buffer = ReplayBuffer::new(100_000);
    for ep in &data {
        buffer.insert_episode(ep);
    }
    buffer
}

/// A start observation of the nav task.
pub fn nav_observation(env: &mut NavEnv, seed: u64) -> Vec<f64> {
    env.reset(&mut rng(seed))
}
