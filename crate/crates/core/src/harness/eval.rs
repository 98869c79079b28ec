use rand_chacha::rand_core::SeedableRng;

use super::ValidationSuite;
use crate::env::{noise_wrap, EnvConfig, Outcome, ScenarioEnv};
use crate::error::Result;
use crate::scenario::Scenario;
use crate::td3::{select_action, MetricsRow, Mlp};
use crate::SimRng;

/// Aggregate of one pass over a validation suite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    pub episodes: usize,
    pub successes: usize,
    pub collisions: usize,
    pub total_steps: usize,
}

impl EvalReport {
    pub fn success_ratio(&self) -> f64 {
        self.successes as f64 / self.episodes as f64
    }

    pub fn collision_rate(&self) -> f64 {
        self.collisions as f64 / self.episodes as f64
    }

    pub fn mean_episode_len(&self) -> f64 {
        self.total_steps as f64 / self.episodes as f64
    }

    pub fn metrics(&self, step: u64) -> MetricsRow {
        MetricsRow {
            step,
            success_ratio: self.success_ratio(),
            collision_rate: self.collision_rate(),
            mean_episode_len: self.mean_episode_len(),
        }
    }
}

/// Plays one scenario with the deterministic policy. Observation noise, if
/// any, uses a stream private to this episode.
pub fn run_episode(actor: &Mlp, scenario: &Scenario, cfg: &EnvConfig, sigma_n: f64, noise_seed: u64, episode: u64) -> Result<(Outcome, usize)> {
    let mut rng = SimRng::seed_from_u64(noise_seed);
    rng.set_stream(episode);
    let mut env = ScenarioEnv::new(*cfg);
    let mut state = env.reset(scenario)?;
    loop {
        let seen = noise_wrap(&state, sigma_n, &mut rng)?;
        let action = select_action(actor, &seen, 0.0, &mut rng)?;
        let step = env.step(action)?;
        if step.done {
            return Ok((step.outcome, env.steps()));
        }
        state = step.next_state;
    }
}

/// Runs every suite scenario once. Episodes may run on several threads; the
/// result does not depend on how many.
pub fn evaluate(actor: &Mlp, suite: &ValidationSuite, cfg: &EnvConfig, sigma_n: f64, noise_seed: u64) -> Result<EvalReport> {
    let play = |(i, s): (usize, &Scenario)| run_episode(actor, s, cfg, sigma_n, noise_seed, i as u64);
    #[cfg(feature = "parallel")]
    let results: Vec<Result<(Outcome, usize)>> = {
        use rayon::prelude::*;
        suite.scenarios().par_iter().enumerate().map(play).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<Result<(Outcome, usize)>> = suite.scenarios().iter().enumerate().map(play).collect();

    let mut report = EvalReport {
        episodes: 0,
        successes: 0,
        collisions: 0,
        total_steps: 0,
    };
    for r in results {
        let (outcome, steps) = r?;
        report.episodes += 1;
        report.total_steps += steps;
        if outcome == Outcome::Collision {
            report.collisions += 1;
        } else {
            report.successes += 1;
        }
    }
    Ok(report)
}
