//! Twin delayed deep deterministic policy gradient, from scratch.
//!
//! One actor and two critics with Polyak-averaged target copies. Critic
//! targets use the smaller of the two target critics and a noise-smoothed
//! target action; the actor and all targets are updated every `policy_delay`
//! learning steps.

mod checkpoint;
mod mlp;
mod replay;
mod train;

pub use checkpoint::{checkpoint_json, load_checkpoint, parse_checkpoint, save_checkpoint, Checkpoint};
pub use mlp::{Adam, Mlp, OutputActivation, Tape};
pub use replay::{Batch, ReplayBuffer, Transition};
pub use train::{train, write_metrics_csv, MetricsRow, TrainConfig, TrainOutcome, METRICS_HEADER};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const ACTION_DIM: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Td3Config {
    pub gamma: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    /// Soft target update rate.
    pub tau: f64,
    /// Target policy smoothing noise sd and clip.
    pub target_noise: f64,
    pub noise_clip: f64,
    pub policy_delay: u64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    /// Exploration noise sd while acting.
    pub explore_sigma: f64,
    /// Uniform-random steps before learning starts.
    pub warmup_steps: u64,
    pub hidden: Vec<usize>,
}

impl Default for Td3Config {
    fn default() -> Self {
        Td3Config {
            gamma: 0.99,
            batch_size: 32,
            buffer_capacity: 100_000,
            tau: 0.001,
            target_noise: 0.2,
            noise_clip: 0.5,
            policy_delay: 2,
            actor_lr: 1e-4,
            critic_lr: 1e-4,
            explore_sigma: 0.1,
            warmup_steps: 10_000,
            hidden: vec![128, 128],
        }
    }
}

impl Td3Config {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("td3: {what}")));
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        if self.batch_size == 0 || self.buffer_capacity == 0 {
            return bad("batch size and buffer capacity must be positive");
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return bad("tau must lie in [0, 1]");
        }
        if self.target_noise < 0.0 || self.noise_clip < 0.0 || self.explore_sigma < 0.0 {
            return bad("noise parameters must be non-negative");
        }
        if self.policy_delay == 0 {
            return bad("policy delay must be at least 1");
        }
        if self.actor_lr < 0.0 || self.critic_lr < 0.0 {
            return bad("learning rates must be non-negative");
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden layers must be non-empty");
        }
        Ok(())
    }
}

fn clamp_action(x: f64) -> f64 {
    x.clamp(-1.0, 1.0)
}

/// `clamp(mu(s) + eps, -1, 1)` with `eps ~ N(0, sigma)` per component.
pub fn select_action(actor: &Mlp, state: &[f64], sigma: f64, rng: &mut impl Rng) -> Result<[f64; 2]> {
    let mu = actor.forward(state)?;
    if sigma == 0.0 {
        return Ok([clamp_action(mu[0]), clamp_action(mu[1])]);
    }
    let noise = Normal::new(0.0, sigma).map_err(|e| Error::Config(e.to_string()))?;
    Ok([
        clamp_action(mu[0] + noise.sample(rng)),
        clamp_action(mu[1] + noise.sample(rng)),
    ])
}

/// Clipped Gaussian smoothing noise added to target actions.
pub fn smoothing_noise(sigma: f64, clip: f64, rng: &mut impl Rng) -> f64 {
    if sigma == 0.0 || clip == 0.0 {
        return 0.0;
    }
    let z: f64 = rng.sample(rand_distr::StandardNormal);
    (sigma * z).clamp(-clip, clip)
}

/// `mu'(s') + clip(eps, -c, c)` per row, clamped to the action box.
/// Returns a `batch × 2` row-major matrix.
pub fn target_action(target_actor: &Mlp, next_states: &[f64], cfg: &Td3Config, rng: &mut impl Rng) -> Vec<f64> {
    let batch = next_states.len() / target_actor.input_dim();
    let mut tape = Tape::default();
    target_actor.forward_batch(next_states, batch, &mut tape);
    tape.output()
        .iter()
        .map(|mu| clamp_action(mu + smoothing_noise(cfg.target_noise, cfg.noise_clip, rng)))
        .collect()
}

fn concat_rows(states: &[f64], state_dim: usize, actions: &[f64], out: &mut Vec<f64>) {
    out.clear();
    for (s, a) in states.chunks_exact(state_dim).zip(actions.chunks_exact(ACTION_DIM)) {
        out.extend_from_slice(s);
        out.extend_from_slice(a);
    }
}

#[derive(Debug, Clone, Default)]
struct Scratch {
    batch: Batch,
    tape_actor: Tape,
    tape_critic: Tape,
    critic_in: Vec<f64>,
    upstream: Vec<f64>,
    grads: Vec<f64>,
    input_grad: Vec<f64>,
}

/// Losses and objective of one learning step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearnStats {
    pub critic_loss: [f64; 2],
    /// Mean `Q1(s, mu(s))`, present on policy-update steps.
    pub actor_objective: Option<f64>,
}

/// Online and target networks with their optimizers.
#[derive(Debug, Clone)]
pub struct Td3Agent {
    pub cfg: Td3Config,
    pub state_dim: usize,
    pub actor: Mlp,
    pub critic1: Mlp,
    pub critic2: Mlp,
    pub actor_target: Mlp,
    pub critic1_target: Mlp,
    pub critic2_target: Mlp,
    pub actor_opt: Adam,
    pub critic1_opt: Adam,
    pub critic2_opt: Adam,
    learn_steps: u64,
    scratch: Scratch,
}

impl Td3Agent {
    pub fn new(state_dim: usize, cfg: Td3Config, rng: &mut impl Rng) -> Result<Self> {
        cfg.validate()?;
        let mut actor_dims = vec![state_dim];
        actor_dims.extend_from_slice(&cfg.hidden);
        actor_dims.push(ACTION_DIM);
        let mut critic_dims = vec![state_dim + ACTION_DIM];
        critic_dims.extend_from_slice(&cfg.hidden);
        critic_dims.push(1);

        let actor = Mlp::new(&actor_dims, OutputActivation::Tanh, rng)?;
        let critic1 = Mlp::new(&critic_dims, OutputActivation::Identity, rng)?;
        let critic2 = Mlp::new(&critic_dims, OutputActivation::Identity, rng)?;
        Ok(Td3Agent {
            actor_opt: Adam::new(actor.params().len(), cfg.actor_lr),
            critic1_opt: Adam::new(critic1.params().len(), cfg.critic_lr),
            critic2_opt: Adam::new(critic2.params().len(), cfg.critic_lr),
            actor_target: actor.clone(),
            critic1_target: critic1.clone(),
            critic2_target: critic2.clone(),
            actor,
            critic1,
            critic2,
            cfg,
            state_dim,
            learn_steps: 0,
            scratch: Scratch::default(),
        })
    }

    pub fn learn_steps(&self) -> u64 {
        self.learn_steps
    }

    /// Deterministic policy output.
    pub fn act(&self, state: &[f64]) -> Result<[f64; 2]> {
        select_action(&self.actor, state, 0.0, &mut rand::rngs::mock::StepRng::new(0, 0))
    }

    /// `y = r + gamma (1 - done) min_j Q'_j(s', a~)`.
    pub fn critic_targets(&self, batch: &Batch, rng: &mut impl Rng) -> Vec<f64> {
        let next_actions = target_action(&self.actor_target, &batch.next_states, &self.cfg, rng);
        let mut input = Vec::new();
        concat_rows(&batch.next_states, batch.state_dim, &next_actions, &mut input);
        let mut t1 = Tape::default();
        let mut t2 = Tape::default();
        self.critic1_target.forward_batch(&input, batch.size, &mut t1);
        self.critic2_target.forward_batch(&input, batch.size, &mut t2);
        (0..batch.size)
            .map(|i| {
                let q = t1.output()[i].min(t2.output()[i]);
                batch.rewards[i] + self.cfg.gamma * (1.0 - batch.dones[i]) * q
            })
            .collect()
    }

    /// One Adam step of each critic on the mean squared error to `targets`.
    /// Returns the losses before the step.
    pub fn update_critics(&mut self, batch: &Batch, targets: &[f64]) -> [f64; 2] {
        let n = batch.size as f64;
        let sc = &mut self.scratch;
        concat_rows(&batch.states, batch.state_dim, &batch.actions, &mut sc.critic_in);
        let mut losses = [0.0; 2];
        let critics = [
            (&mut self.critic1, &mut self.critic1_opt),
            (&mut self.critic2, &mut self.critic2_opt),
        ];
        for (k, (critic, opt)) in critics.into_iter().enumerate() {
            critic.forward_batch(&sc.critic_in, batch.size, &mut sc.tape_critic);
            sc.upstream.clear();
            let mut loss = 0.0;
            for (q, y) in sc.tape_critic.output().iter().zip(targets) {
                let e = q - y;
                loss += e * e;
                sc.upstream.push(2.0 * e / n);
            }
            losses[k] = loss / n;
            sc.grads.clear();
            sc.grads.resize(critic.params().len(), 0.0);
            critic.backward(&sc.tape_critic, &sc.upstream, Some(&mut sc.grads), None);
            opt.step(critic.params_mut(), &sc.grads);
        }
        losses
    }

    /// Gradient of `-mean Q1(s, mu(s))` with respect to the actor parameters,
    /// along with the objective `mean Q1(s, mu(s))`.
    pub fn actor_gradient(&mut self, states: &[f64], batch: usize) -> (Vec<f64>, f64) {
        let sc = &mut self.scratch;
        self.actor.forward_batch(states, batch, &mut sc.tape_actor);
        concat_rows(states, self.state_dim, sc.tape_actor.output(), &mut sc.critic_in);
        self.critic1.forward_batch(&sc.critic_in, batch, &mut sc.tape_critic);
        let objective = sc.tape_critic.output().iter().sum::<f64>() / batch as f64;

        sc.upstream.clear();
        sc.upstream.resize(batch, -1.0 / batch as f64);
        self.critic1.backward(&sc.tape_critic, &sc.upstream, None, Some(&mut sc.input_grad));
        let width = self.state_dim + ACTION_DIM;
        let action_grad: Vec<f64> = sc
            .input_grad
            .chunks_exact(width)
            .flat_map(|row| row[self.state_dim..].iter().copied())
            .collect();
        let mut grads = vec![0.0; self.actor.params().len()];
        self.actor.backward(&sc.tape_actor, &action_grad, Some(&mut grads), None);
        (grads, objective)
    }

    /// On every `policy_delay`-th learning step: one actor ascent step on
    /// `mean Q1(s, mu(s))`, then Polyak updates of all three targets.
    pub fn update_actor_and_targets(&mut self, batch: &Batch, learn_step: u64) -> Option<f64> {
        if !learn_step.is_multiple_of(self.cfg.policy_delay) {
            return None;
        }
        let (grads, objective) = self.actor_gradient(&batch.states, batch.size);
        self.actor_opt.step(self.actor.params_mut(), &grads);
        self.soft_update_targets();
        Some(objective)
    }

    pub fn soft_update_targets(&mut self) {
        let tau = self.cfg.tau;
        self.actor_target.soft_update_from(&self.actor, tau);
        self.critic1_target.soft_update_from(&self.critic1, tau);
        self.critic2_target.soft_update_from(&self.critic2, tau);
    }

    /// Full learning step on a batch sampled from `buffer`.
    pub fn learn(&mut self, buffer: &ReplayBuffer, rng: &mut impl Rng) -> LearnStats {
        let mut batch = std::mem::take(&mut self.scratch.batch);
        buffer.sample_into(self.cfg.batch_size, rng, &mut batch);
        let stats = self.learn_on(&batch, rng);
        self.scratch.batch = batch;
        stats
    }

    /// Learning step on a given batch.
    pub fn learn_on(&mut self, batch: &Batch, rng: &mut impl Rng) -> LearnStats {
        let targets = self.critic_targets(batch, rng);
        let critic_loss = self.update_critics(batch, &targets);
        self.learn_steps += 1;
        let actor_objective = self.update_actor_and_targets(batch, self.learn_steps);
        LearnStats {
            critic_loss,
            actor_objective,
        }
    }
}
