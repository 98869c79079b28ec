use std::io::Write;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use serde::{Deserialize, Serialize};

use super::{select_action, ReplayBuffer, Td3Agent, Td3Config};
use crate::env::{Outcome, TrainingEnv};
use crate::error::{Error, Result};
use crate::scenario::f17;
use crate::SimRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub td3: Td3Config,
    pub budget_steps: u64,
    /// Evaluate after every this many environment steps.
    pub eval_interval: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            td3: Td3Config::default(),
            budget_steps: 1_000_000,
            eval_interval: 20_000,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.td3.validate()?;
        if self.eval_interval == 0 {
            return Err(Error::Config("eval interval must be positive".into()));
        }
        Ok(())
    }
}

/// One evaluation of the frozen policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub step: u64,
    pub success_ratio: f64,
    pub collision_rate: f64,
    pub mean_episode_len: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub agent: Td3Agent,
    pub metrics: Vec<MetricsRow>,
    pub episodes: u64,
}

/// Independent random streams derived from one seed.
fn stream(seed: u64, id: u64) -> SimRng {
    let mut rng = SimRng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Runs `cfg.budget_steps` environment steps with one learning update per
/// step after warmup. `eval` is called with the step count every
/// `eval_interval` steps and its result appended to the metrics series.
pub fn train<E, F>(env: &mut E, cfg: &TrainConfig, seed: u64, mut eval: F) -> Result<TrainOutcome>
where
    E: TrainingEnv + ?Sized,
    F: FnMut(u64, &Td3Agent) -> Result<MetricsRow>,
{
    cfg.validate()?;
    let mut init_rng = stream(seed, 0);
    let mut env_rng = stream(seed, 1);
    let mut act_rng = stream(seed, 2);
    let mut learn_rng = stream(seed, 3);

    let sd = env.state_dim();
    let mut agent = Td3Agent::new(sd, cfg.td3.clone(), &mut init_rng)?;
    let mut buffer = ReplayBuffer::new(cfg.td3.buffer_capacity, sd);
    let mut metrics = Vec::new();
    let mut episodes = 0;
    if cfg.budget_steps == 0 {
        return Ok(TrainOutcome {
            agent,
            metrics,
            episodes,
        });
    }

    let mut state = env.reset_episode(&mut env_rng)?;
    for step in 0..cfg.budget_steps {
        let action = if step < cfg.td3.warmup_steps {
            [act_rng.gen_range(-1.0..=1.0), act_rng.gen_range(-1.0..=1.0)]
        } else {
            select_action(&agent.actor, &state, cfg.td3.explore_sigma, &mut act_rng)?
        };
        let result = env.step(action)?;
        let terminal = match result.outcome {
            Outcome::Truncated => env.truncation_is_terminal(),
            _ => result.done,
        };
        buffer.push(&state, action, result.reward, &result.next_state, terminal)?;

        if step >= cfg.td3.warmup_steps {
            agent.learn(&buffer, &mut learn_rng);
        }

        if result.done {
            episodes += 1;
            state = env.reset_episode(&mut env_rng)?;
        } else {
            state = result.next_state;
        }

        let done_steps = step + 1;
        if done_steps % cfg.eval_interval == 0 {
            metrics.push(eval(done_steps, &agent)?);
        }
    }
    Ok(TrainOutcome {
        agent,
        metrics,
        episodes,
    })
}

pub const METRICS_HEADER: &str = "step,success_ratio,collision_rate,mean_episode_len";

/// Metrics CSV preceded by a `# suite_digest=` comment line.
pub fn write_metrics_csv<W: Write>(mut out: W, suite_digest: &str, rows: &[MetricsRow]) -> std::io::Result<()> {
    writeln!(out, "# suite_digest={suite_digest}")?;
    writeln!(out, "{METRICS_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{}",
            r.step,
            f17(r.success_ratio),
            f17(r.collision_rate),
            f17(r.mean_episode_len)
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::StepResult;

    /// Reward equals the first action component; episodes last 5 steps.
    struct Toy {
        t: usize,
    }

    impl TrainingEnv for Toy {
        fn state_dim(&self) -> usize {
            2
        }
        fn reset_episode(&mut self, rng: &mut SimRng) -> Result<Vec<f64>> {
            self.t = 0;
            Ok(vec![rng.gen_range(-1.0..1.0), 0.0])
        }
        fn step(&mut self, a: [f64; 2]) -> Result<StepResult> {
            self.t += 1;
            let done = self.t == 5;
            Ok(StepResult {
                next_state: vec![a[0], self.t as f64 / 5.0],
                reward: a[0],
                done,
                outcome: if done { Outcome::Truncated } else { Outcome::Running },
            })
        }
        fn truncation_is_terminal(&self) -> bool {
            true
        }
    }

    fn cfg(budget: u64) -> TrainConfig {
        TrainConfig {
            td3: Td3Config {
                hidden: vec![8, 8],
                warmup_steps: 20,
                batch_size: 8,
                ..Default::default()
            },
            budget_steps: budget,
            eval_interval: 25,
        }
    }

    fn probe(step: u64, agent: &Td3Agent) -> Result<MetricsRow> {
        let a = agent.act(&[0.5, 0.5])?;
        Ok(MetricsRow {
            step,
            success_ratio: a[0],
            collision_rate: a[1],
            mean_episode_len: agent.learn_steps() as f64,
        })
    }

    #[test]
    fn zero_budget_is_untrained() {
        let out = train(&mut Toy { t: 0 }, &cfg(0), 1, probe).unwrap();
        assert!(out.metrics.is_empty());
        assert_eq!(out.agent.learn_steps(), 0);
        let fresh = Td3Agent::new(2, cfg(0).td3, &mut stream(1, 0)).unwrap();
        assert_eq!(out.agent.actor, fresh.actor);
    }

    #[test]
    fn eval_cadence_and_warmup() {
        let out = train(&mut Toy { t: 0 }, &cfg(100), 1, probe).unwrap();
        let steps: Vec<u64> = out.metrics.iter().map(|m| m.step).collect();
        assert_eq!(steps, vec![25, 50, 75, 100]);
        assert_eq!(out.agent.learn_steps(), 80);
        assert_eq!(out.episodes, 20);
    }

    #[test]
    fn same_seed_same_series() {
        let a = train(&mut Toy { t: 0 }, &cfg(150), 9, probe).unwrap();
        let b = train(&mut Toy { t: 0 }, &cfg(150), 9, probe).unwrap();
        assert_eq!(a.metrics, b.metrics);
        assert_eq!(a.agent.actor, b.agent.actor);
        let c = train(&mut Toy { t: 0 }, &cfg(150), 10, probe).unwrap();
        assert_ne!(a.metrics, c.metrics);
    }

    #[test]
    fn zero_learning_rate_freezes_parameters() {
        let mut c = cfg(120);
        c.td3.actor_lr = 0.0;
        c.td3.critic_lr = 0.0;
        let out = train(&mut Toy { t: 0 }, &c, 4, probe).unwrap();
        let fresh = Td3Agent::new(2, c.td3.clone(), &mut stream(4, 0)).unwrap();
        assert_eq!(out.agent.learn_steps(), 100);
        assert_eq!(out.agent.actor, fresh.actor);
        assert_eq!(out.agent.critic1, fresh.critic1);
        assert_eq!(out.agent.critic2_target, fresh.critic2_target);
    }

    #[test]
    fn learns_the_toy_bandit() {
        let mut c = cfg(3000);
        c.td3.actor_lr = 1e-3;
        c.td3.critic_lr = 1e-3;
        c.td3.tau = 0.01;
        c.eval_interval = 3000;
        let out = train(&mut Toy { t: 0 }, &c, 2, probe).unwrap();
        assert!(out.metrics[0].success_ratio > 0.8, "{:?}", out.metrics);
    }

    #[test]
    fn metrics_csv_layout() {
        let mut buf = Vec::new();
        let row = MetricsRow {
            step: 20,
            success_ratio: 0.5,
            collision_rate: 0.25,
            mean_episode_len: 12.0,
        };
        write_metrics_csv(&mut buf, "abc", &[row]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# suite_digest=abc");
        assert_eq!(lines[1], METRICS_HEADER);
        assert!(lines[2].starts_with("20,5.0000000000000000e-1,"));
    }
}
