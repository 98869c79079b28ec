//! Obstacle-avoidance environments.
//!
//! [`ScenarioEnv`] plays one pooled scenario per episode with a terminal-only
//! reward. [`BoxEnv`] is the random-initialization baseline: an agent-centred
//! square with obstacles beamed across its borders and long episodes.

use std::f64::consts::PI;
use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dynamics::{integrate_step, step_count, Control, Obstacle, Pose, VehicleModel, Velocity};
use crate::error::{Error, Result};
use crate::risk::{cpa_all, CrConfig};
use crate::scenario::{Scenario, ScenarioRanges, ScenarioSampler};
use crate::SimRng;

/// Normalization constants of the observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scales {
    pub u: f64,
    pub r: f64,
    pub d: f64,
    pub t: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub model: VehicleModel,
    pub scales: Scales,
    pub dt: f64,
    /// Obstacle slots in the observation.
    pub n_slots: usize,
    pub max_steps: usize,
    /// Horizon and grid of the risk metric; the CPA look-ahead is `2·t_lim`.
    pub cr: CrConfig,
}

impl EnvConfig {
    pub fn point_mass() -> Self {
        let cr = CrConfig::default();
        EnvConfig {
            model: VehicleModel::point_mass(),
            scales: Scales {
                u: 1.5,
                r: 0.5,
                d: 15.0,
                t: 20.0,
            },
            dt: 0.1,
            n_slots: 3,
            max_steps: step_count(2.0 * cr.t_lim, 0.1),
            cr,
        }
    }

    pub fn robot() -> Self {
        let cr = CrConfig::default();
        EnvConfig {
            model: VehicleModel::robot(),
            scales: Scales {
                u: 6.0,
                r: 0.2,
                d: 40.0,
                t: 20.0,
            },
            dt: 0.1,
            n_slots: 3,
            max_steps: step_count(2.0 * cr.t_lim, 0.1),
            cr,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.cr.validate()?;
        let s = self.scales;
        if [s.u, s.r, s.d, s.t, self.dt].iter().any(|v| !(*v > 0.0)) {
            return Err(Error::Config("scales and dt must be positive".into()));
        }
        if self.n_slots == 0 || self.max_steps == 0 {
            return Err(Error::Config("n_slots and max_steps must be at least 1".into()));
        }
        Ok(())
    }

    pub fn state_dim(&self) -> usize {
        2 + 6 * self.n_slots
    }
}

/// Wraps an angle to `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

/// Agent and obstacle state of a running episode.
#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub pose: Pose,
    pub vel: Velocity,
    pub obstacles: Vec<Obstacle>,
}

impl World {
    pub fn from_scenario(scenario: &Scenario, model: &VehicleModel) -> Self {
        let (pose, vel) = scenario.agent();
        World {
            pose,
            vel,
            obstacles: scenario.obstacles_for(model),
        }
    }

    pub fn distances(&self) -> Vec<f64> {
        self.obstacles
            .iter()
            .map(|o| {
                let p = o.pose();
                self.pose.distance_to(p.x, p.y)
            })
            .collect()
    }

    fn collides(&self, distances: &[f64], model: &VehicleModel) -> bool {
        distances
            .iter()
            .zip(&self.obstacles)
            .any(|(d, o)| *d < model.r_coll + o.r_coll)
    }

    fn advance(&mut self, ctrl: &Control, model: &VehicleModel, dt: f64) {
        (self.pose, self.vel) = integrate_step(&self.pose, &self.vel, ctrl, model, dt);
        for o in &mut self.obstacles {
            o.step(dt);
        }
    }
}

/// Slot contents for an empty obstacle slot: a far, slow, irrelevant obstacle.
pub const DUMMY_SLOT: [f64; 6] = [2.0, 0.0, 0.0, 0.0, 2.0, 2.0];

/// Builds the observation vector.
///
/// Layout: `u/u_s, r/r_s`, then per slot `d/d_s, u_obst/u_s, bearing/pi,
/// relative heading/pi, DCPA/d_s, TCPA/t_s`. Slots are ordered by ascending
/// TCPA, ties by distance then obstacle index. When there are more obstacles
/// than slots, approaching obstacles (positive TCPA) are kept first, by TCPA,
/// then receding ones by distance.
pub fn observe(world: &World, cfg: &EnvConfig) -> Vec<f64> {
    let s = cfg.scales;
    let agent = (world.pose, world.vel);
    let cpas = cpa_all(agent, &world.obstacles, &cfg.model, cfg.dt, cfg.cr.cpa_horizon());
    let dists = world.distances();

    let mut order: Vec<usize> = (0..world.obstacles.len()).collect();
    let standard = |a: &usize, b: &usize| {
        cpas[*a]
            .tcpa
            .total_cmp(&cpas[*b].tcpa)
            .then(dists[*a].total_cmp(&dists[*b]))
            .then(a.cmp(b))
    };
    if order.len() > cfg.n_slots {
        order.sort_by(|a, b| {
            let ra = cpas[*a].tcpa <= 0.0;
            let rb = cpas[*b].tcpa <= 0.0;
            ra.cmp(&rb).then_with(|| {
                if ra {
                    dists[*a].total_cmp(&dists[*b]).then(a.cmp(b))
                } else {
                    standard(a, b)
                }
            })
        });
        order.truncate(cfg.n_slots);
    }
    order.sort_by(standard);

    let mut state = Vec::with_capacity(cfg.state_dim());
    state.push(world.vel.u / s.u);
    state.push(world.vel.r / s.r);
    for &i in &order {
        let o = &world.obstacles[i];
        let p = o.pose();
        let bearing = wrap_angle((p.y - world.pose.y).atan2(p.x - world.pose.x) - world.pose.psi);
        let heading = wrap_angle(p.psi - world.pose.psi);
        state.extend_from_slice(&[
            dists[i] / s.d,
            o.speed() / s.u,
            bearing / PI,
            heading / PI,
            cpas[i].dcpa / s.d,
            cpas[i].tcpa / s.t,
        ]);
    }
    for _ in order.len()..cfg.n_slots {
        state.extend_from_slice(&DUMMY_SLOT);
    }
    state
}

/// Multiplies every component by an independent `Normal(1, sigma)` draw.
pub fn noise_wrap(state: &[f64], sigma: f64, rng: &mut impl Rng) -> Result<Vec<f64>> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::Config(format!("noise sd {sigma} must be non-negative")));
    }
    if sigma == 0.0 {
        return Ok(state.to_vec());
    }
    let normal = Normal::new(1.0, sigma).expect("valid normal");
    Ok(state.iter().map(|x| x * normal.sample(rng)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Running,
    Collision,
    Success,
    Truncated,
}

impl Outcome {
    pub fn as_str(&self) -> &'static str {
        match self {
            Outcome::Running => "running",
            Outcome::Collision => "collision",
            Outcome::Success => "success",
            Outcome::Truncated => "truncated",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub next_state: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub outcome: Outcome,
}

/// Interface the training loop drives.
pub trait TrainingEnv {
    fn state_dim(&self) -> usize;

    /// Starts a new episode and returns its first observation.
    fn reset_episode(&mut self, rng: &mut SimRng) -> Result<Vec<f64>>;

    fn step(&mut self, action: [f64; 2]) -> Result<StepResult>;

    /// Whether hitting the step cap ends the return (no bootstrapping).
    fn truncation_is_terminal(&self) -> bool;
}

/// Episode over a single threat scenario.
///
/// Ends with -1 on collision, or +1 once the distance to every obstacle
/// increased over the last step. Reaching `max_steps` without collision also
/// scores +1.
#[derive(Debug, Clone)]
pub struct ScenarioEnv {
    cfg: EnvConfig,
    world: World,
    prev_dist: Vec<f64>,
    steps: usize,
    done: bool,
}

impl ScenarioEnv {
    pub fn new(cfg: EnvConfig) -> Self {
        ScenarioEnv {
            cfg,
            world: World {
                pose: Pose::ORIGIN,
                vel: Velocity::default(),
                obstacles: Vec::new(),
            },
            prev_dist: Vec::new(),
            steps: 0,
            done: true,
        }
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn reset(&mut self, scenario: &Scenario) -> Result<Vec<f64>> {
        if scenario.n_obst() > self.cfg.n_slots {
            return Err(Error::SlotOverflow {
                got: scenario.n_obst(),
                slots: self.cfg.n_slots,
            });
        }
        self.world = World::from_scenario(scenario, &self.cfg.model);
        self.prev_dist = self.world.distances();
        self.steps = 0;
        self.done = false;
        Ok(self.observe())
    }

    pub fn observe(&self) -> Vec<f64> {
        observe(&self.world, &self.cfg)
    }

    pub fn step(&mut self, action: [f64; 2]) -> Result<StepResult> {
        if self.done {
            return Err(Error::StepAfterDone);
        }
        let ctrl = self.cfg.model.action_to_control(action)?;
        self.world.advance(&ctrl, &self.cfg.model, self.cfg.dt);
        self.steps += 1;

        let dist = self.world.distances();
        let (outcome, reward) = if self.world.collides(&dist, &self.cfg.model) {
            (Outcome::Collision, -1.0)
        } else if dist.iter().zip(&self.prev_dist).all(|(d, p)| d > p) {
            (Outcome::Success, 1.0)
        } else if self.steps >= self.cfg.max_steps {
            (Outcome::Truncated, 1.0)
        } else {
            (Outcome::Running, 0.0)
        };
        self.prev_dist = dist;
        self.done = outcome != Outcome::Running;
        Ok(StepResult {
            next_state: self.observe(),
            reward,
            done: self.done,
            outcome,
        })
    }
}

/// Scenario environment fed by draws from a pool.
pub struct PoolEnv<'a> {
    env: ScenarioEnv,
    sampler: ScenarioSampler<'a>,
}

impl<'a> PoolEnv<'a> {
    pub fn new(cfg: EnvConfig, sampler: ScenarioSampler<'a>) -> Result<Self> {
        sampler.check_serves()?;
        Ok(PoolEnv {
            env: ScenarioEnv::new(cfg),
            sampler,
        })
    }
}

impl TrainingEnv for PoolEnv<'_> {
    fn state_dim(&self) -> usize {
        self.env.cfg.state_dim()
    }

    fn reset_episode(&mut self, rng: &mut SimRng) -> Result<Vec<f64>> {
        let scenario = self.sampler.draw(rng)?;
        self.env.reset(scenario)
    }

    fn step(&mut self, action: [f64; 2]) -> Result<StepResult> {
        self.env.step(action)
    }

    fn truncation_is_terminal(&self) -> bool {
        true
    }
}

/// Layout of the random-initialization baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxConfig {
    /// Edge length of the agent-centred square, m.
    pub edge: f64,
    pub n_obstacles: usize,
    pub episode_steps: usize,
    pub ranges: ScenarioRanges,
    /// Reward per collision-free step.
    pub alive_reward: f64,
}

impl BoxConfig {
    pub fn point_mass() -> Self {
        BoxConfig {
            edge: 35.0,
            n_obstacles: 5,
            episode_steps: 500,
            ranges: ScenarioRanges::point_mass(),
            alive_reward: 0.01,
        }
    }
}

/// Random-initialization baseline environment.
///
/// Obstacles start uniformly inside the square around the agent and are
/// beamed to the opposite edge (toroidally) when they leave it. Each
/// collision-free step pays `alive_reward`; an overlap pays -1 and ends the
/// episode.
#[derive(Debug, Clone)]
pub struct BoxEnv {
    cfg: EnvConfig,
    layout: BoxConfig,
    world: World,
    steps: usize,
    done: bool,
}

impl BoxEnv {
    pub fn new(cfg: EnvConfig, layout: BoxConfig) -> Result<Self> {
        cfg.validate()?;
        if !(layout.edge > 0.0) || layout.n_obstacles == 0 || layout.episode_steps == 0 {
            return Err(Error::Config("box edge, obstacle count and episode length must be positive".into()));
        }
        Ok(BoxEnv {
            cfg,
            layout,
            world: World {
                pose: Pose::ORIGIN,
                vel: Velocity::default(),
                obstacles: Vec::new(),
            },
            steps: 0,
            done: true,
        })
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn layout(&self) -> &BoxConfig {
        &self.layout
    }

    /// Random initial world: agent at the origin, obstacles uniform in the square.
    pub fn sample_initial(&self, rng: &mut impl Rng) -> World {
        let ranges = &self.layout.ranges;
        let u0 = sample_range(rng, ranges.u0);
        let r0 = sample_range(rng, ranges.r0);
        let half = 0.5 * self.layout.edge;
        let obstacles = (0..self.layout.n_obstacles)
            .map(|_| {
                let x = rng.gen_range(-half..half);
                let y = rng.gen_range(-half..half);
                let psi = rng.gen_range(0.0..2.0 * PI);
                let u = sample_range(rng, ranges.u_obst);
                Obstacle::new(x, y, psi, u, self.cfg.model.r_coll)
            })
            .collect();
        World {
            pose: Pose::ORIGIN,
            vel: Velocity::new(u0, 0.0, r0),
            obstacles,
        }
    }

    pub fn reset_box(&mut self, rng: &mut impl Rng) -> Vec<f64> {
        self.world = self.sample_initial(rng);
        self.steps = 0;
        self.done = false;
        observe(&self.world, &self.cfg)
    }

    /// Installs a specific world, for tests and replays.
    pub fn reset_with(&mut self, world: World) -> Vec<f64> {
        self.world = world;
        self.steps = 0;
        self.done = false;
        observe(&self.world, &self.cfg)
    }

    fn beam(&mut self) {
        let edge = self.layout.edge;
        let half = 0.5 * edge;
        let (ax, ay) = (self.world.pose.x, self.world.pose.y);
        for o in &mut self.world.obstacles {
            let p = o.pose();
            let mut dx = 0.0;
            let mut dy = 0.0;
            if p.x - ax > half {
                dx = -edge;
            } else if p.x - ax < -half {
                dx = edge;
            }
            if p.y - ay > half {
                dy = -edge;
            } else if p.y - ay < -half {
                dy = edge;
            }
            if dx != 0.0 || dy != 0.0 {
                o.translate(dx, dy);
            }
        }
    }

    pub fn step_box(&mut self, action: [f64; 2]) -> Result<StepResult> {
        if self.done {
            return Err(Error::StepAfterDone);
        }
        let ctrl = self.cfg.model.action_to_control(action)?;
        self.world.advance(&ctrl, &self.cfg.model, self.cfg.dt);
        self.beam();
        self.steps += 1;

        let dist = self.world.distances();
        let (outcome, reward) = if self.world.collides(&dist, &self.cfg.model) {
            (Outcome::Collision, -1.0)
        } else if self.steps >= self.layout.episode_steps {
            (Outcome::Truncated, self.layout.alive_reward)
        } else {
            (Outcome::Running, self.layout.alive_reward)
        };
        self.done = outcome != Outcome::Running;
        Ok(StepResult {
            next_state: observe(&self.world, &self.cfg),
            reward,
            done: self.done,
            outcome,
        })
    }
}

fn sample_range(rng: &mut impl Rng, range: [f64; 2]) -> f64 {
    if range[1] > range[0] {
        rng.gen_range(range[0]..range[1])
    } else {
        range[0]
    }
}

impl TrainingEnv for BoxEnv {
    fn state_dim(&self) -> usize {
        self.cfg.state_dim()
    }

    fn reset_episode(&mut self, rng: &mut SimRng) -> Result<Vec<f64>> {
        Ok(self.reset_box(rng))
    }

    fn step(&mut self, action: [f64; 2]) -> Result<StepResult> {
        self.step_box(action)
    }

    fn truncation_is_terminal(&self) -> bool {
        false
    }
}

/// One recorded time step of an episode.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    pub pose: Pose,
    pub vel: Velocity,
    pub action: [f64; 2],
    pub obstacles: Vec<(f64, f64)>,
    pub reward: f64,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EpisodeTrace {
    pub rows: Vec<TraceRow>,
}

impl EpisodeTrace {
    pub fn outcome(&self) -> Option<Outcome> {
        self.rows.last().map(|r| r.outcome)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let n_obst = self.rows.first().map_or(0, |r| r.obstacles.len());
        let mut header = String::from("t,x,y,psi,u,r,a0,a1");
        for i in 0..n_obst {
            header.push_str(&format!(",obs{i}_x,obs{i}_y"));
        }
        header.push_str(",reward,outcome");
        writeln!(out, "{header}")?;
        for row in &self.rows {
            let mut line = format!(
                "{},{},{},{},{},{},{},{}",
                row.t, row.pose.x, row.pose.y, row.pose.psi, row.vel.u, row.vel.r, row.action[0], row.action[1]
            );
            for (x, y) in &row.obstacles {
                line.push_str(&format!(",{x},{y}"));
            }
            line.push_str(&format!(",{},{}", row.reward, row.outcome.as_str()));
            writeln!(out, "{line}")?;
        }
        Ok(())
    }
}

/// Plays `scenario` with `policy` and records every step. The first row is
/// the initial state with a zero action.
pub fn trace_episode(
    cfg: &EnvConfig,
    scenario: &Scenario,
    mut policy: impl FnMut(&[f64]) -> [f64; 2],
) -> Result<EpisodeTrace> {
    let mut env = ScenarioEnv::new(*cfg);
    let mut state = env.reset(scenario)?;
    let snapshot = |env: &ScenarioEnv, t: f64, action: [f64; 2], reward: f64, outcome: Outcome| {
        let w = env.world();
        TraceRow {
            t,
            pose: w.pose,
            vel: w.vel,
            action,
            obstacles: w.obstacles.iter().map(|o| (o.pose().x, o.pose().y)).collect(),
            reward,
            outcome,
        }
    };
    let mut trace = EpisodeTrace {
        rows: vec![snapshot(&env, 0.0, [0.0, 0.0], 0.0, Outcome::Running)],
    };
    loop {
        let action = policy(&state);
        let result = env.step(action)?;
        let t = env.steps() as f64 * cfg.dt;
        trace.rows.push(snapshot(&env, t, action, result.reward, result.outcome));
        if result.done {
            return Ok(trace);
        }
        state = result.next_state;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::ObstacleState;
    use rand_chacha::rand_core::SeedableRng;

    fn scenario(obstacles: Vec<ObstacleState>) -> Scenario {
        Scenario {
            u0: 1.0,
            r0: 0.0,
            obstacles,
            cr: 0.5,
        }
    }

    fn obst(x: f64, y: f64, psi: f64, u: f64) -> ObstacleState {
        ObstacleState { x, y, psi, u }
    }

    #[test]
    fn wrap_convention() {
        assert_eq!(wrap_angle(PI), PI);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-15);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        assert_eq!(wrap_angle(0.0), 0.0);
    }

    #[test]
    fn reset_observation_layout() {
        let cfg = EnvConfig::point_mass();
        let mut env = ScenarioEnv::new(cfg);
        let s = env.reset(&scenario(vec![obst(10.0, 0.0, PI, 1.0)])).unwrap();
        assert_eq!(s.len(), 20);
        assert_eq!(s[0], 1.0 / 1.5);
        assert_eq!(&s[8..14], &DUMMY_SLOT);
        assert_eq!(&s[14..20], &DUMMY_SLOT);
        // head-on, 10 m apart closing at 2 m/s
        assert!((s[2] - 10.0 / 15.0).abs() < 1e-12);
        assert!((s[7] - 5.0 / 20.0).abs() < 1e-12);
        assert!(s[6].abs() < 1e-9);
        assert!((s[5].abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dead_ahead_same_heading_angles_zero() {
        let cfg = EnvConfig::point_mass();
        let mut env = ScenarioEnv::new(cfg);
        let s = env.reset(&scenario(vec![obst(10.0, 0.0, 0.0, 0.5)])).unwrap();
        assert_eq!(s[4], 0.0);
        assert_eq!(s[5], 0.0);
    }

    #[test]
    fn slots_sorted_by_tcpa_not_distance() {
        let cfg = EnvConfig::point_mass();
        let mut env = ScenarioEnv::new(cfg);
        // Both 10 m away. The ahead-right one is met head-on (TCPA 5 s); the
        // behind-left one chases slowly (TCPA much later).
        let ahead_right = obst(10.0 * (-0.3f64).cos(), 10.0 * (-0.3f64).sin(), PI, 1.0);
        let behind_left = obst(-10.0 * (0.3f64).cos(), 10.0 * (0.3f64).sin(), 0.0, 1.2);
        let s = env.reset(&scenario(vec![behind_left, ahead_right])).unwrap();
        assert!(s[7] < s[13]);
        assert!(s[4] < 0.0, "first slot is the ahead-right obstacle");
        assert!(s[10] > 0.5, "second slot is behind-left");
    }

    #[test]
    fn receding_obstacles_fall_back_to_distance() {
        let cfg = EnvConfig::point_mass();
        let mut env = ScenarioEnv::new(cfg);
        let far = obst(-20.0, 0.0, PI, 1.0);
        let near = obst(0.0, -8.0, -PI / 2.0, 1.0);
        let s = env.reset(&scenario(vec![far, near])).unwrap();
        assert_eq!(s[7], 0.0);
        assert_eq!(s[13], 0.0);
        assert!(s[2] < s[8]);
    }

    #[test]
    fn overlapping_start_collides() {
        let cfg = EnvConfig::point_mass();
        let mut env = ScenarioEnv::new(cfg);
        env.reset(&scenario(vec![obst(1.0, 0.0, 0.0, 1.0)])).unwrap();
        let r = env.step([0.0, 0.0]).unwrap();
        assert_eq!(r.outcome, Outcome::Collision);
        assert_eq!(r.reward, -1.0);
        assert!(r.done);
        assert!(matches!(env.step([0.0, 0.0]), Err(Error::StepAfterDone)));
    }

    #[test]
    fn receding_obstacle_succeeds() {
        let cfg = EnvConfig::point_mass();
        let mut env = ScenarioEnv::new(cfg);
        env.reset(&scenario(vec![obst(-10.0, 0.0, PI, 1.0)])).unwrap();
        let r = env.step([0.0, 0.0]).unwrap();
        assert_eq!(r.outcome, Outcome::Success);
        assert_eq!(r.reward, 1.0);
    }

    #[test]
    fn approaching_step_is_neutral() {
        let cfg = EnvConfig::point_mass();
        let mut env = ScenarioEnv::new(cfg);
        env.reset(&scenario(vec![obst(30.0, 0.0, PI, 1.0)])).unwrap();
        let r = env.step([0.0, 0.0]).unwrap();
        assert_eq!(r.outcome, Outcome::Running);
        assert_eq!(r.reward, 0.0);
        assert!(!r.done);
    }

    #[test]
    fn slot_overflow() {
        let mut cfg = EnvConfig::point_mass();
        cfg.n_slots = 1;
        let mut env = ScenarioEnv::new(cfg);
        let err = env.reset(&scenario(vec![obst(30.0, 0.0, PI, 1.0), obst(40.0, 0.0, PI, 1.0)]));
        assert!(matches!(err, Err(Error::SlotOverflow { got: 2, slots: 1 })));
    }

    #[test]
    fn noise_wrap_cases() {
        let mut rng = SimRng::seed_from_u64(1);
        let s = vec![0.3, -1.2, 0.0, 2.0];
        assert_eq!(noise_wrap(&s, 0.0, &mut rng).unwrap(), s);
        let noisy = noise_wrap(&s, 0.5, &mut rng).unwrap();
        assert_eq!(noisy[2], 0.0);
        assert_ne!(noisy[0], s[0]);
        assert!(noise_wrap(&s, -0.1, &mut rng).is_err());
    }

    #[test]
    fn box_beams_obstacles_across() {
        let cfg = EnvConfig::point_mass();
        let mut env = BoxEnv::new(cfg, BoxConfig::point_mass()).unwrap();
        env.reset_with(World {
            pose: Pose::ORIGIN,
            vel: Velocity::new(0.0, 0.0, 0.0),
            obstacles: vec![Obstacle::new(17.45, 5.0, 0.0, 1.0, 3.0)],
        });
        env.step_box([0.0, 0.0]).unwrap();
        let p = env.world().obstacles[0].pose();
        assert!((p.x - (17.55 - 35.0)).abs() < 1e-9, "{p:?}");
        assert_eq!(p.y, 5.0);
        assert_eq!(p.psi, 0.0);
        assert_eq!(env.world().obstacles[0].speed(), 1.0);
    }

    #[test]
    fn box_rewards() {
        let cfg = EnvConfig::point_mass();
        let mut env = BoxEnv::new(cfg, BoxConfig::point_mass()).unwrap();
        // Obstacles far from the agent's lane and parked.
        let parked = (0..5)
            .map(|i| Obstacle::new(-15.0 + 7.0 * i as f64, 15.0, 0.0, 0.0, 3.0))
            .collect();
        env.reset_with(World {
            pose: Pose::ORIGIN,
            vel: Velocity::new(0.0, 0.0, 0.0),
            obstacles: parked,
        });
        let mut total = 0.0;
        let mut last = None;
        for _ in 0..500 {
            let r = env.step_box([0.0, 0.0]).unwrap();
            total += r.reward;
            last = Some(r);
        }
        assert!((total - 5.0).abs() < 1e-9);
        assert_eq!(last.unwrap().outcome, Outcome::Truncated);

        env.reset_with(World {
            pose: Pose::ORIGIN,
            vel: Velocity::new(0.0, 0.0, 0.0),
            obstacles: vec![Obstacle::new(7.05, 0.0, PI, 1.0, 3.0)],
        });
        let mut k = 0;
        loop {
            k += 1;
            let r = env.step_box([0.0, 0.0]).unwrap();
            if r.done {
                assert_eq!(r.reward, -1.0);
                assert_eq!(r.outcome, Outcome::Collision);
                break;
            }
            assert_eq!(r.reward, 0.01);
        }
        assert_eq!(k, 11);
    }

    #[test]
    fn box_observes_three_of_five() {
        let cfg = EnvConfig::point_mass();
        let mut env = BoxEnv::new(cfg, BoxConfig::point_mass()).unwrap();
        let mut rng = SimRng::seed_from_u64(4);
        let s = env.reset_box(&mut rng);
        assert_eq!(s.len(), 20);
        assert_eq!(env.world().obstacles.len(), 5);
    }

    #[test]
    fn trace_records_episode() {
        let cfg = EnvConfig::point_mass();
        let sc = scenario(vec![obst(12.0, 0.0, PI, 1.0)]);
        let trace = trace_episode(&cfg, &sc, |_| [0.0, 0.0]).unwrap();
        assert_eq!(trace.outcome(), Some(Outcome::Collision));
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,x,y,psi,u,r,a0,a1,obs0_x,obs0_y,reward,outcome\n"));
        assert_eq!(text.lines().count(), trace.rows.len() + 1);
    }
}
