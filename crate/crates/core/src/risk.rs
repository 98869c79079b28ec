//! Maneuver-sampling collision risk and closest-point-of-approach analytics.
//!
//! The collision risk of a scene is the fraction of a uniform grid of
//! constant actions whose rollout brings the agent within collision distance
//! of any obstacle before the horizon `t_lim`. Distances are checked at the
//! sampled times `k·dt` only.

use serde::{Deserialize, Serialize};

use crate::dynamics::{integrate_step, step_count, Control, Obstacle, Pose, VehicleModel, Velocity};
use crate::error::{Error, Result};

/// Grid of constant actions; each component is equally spaced over `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControlGrid {
    pub n_u: usize,
    pub n_r: usize,
}

impl Default for ControlGrid {
    fn default() -> Self {
        ControlGrid { n_u: 11, n_r: 11 }
    }
}

impl ControlGrid {
    pub fn new(n_u: usize, n_r: usize) -> Result<Self> {
        if n_u < 2 || n_r < 2 {
            return Err(Error::Config(format!(
                "control grid needs at least 2 levels per axis, got {n_u}x{n_r}"
            )));
        }
        Ok(ControlGrid { n_u, n_r })
    }

    pub fn len(&self) -> usize {
        self.n_u * self.n_r
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    // Written so that mirrored indices give exactly negated levels.
    fn level(i: usize, n: usize) -> f64 {
        (2.0 * i as f64 - (n - 1) as f64) / (n - 1) as f64
    }

    /// Action at grid cell `(i, j)`, `i` indexing the longitudinal channel.
    pub fn action(&self, i: usize, j: usize) -> [f64; 2] {
        [Self::level(i, self.n_u), Self::level(j, self.n_r)]
    }

    /// All actions in row-major order (longitudinal index outermost).
    pub fn actions(&self) -> impl Iterator<Item = [f64; 2]> + '_ {
        (0..self.n_u).flat_map(move |i| (0..self.n_r).map(move |j| self.action(i, j)))
    }
}

/// Parameters of the collision-risk evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrConfig {
    pub t_lim: f64,
    pub dt: f64,
    pub grid: ControlGrid,
}

impl Default for CrConfig {
    fn default() -> Self {
        CrConfig {
            t_lim: 20.0,
            dt: 0.1,
            grid: ControlGrid::default(),
        }
    }
}

impl CrConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_lim > 0.0 && self.dt > 0.0) {
            return Err(Error::Config("t_lim and dt must be positive".into()));
        }
        if self.t_lim < 10.0 * self.dt * (1.0 - 1e-12) {
            return Err(Error::Config(format!(
                "t_lim {} shorter than ten steps of {}",
                self.t_lim, self.dt
            )));
        }
        ControlGrid::new(self.grid.n_u, self.grid.n_r).map(|_| ())
    }

    pub fn steps(&self) -> usize {
        step_count(self.t_lim, self.dt)
    }

    /// Default CPA look-ahead, twice the risk horizon.
    pub fn cpa_horizon(&self) -> f64 {
        2.0 * self.t_lim
    }
}

/// Per-action collision flags for one scene.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CollisionMask {
    pub grid: ControlGrid,
    /// Row-major `n_u × n_r` flags.
    pub flags: Vec<bool>,
}

impl CollisionMask {
    pub fn get(&self, i: usize, j: usize) -> bool {
        self.flags[i * self.grid.n_r + j]
    }

    pub fn collisions(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }

    /// Fraction of colliding actions.
    pub fn risk(&self) -> f64 {
        self.collisions() as f64 / self.flags.len() as f64
    }
}

/// Obstacle centre positions at every sampled time, `[step][obstacle]`.
fn obstacle_tracks(obstacles: &[Obstacle], steps: usize, dt: f64) -> Vec<(f64, f64)> {
    let mut track = Vec::with_capacity((steps + 1) * obstacles.len());
    for k in 0..=steps {
        let t = k as f64 * dt;
        track.extend(obstacles.iter().map(|o| o.position_at(t)));
    }
    track
}

/// For every grid action, a bit set of the obstacles it collides with.
/// With `first_only` the scan of an action stops at its first collision.
fn action_hits(
    agent: (Pose, Velocity),
    obstacles: &[Obstacle],
    model: &VehicleModel,
    cfg: &CrConfig,
    first_only: bool,
) -> Vec<u64> {
    assert!(obstacles.len() <= 64, "at most 64 obstacles per scene");
    let n = obstacles.len();
    if n == 0 {
        return vec![0; cfg.grid.len()];
    }
    let steps = cfg.steps();
    let track = obstacle_tracks(obstacles, steps, cfg.dt);
    let limits_sq: Vec<f64> = obstacles
        .iter()
        .map(|o| {
            let d = model.r_coll + o.r_coll;
            d * d
        })
        .collect();
    let all = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };

    cfg.grid
        .actions()
        .map(|action| {
            let ctrl: Control = model.control_unchecked(action);
            let (mut pose, mut vel) = agent;
            let mut hits = 0u64;
            for k in 0..=steps {
                if k > 0 {
                    (pose, vel) = integrate_step(&pose, &vel, &ctrl, model, cfg.dt);
                }
                let row = &track[k * n..(k + 1) * n];
                for (i, &(ox, oy)) in row.iter().enumerate() {
                    let dx = pose.x - ox;
                    let dy = pose.y - oy;
                    if dx * dx + dy * dy < limits_sq[i] {
                        hits |= 1 << i;
                    }
                }
                if hits != 0 && (first_only || hits == all) {
                    break;
                }
            }
            hits
        })
        .collect()
}

/// Collision flag of every grid action.
pub fn per_action_collision_mask(
    agent: (Pose, Velocity),
    obstacles: &[Obstacle],
    model: &VehicleModel,
    cfg: &CrConfig,
) -> CollisionMask {
    let flags = action_hits(agent, obstacles, model, cfg, true)
        .into_iter()
        .map(|h| h != 0)
        .collect();
    CollisionMask {
        grid: cfg.grid,
        flags,
    }
}

/// Fraction of grid actions that collide with any obstacle within `t_lim`.
pub fn collision_risk(
    agent: (Pose, Velocity),
    obstacles: &[Obstacle],
    model: &VehicleModel,
    cfg: &CrConfig,
) -> f64 {
    per_action_collision_mask(agent, obstacles, model, cfg).risk()
}

/// Collision risk together with, per obstacle, whether at least one grid
/// action collides with it.
pub fn risk_with_threats(
    agent: (Pose, Velocity),
    obstacles: &[Obstacle],
    model: &VehicleModel,
    cfg: &CrConfig,
) -> (f64, Vec<bool>) {
    let hits = action_hits(agent, obstacles, model, cfg, false);
    let union = hits.iter().fold(0u64, |acc, h| acc | h);
    let colliding = hits.iter().filter(|&&h| h != 0).count();
    let threats = (0..obstacles.len()).map(|i| union & (1 << i) != 0).collect();
    (colliding as f64 / hits.len() as f64, threats)
}

/// For every obstacle, the grid actions (row-major) that collide with it.
/// Each obstacle is judged on its own, so the union over a subset of
/// obstacles is the collision mask of that subset.
pub fn obstacle_footprints(
    agent: (Pose, Velocity),
    obstacles: &[Obstacle],
    model: &VehicleModel,
    cfg: &CrConfig,
) -> Vec<Vec<bool>> {
    let mut out = Vec::with_capacity(obstacles.len());
    for chunk in obstacles.chunks(64) {
        let hits = action_hits(agent, chunk, model, cfg, false);
        out.extend((0..chunk.len()).map(|i| hits.iter().map(|h| h & (1 << i) != 0).collect()));
    }
    out
}

/// Closest point of approach under zero control.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CpaResult {
    /// Distance between centres at the closest approach, m.
    pub dcpa: f64,
    /// Time until the closest approach, s.
    pub tcpa: f64,
}

/// CPA of every obstacle, sharing a single zero-control agent rollout.
///
/// The earliest sampled minimum wins; a scene that only diverges yields
/// `tcpa = 0` and the current distance, one still closing at the horizon
/// yields `tcpa = horizon`.
pub fn cpa_all(
    agent: (Pose, Velocity),
    obstacles: &[Obstacle],
    model: &VehicleModel,
    dt: f64,
    horizon: f64,
) -> Vec<CpaResult> {
    let steps = step_count(horizon, dt);
    let ctrl = Control::default();
    let mut best: Vec<CpaResult> = obstacles
        .iter()
        .map(|o| {
            let p = o.pose();
            CpaResult {
                dcpa: agent.0.distance_to(p.x, p.y),
                tcpa: 0.0,
            }
        })
        .collect();
    if obstacles.is_empty() {
        return best;
    }
    let velocities: Vec<(f64, f64)> = obstacles.iter().map(Obstacle::velocity).collect();
    let (mut pose, mut vel) = agent;
    for k in 1..=steps {
        (pose, vel) = integrate_step(&pose, &vel, &ctrl, model, dt);
        let t = k as f64 * dt;
        for ((o, &(vx, vy)), b) in obstacles.iter().zip(&velocities).zip(best.iter_mut()) {
            let p = o.pose();
            let d = pose.distance_to(p.x + vx * t, p.y + vy * t);
            if d < b.dcpa {
                b.dcpa = d;
                b.tcpa = t;
            }
        }
    }
    for b in &mut best {
        b.tcpa = b.tcpa.min(horizon);
    }
    best
}

pub fn cpa(
    agent: (Pose, Velocity),
    obstacle: &Obstacle,
    model: &VehicleModel,
    dt: f64,
    horizon: f64,
) -> CpaResult {
    cpa_all(agent, std::slice::from_ref(obstacle), model, dt, horizon)[0]
}
