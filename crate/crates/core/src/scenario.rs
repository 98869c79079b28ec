//! Monte Carlo synthesis of threat scenarios and risk-targeted sampling.
//!
//! A scenario is an agent start state plus one to three obstacles on straight
//! lines, labelled with its collision risk. Scenarios are generated in bulk
//! into a [`ScenarioPool`], indexed by obstacle count and risk, and drawn from
//! the pool so that a training stream follows a prescribed risk histogram and
//! obstacle-count ratio.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::{integrate_step, Obstacle, Pose, VehicleModel, Velocity};
use crate::error::{Error, Result};
use crate::risk::{collision_risk, obstacle_footprints, CrConfig};

/// Number of equal-width risk bins used for indexing and presets.
pub const CR_BINS: usize = 10;

/// Scenarios generated per independent random stream.
pub const STREAM_CHUNK: usize = 256;

const POOL_FORMAT_VERSION: u32 = 1;

/// Sampling ranges of the scenario variables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRanges {
    pub u0: [f64; 2],
    pub r0: [f64; 2],
    pub u_obst: [f64; 2],
    pub max_obstacles: usize,
}

impl ScenarioRanges {
    pub fn point_mass() -> Self {
        ScenarioRanges {
            u0: [1.0, 2.0],
            r0: [-0.1, 0.1],
            u_obst: [0.0, 2.0],
            max_obstacles: 3,
        }
    }

    /// The robot's yaw rate is kinematic and starts at zero steering.
    pub fn robot() -> Self {
        ScenarioRanges {
            u0: [2.0, 4.0],
            r0: [0.0, 0.0],
            u_obst: [0.0, 4.0],
            max_obstacles: 3,
        }
    }
}

fn uniform(rng: &mut impl Rng, range: [f64; 2]) -> f64 {
    if range[1] > range[0] {
        rng.gen_range(range[0]..range[1])
    } else {
        range[0]
    }
}

/// Everything a pool depends on; its digest guards pool files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoolSpec {
    pub model: VehicleModel,
    pub ranges: ScenarioRanges,
    pub cr: CrConfig,
}

impl PoolSpec {
    pub fn point_mass() -> Self {
        PoolSpec {
            model: VehicleModel::point_mass(),
            ranges: ScenarioRanges::point_mass(),
            cr: CrConfig::default(),
        }
    }

    pub fn robot() -> Self {
        PoolSpec {
            model: VehicleModel::robot(),
            ranges: ScenarioRanges::robot(),
            cr: CrConfig::default(),
        }
    }

    pub fn digest(&self) -> String {
        let canonical = serde_json::to_string(self).expect("spec serializes");
        hex::encode(&Sha256::digest(canonical.as_bytes())[..16])
    }
}

/// Initial state of one obstacle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObstacleState {
    pub x: f64,
    pub y: f64,
    pub psi: f64,
    pub u: f64,
}

impl ObstacleState {
    pub fn to_obstacle(&self, r_coll: f64) -> Obstacle {
        Obstacle::new(self.x, self.y, self.psi, self.u, r_coll)
    }
}

/// One training episode: agent start velocities, obstacles, risk label.
/// The agent always starts at the origin heading along +x.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub u0: f64,
    pub r0: f64,
    pub obstacles: Vec<ObstacleState>,
    pub cr: f64,
}

impl Scenario {
    pub fn n_obst(&self) -> usize {
        self.obstacles.len()
    }

    pub fn agent(&self) -> (Pose, Velocity) {
        (Pose::ORIGIN, Velocity::new(self.u0, 0.0, self.r0))
    }

    pub fn obstacles_for(&self, model: &VehicleModel) -> Vec<Obstacle> {
        self.obstacles.iter().map(|o| o.to_obstacle(model.r_coll)).collect()
    }

    /// Risk recomputed from the geometry.
    pub fn recompute_cr(&self, model: &VehicleModel, cfg: &CrConfig) -> f64 {
        collision_risk(self.agent(), &self.obstacles_for(model), model, cfg)
    }
}

/// Output of [`place_threat_obstacle`], including the maneuver it targets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThreatPlacement {
    pub obstacle: ObstacleState,
    /// Grid action whose rollout passes through the obstacle centre.
    pub action: [f64; 2],
    /// Sampled time of that encounter, a multiple of `dt`.
    pub t_hit: f64,
}

/// Places an obstacle on a collision course with one grid maneuver.
///
/// A grid action and an encounter time in `[0.2·t_lim, t_lim]` are drawn; the
/// agent's rollout under that action gives the meeting point, and the obstacle
/// start is found by moving backwards along its own velocity.
pub fn place_threat_obstacle(
    agent: (Pose, Velocity),
    model: &VehicleModel,
    cfg: &CrConfig,
    u_obst: [f64; 2],
    rng: &mut impl Rng,
) -> ThreatPlacement {
    let psi = rng.gen_range(0.0..std::f64::consts::TAU);
    let speed = uniform(rng, u_obst);
    let i = rng.gen_range(0..cfg.grid.n_u);
    let j = rng.gen_range(0..cfg.grid.n_r);
    let action = cfg.grid.action(i, j);
    let steps = cfg.steps();
    let t = rng.gen_range(0.2 * cfg.t_lim..=cfg.t_lim);
    let k = ((t / cfg.dt).round() as usize).clamp(1, steps);

    let ctrl = model.control_unchecked(action);
    let (mut pose, mut vel) = agent;
    for _ in 0..k {
        (pose, vel) = integrate_step(&pose, &vel, &ctrl, model, cfg.dt);
    }
    let t_hit = k as f64 * cfg.dt;
    let (sin, cos) = psi.sin_cos();
    ThreatPlacement {
        obstacle: ObstacleState {
            x: pose.x - t_hit * speed * cos,
            y: pose.y - t_hit * speed * sin,
            psi,
            u: speed,
        },
        action,
        t_hit,
    }
}

/// Draws one labelled threat scenario.
pub fn generate_scenario(spec: &PoolSpec, rng: &mut impl Rng) -> Scenario {
    loop {
        let u0 = uniform(rng, spec.ranges.u0);
        let r0 = uniform(rng, spec.ranges.r0);
        let n = rng.gen_range(1..=spec.ranges.max_obstacles);
        let agent = (Pose::ORIGIN, Velocity::new(u0, 0.0, r0));
        let obstacles: Vec<ObstacleState> = (0..n)
            .map(|_| place_threat_obstacle(agent, &spec.model, &spec.cr, spec.ranges.u_obst, rng).obstacle)
            .collect();
        let mut scenario = Scenario {
            u0,
            r0,
            obstacles,
            cr: 0.0,
        };
        scenario.cr = scenario.recompute_cr(&spec.model, &spec.cr);
        if scenario.cr > 0.0 {
            return scenario;
        }
    }
}

/// Index of the equal-width bin holding `cr`; `cr = 1` falls in the last bin.
pub fn cr_bin(cr: f64, bins: usize) -> usize {
    ((cr * bins as f64).floor() as usize).min(bins - 1)
}

/// Pool bookkeeping: generation parameters and cell populations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolManifest {
    pub version: u32,
    pub count: usize,
    pub env_digest: String,
    pub cr_config: CrConfig,
    /// `cell_counts[bin][n_obst - 1]` over [`CR_BINS`] equal-width bins.
    pub cell_counts: Vec<Vec<usize>>,
}

/// A labelled scenario collection indexed by obstacle count and risk.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioPool {
    pub spec: PoolSpec,
    scenarios: Vec<Scenario>,
    /// Per obstacle count, scenario indices sorted by risk.
    by_count: Vec<Vec<usize>>,
}

impl ScenarioPool {
    pub fn new(spec: PoolSpec, scenarios: Vec<Scenario>) -> Result<Self> {
        let max = spec.ranges.max_obstacles;
        let mut by_count = vec![Vec::new(); max];
        for (idx, s) in scenarios.iter().enumerate() {
            let n = s.n_obst();
            if n == 0 || n > max {
                return Err(Error::CorruptRecord {
                    line: idx + 1,
                    reason: format!("{n} obstacles outside 1..={max}"),
                });
            }
            if !(0.0..=1.0).contains(&s.cr) {
                return Err(Error::CorruptRecord {
                    line: idx + 1,
                    reason: format!("cr {} outside [0, 1]", s.cr),
                });
            }
            by_count[n - 1].push(idx);
        }
        for list in &mut by_count {
            list.sort_by(|&a, &b| scenarios[a].cr.total_cmp(&scenarios[b].cr).then(a.cmp(&b)));
        }
        Ok(ScenarioPool {
            spec,
            scenarios,
            by_count,
        })
    }

    pub fn scenarios(&self) -> &[Scenario] {
        &self.scenarios
    }

    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }

    pub fn get(&self, idx: usize) -> Option<&Scenario> {
        self.scenarios.get(idx)
    }

    pub fn manifest(&self) -> PoolManifest {
        let mut cell_counts = vec![vec![0; self.spec.ranges.max_obstacles]; CR_BINS];
        for s in &self.scenarios {
            cell_counts[cr_bin(s.cr, CR_BINS)][s.n_obst() - 1] += 1;
        }
        PoolManifest {
            version: POOL_FORMAT_VERSION,
            count: self.scenarios.len(),
            env_digest: self.spec.digest(),
            cr_config: self.spec.cr,
            cell_counts,
        }
    }

    /// Scenario indices with `n_obst` obstacles and risk in `[lo, hi)`
    /// (`[lo, hi]` when `closed`), ordered by risk.
    pub fn cell(&self, n_obst: usize, lo: f64, hi: f64, closed: bool) -> &[usize] {
        let Some(list) = n_obst.checked_sub(1).and_then(|i| self.by_count.get(i)) else {
            return &[];
        };
        let start = list.partition_point(|&i| self.scenarios[i].cr < lo);
        let end = if closed {
            list.partition_point(|&i| self.scenarios[i].cr <= hi)
        } else {
            list.partition_point(|&i| self.scenarios[i].cr < hi)
        };
        &list[start..end.max(start)]
    }
}

/// Generates `count` scenarios. Streams of [`STREAM_CHUNK`] scenarios each
/// get their own ChaCha stream derived from `seed`, so the pool is identical
/// regardless of how many worker threads run.
pub fn generate_pool(count: usize, spec: &PoolSpec, seed: u64) -> Result<ScenarioPool> {
    if count == 0 {
        return Err(Error::Config("pool size must be at least 1".into()));
    }
    spec.model.validate()?;
    spec.cr.validate()?;
    let chunks = count.div_ceil(STREAM_CHUNK);
    let make_chunk = |chunk: usize| -> Vec<Scenario> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(chunk as u64);
        let n = STREAM_CHUNK.min(count - chunk * STREAM_CHUNK);
        (0..n).map(|_| generate_scenario(spec, &mut rng)).collect()
    };
    #[cfg(feature = "parallel")]
    let parts: Vec<Vec<Scenario>> = {
        use rayon::prelude::*;
        (0..chunks).into_par_iter().map(make_chunk).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let parts: Vec<Vec<Scenario>> = (0..chunks).map(make_chunk).collect();
    ScenarioPool::new(*spec, parts.into_iter().flatten().collect())
}

/// Candidate threat obstacles per agent start in [`generate_in_cell`].
const CELL_BANK: usize = 192;

/// Builds a scenario with `n_obst` threat obstacles and risk in `[lo, hi)`
/// (`[lo, hi]` when `closed`).
///
/// Plain generation almost never yields several obstacles with low combined
/// risk, so this draws a bank of threat placements for one agent start and
/// greedily picks obstacles whose combined collision footprint stays in
/// range. Gives up after `attempts` agent starts.
#[allow(clippy::too_many_arguments)]
pub fn generate_in_cell(
    spec: &PoolSpec,
    n_obst: usize,
    lo: f64,
    hi: f64,
    closed: bool,
    attempts: usize,
    rng: &mut impl Rng,
) -> Option<Scenario> {
    let total = spec.cr.grid.len() as f64;
    let below_hi = |c: usize| {
        let cr = c as f64 / total;
        cr < hi || (closed && cr <= hi)
    };
    for _ in 0..attempts {
        let u0 = uniform(rng, spec.ranges.u0);
        let r0 = uniform(rng, spec.ranges.r0);
        let agent = (Pose::ORIGIN, Velocity::new(u0, 0.0, r0));
        let bank: Vec<ObstacleState> = (0..CELL_BANK)
            .map(|_| place_threat_obstacle(agent, &spec.model, &spec.cr, spec.ranges.u_obst, rng).obstacle)
            .collect();
        let obstacles: Vec<Obstacle> = bank.iter().map(|o| o.to_obstacle(spec.model.r_coll)).collect();
        let masks = obstacle_footprints(agent, &obstacles, &spec.model, &spec.cr);

        let mut order: Vec<usize> = (0..CELL_BANK).collect();
        for _ in 0..8 {
            // Fisher-Yates with the scenario stream keeps the search deterministic.
            for i in (1..order.len()).rev() {
                order.swap(i, rng.gen_range(0..=i));
            }
            let mut union = vec![false; masks[0].len()];
            let mut chosen = Vec::with_capacity(n_obst);
            for &i in &order {
                let merged = union.iter().zip(&masks[i]).filter(|(a, b)| **a || **b).count();
                if below_hi(merged) {
                    union.iter_mut().zip(&masks[i]).for_each(|(a, b)| *a |= *b);
                    chosen.push(i);
                    if chosen.len() == n_obst {
                        break;
                    }
                }
            }
            let count = union.iter().filter(|&&f| f).count();
            if chosen.len() == n_obst && count as f64 / total >= lo {
                let mut scenario = Scenario {
                    u0,
                    r0,
                    obstacles: chosen.iter().map(|&i| bank[i]).collect(),
                    cr: 0.0,
                };
                scenario.cr = scenario.recompute_cr(&spec.model, &spec.cr);
                return Some(scenario);
            }
        }
    }
    None
}

/// Tops up every (risk bin, obstacle count) cell holding fewer than
/// `min_per_cell` scenarios using [`generate_in_cell`]. Each cell has its own
/// random stream. Cells that cannot be filled stay short; the manifest shows
/// the final counts.
pub fn fill_cells(pool: ScenarioPool, min_per_cell: usize, seed: u64) -> Result<ScenarioPool> {
    let spec = pool.spec;
    let max = spec.ranges.max_obstacles;
    let bins = CrDistribution::uniform(CR_BINS);
    let cells: Vec<(usize, usize, usize)> = (0..CR_BINS)
        .flat_map(|k| (1..=max).map(move |n| (k, n)))
        .filter_map(|(k, n)| {
            let (lo, hi, closed) = bins.bin_bounds(k);
            let have = pool.cell(n, lo, hi, closed).len();
            (have < min_per_cell).then(|| (k, n, min_per_cell - have))
        })
        .collect();
    let fill = |&(k, n, missing): &(usize, usize, usize)| -> Vec<Scenario> {
        let (lo, hi, closed) = bins.bin_bounds(k);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream((1 << 32) + (k * max + n) as u64);
        (0..missing)
            .map_while(|_| generate_in_cell(&spec, n, lo, hi, closed, 64, &mut rng))
            .collect()
    };
    #[cfg(feature = "parallel")]
    let extra: Vec<Vec<Scenario>> = {
        use rayon::prelude::*;
        cells.par_iter().map(fill).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let extra: Vec<Vec<Scenario>> = cells.iter().map(fill).collect();

    let mut scenarios = pool.scenarios;
    scenarios.extend(extra.into_iter().flatten());
    ScenarioPool::new(spec, scenarios)
}

/// [`generate_pool`] followed by [`fill_cells`].
pub fn generate_filled_pool(count: usize, min_per_cell: usize, spec: &PoolSpec, seed: u64) -> Result<ScenarioPool> {
    fill_cells(generate_pool(count, spec, seed)?, min_per_cell, seed)
}

/// Binned target histogram over risk values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrDistribution {
    edges: Vec<f64>,
    masses: Vec<f64>,
}

impl CrDistribution {
    pub fn new(edges: Vec<f64>, masses: Vec<f64>) -> Result<Self> {
        if edges.len() < 2 || masses.len() + 1 != edges.len() {
            return Err(Error::Config(format!(
                "{} edges cannot bound {} bins",
                edges.len(),
                masses.len()
            )));
        }
        if edges[0] != 0.0 || *edges.last().unwrap() != 1.0 {
            return Err(Error::Config("bin edges must span [0, 1]".into()));
        }
        if edges.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("bin edges must be strictly ascending".into()));
        }
        if masses.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
            return Err(Error::Config("bin masses must be non-negative".into()));
        }
        let total: f64 = masses.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("bin masses sum to {total}, not 1")));
        }
        Ok(CrDistribution { edges, masses })
    }

    fn equal_edges(bins: usize) -> Vec<f64> {
        (0..=bins).map(|k| k as f64 / bins as f64).collect()
    }

    pub fn uniform(bins: usize) -> Self {
        CrDistribution {
            edges: Self::equal_edges(bins),
            masses: vec![1.0 / bins as f64; bins],
        }
    }

    /// One of seven built-in histograms on ten bins, from low risk (level 1)
    /// to high risk (level 7). Each is a binned Beta density: `Beta(1, b)` for
    /// levels 1–3, uniform for level 4 and the mirror image `Beta(a, 1)` above.
    pub fn preset(level: u8) -> Result<Self> {
        const SHAPES: [f64; 3] = [4.0, 2.5, 1.5];
        let cdf: Box<dyn Fn(f64) -> f64> = match level {
            1..=3 => {
                let b = SHAPES[level as usize - 1];
                Box::new(move |x: f64| 1.0 - (1.0 - x).powf(b))
            }
            4 => Box::new(|x: f64| x),
            5..=7 => {
                let a = SHAPES[7 - level as usize];
                Box::new(move |x: f64| x.powf(a))
            }
            _ => return Err(Error::Config(format!("preset level {level} not in 1..=7"))),
        };
        let edges = Self::equal_edges(CR_BINS);
        let mut masses: Vec<f64> = edges.windows(2).map(|w| cdf(w[1]) - cdf(w[0])).collect();
        let total: f64 = masses.iter().sum();
        masses.iter_mut().for_each(|m| *m /= total);
        Ok(CrDistribution { edges, masses })
    }

    /// Uniform on `[lo, hi]`, expressed on the ten standard bins.
    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        if !(0.0 <= lo && lo < hi && hi <= 1.0) {
            return Err(Error::Config(format!("interval ({lo}, {hi}) not within [0, 1]")));
        }
        let edges = Self::equal_edges(CR_BINS);
        let masses = edges
            .windows(2)
            .map(|w| (hi.min(w[1]) - lo.max(w[0])).max(0.0) / (hi - lo))
            .collect();
        CrDistribution::new(edges, masses)
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn bins(&self) -> usize {
        self.masses.len()
    }

    /// Bin `k` covers `[edges[k], edges[k+1])`, the last bin is closed.
    pub fn bin_bounds(&self, k: usize) -> (f64, f64, bool) {
        (self.edges[k], self.edges[k + 1], k + 1 == self.bins())
    }

    pub fn bin_of(&self, cr: f64) -> usize {
        let k = self.edges.partition_point(|&e| e <= cr);
        k.saturating_sub(1).min(self.bins() - 1)
    }

    /// Mean risk, taking bin midpoints.
    pub fn mean(&self) -> f64 {
        self.edges
            .windows(2)
            .zip(&self.masses)
            .map(|(w, m)| 0.5 * (w[0] + w[1]) * m)
            .sum()
    }
}

/// Proportions of 1-, 2- and 3-obstacle scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObstacleRatio {
    p: [f64; 3],
}

impl ObstacleRatio {
    pub fn new(p: [f64; 3]) -> Result<Self> {
        if p.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::Config(format!("ratio {p:?} has negative entries")));
        }
        let total: f64 = p.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("ratio {p:?} sums to {total}, not 1")));
        }
        Ok(ObstacleRatio { p })
    }

    /// Normalizes relative weights such as `1/2/4`.
    pub fn from_weights(w: [f64; 3]) -> Result<Self> {
        let total: f64 = w.iter().sum();
        if !(total > 0.0) || w.iter().any(|x| *x < 0.0) {
            return Err(Error::Config(format!("invalid ratio weights {w:?}")));
        }
        Self::new(w.map(|x| x / total))
    }

    pub fn uniform() -> Self {
        ObstacleRatio { p: [1.0 / 3.0; 3] }
    }

    pub fn proportions(&self) -> [f64; 3] {
        self.p
    }
}

fn sample_index(rng: &mut impl Rng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut x = rng.gen::<f64>() * total;
    for (k, &w) in weights.iter().enumerate() {
        if x < w {
            return k;
        }
        x -= w;
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

/// Draws scenarios from a pool following a risk histogram and obstacle ratio.
/// Draws are with replacement.
#[derive(Debug, Clone)]
pub struct ScenarioSampler<'a> {
    pool: &'a ScenarioPool,
    dist: CrDistribution,
    ratio: ObstacleRatio,
}

impl<'a> ScenarioSampler<'a> {
    pub fn new(pool: &'a ScenarioPool, dist: CrDistribution, ratio: ObstacleRatio) -> Self {
        ScenarioSampler { pool, dist, ratio }
    }

    /// Fails with [`Error::EmptyCell`] if any cell with positive requested
    /// mass has no scenarios.
    pub fn check_serves(&self) -> Result<()> {
        for (n_idx, &p) in self.ratio.proportions().iter().enumerate() {
            for (k, &m) in self.dist.masses().iter().enumerate() {
                if p > 0.0 && m > 0.0 {
                    self.cell(n_idx + 1, k)?;
                }
            }
        }
        Ok(())
    }

    fn cell(&self, n_obst: usize, bin: usize) -> Result<&'a [usize]> {
        let (lo, hi, closed) = self.dist.bin_bounds(bin);
        let cell = self.pool.cell(n_obst, lo, hi, closed);
        if cell.is_empty() {
            return Err(Error::EmptyCell { lo, hi, n_obst });
        }
        Ok(cell)
    }

    pub fn draw_index(&self, rng: &mut impl Rng) -> Result<usize> {
        let n_obst = sample_index(rng, &self.ratio.proportions()) + 1;
        let bin = sample_index(rng, self.dist.masses());
        let cell = self.cell(n_obst, bin)?;
        Ok(cell[rng.gen_range(0..cell.len())])
    }

    pub fn draw(&self, rng: &mut impl Rng) -> Result<&'a Scenario> {
        let idx = self.draw_index(rng)?;
        Ok(&self.pool.scenarios[idx])
    }
}

/// One draw from `pool` following `dist` and `ratio`.
pub fn draw<'a>(
    pool: &'a ScenarioPool,
    dist: &CrDistribution,
    ratio: &ObstacleRatio,
    rng: &mut impl Rng,
) -> Result<&'a Scenario> {
    ScenarioSampler::new(pool, dist.clone(), *ratio).draw(rng)
}

/// Splits `total` items proportionally to `weights` using largest-remainder
/// rounding; ties go to the lower index.
pub fn largest_remainder(weights: &[f64], total: usize) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    if weights.is_empty() || !(sum > 0.0) {
        return vec![0; weights.len()];
    }
    let quotas: Vec<f64> = weights.iter().map(|w| w / sum * total as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &k in order.iter().take(total.saturating_sub(assigned)) {
        counts[k] += 1;
    }
    counts
}

// ---- persistence ----------------------------------------------------------

/// Sidecar manifest path: `pool.jsonl` -> `pool.manifest.json`.
pub fn manifest_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().unwrap_or_default().to_string_lossy();
    path.with_file_name(format!("{stem}.manifest.json"))
}

/// Float with 17 significant digits, valid as a JSON number.
pub(crate) fn f17(x: f64) -> String {
    format!("{x:.16e}")
}

pub(crate) fn scenario_line(s: &Scenario) -> String {
    let obst: Vec<String> = s
        .obstacles
        .iter()
        .map(|o| {
            format!(
                r#"{{"x":{},"y":{},"psi":{},"u":{}}}"#,
                f17(o.x),
                f17(o.y),
                f17(o.psi),
                f17(o.u)
            )
        })
        .collect();
    format!(
        r#"{{"u0":{},"r0":{},"obst":[{}],"cr":{},"n":{}}}"#,
        f17(s.u0),
        f17(s.r0),
        obst.join(","),
        f17(s.cr),
        s.n_obst()
    )
}

#[derive(Deserialize)]
struct ScenarioRecord {
    u0: f64,
    r0: f64,
    obst: Vec<ObstacleState>,
    cr: f64,
    n: usize,
}

/// Writes the scenario list as JSON lines plus the sidecar manifest.
pub fn save_pool(pool: &ScenarioPool, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for s in &pool.scenarios {
        writeln!(out, "{}", scenario_line(s)).map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))?;

    let mpath = manifest_path(path);
    let manifest = serde_json::to_string_pretty(&pool.manifest())?;
    std::fs::write(&mpath, manifest + "\n").map_err(|e| Error::io(&mpath, e))
}

/// Reads a pool written by [`save_pool`], checking it was built for `spec`.
pub fn load_pool(path: &Path, spec: &PoolSpec) -> Result<ScenarioPool> {
    let mpath = manifest_path(path);
    let text = std::fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let manifest: PoolManifest = serde_json::from_str(&text).map_err(|e| Error::CorruptRecord {
        line: 0,
        reason: format!("manifest: {e}"),
    })?;
    let expected = spec.digest();
    if manifest.env_digest != expected {
        return Err(Error::DigestMismatch {
            expected,
            found: manifest.env_digest,
        });
    }

    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut scenarios = Vec::with_capacity(manifest.count);
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ScenarioRecord = serde_json::from_str(&line).map_err(|e| Error::CorruptRecord {
            line: line_no,
            reason: e.to_string(),
        })?;
        if rec.n != rec.obst.len() {
            return Err(Error::CorruptRecord {
                line: line_no,
                reason: format!("n = {} but {} obstacles listed", rec.n, rec.obst.len()),
            });
        }
        scenarios.push(Scenario {
            u0: rec.u0,
            r0: rec.r0,
            obstacles: rec.obst,
            cr: rec.cr,
        });
    }
    if scenarios.len() != manifest.count {
        return Err(Error::CorruptRecord {
            line: scenarios.len() + 1,
            reason: format!(
                "manifest lists {} scenarios, file ends after {}",
                manifest.count,
                scenarios.len()
            ),
        });
    }
    let pool = ScenarioPool::new(*spec, scenarios)?;
    if pool.manifest().cell_counts != manifest.cell_counts {
        return Err(Error::CorruptRecord {
            line: 0,
            reason: "cell counts disagree with manifest".into(),
        });
    }
    Ok(pool)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::risk::per_action_collision_mask;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn stationary_obstacle_sits_on_trajectory_point() {
        let spec = PoolSpec::point_mass();
        let agent = (Pose::ORIGIN, Velocity::new(1.5, 0.0, 0.05));
        let mut r = rng(3);
        for _ in 0..50 {
            let placed = place_threat_obstacle(agent, &spec.model, &spec.cr, [0.0, 0.0], &mut r);
            let k = (placed.t_hit / spec.cr.dt).round() as usize;
            let poses = crate::dynamics::rollout_constant_action(
                agent,
                placed.action,
                &spec.model,
                spec.cr.dt,
                k as f64 * spec.cr.dt,
            )
            .unwrap();
            let p = poses[k];
            assert_eq!((placed.obstacle.x, placed.obstacle.y), (p.x, p.y));
        }
    }

    #[test]
    fn placed_obstacle_meets_chosen_maneuver() {
        let spec = PoolSpec::point_mass();
        let mut r = rng(11);
        for _ in 0..100 {
            let agent = (Pose::ORIGIN, Velocity::new(r.gen_range(1.0..2.0), 0.0, r.gen_range(-0.1..0.1)));
            let placed = place_threat_obstacle(agent, &spec.model, &spec.cr, spec.ranges.u_obst, &mut r);
            assert!(placed.t_hit >= 0.2 * spec.cr.t_lim - spec.cr.dt);
            assert!(placed.t_hit <= spec.cr.t_lim + 1e-9);
            let obstacle = placed.obstacle.to_obstacle(spec.model.r_coll);
            let poses = crate::dynamics::rollout_constant_action(
                agent,
                placed.action,
                &spec.model,
                spec.cr.dt,
                placed.t_hit,
            )
            .unwrap();
            let end = poses.last().unwrap();
            let (ox, oy) = obstacle.position_at(placed.t_hit);
            assert!(end.distance_to(ox, oy) < 1e-9);
            let mask = per_action_collision_mask(agent, &[obstacle], &spec.model, &spec.cr);
            assert!(mask.collisions() >= 1);
        }
    }

    #[test]
    fn single_scenario_pool() {
        let pool = generate_pool(1, &PoolSpec::point_mass(), 5).unwrap();
        assert_eq!(pool.len(), 1);
        let m = pool.manifest();
        assert_eq!(m.cell_counts.iter().flatten().sum::<usize>(), 1);
        assert!(generate_pool(0, &PoolSpec::point_mass(), 5).is_err());
    }

    #[test]
    fn pool_generation_is_deterministic() {
        let spec = PoolSpec::point_mass();
        let a = generate_pool(300, &spec, 42).unwrap();
        let b = generate_pool(300, &spec, 42).unwrap();
        assert_eq!(a, b);
        let c = generate_pool(300, &spec, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn pooled_labels_revalidate() {
        let spec = PoolSpec::point_mass();
        let pool = generate_pool(200, &spec, 7).unwrap();
        for s in pool.scenarios() {
            assert!(s.cr >= 1.0 / 121.0);
            assert_eq!(s.cr, s.recompute_cr(&spec.model, &spec.cr));
        }
    }

    #[test]
    fn preset_properties() {
        let uniform = CrDistribution::preset(4).unwrap();
        for &m in uniform.masses() {
            assert!((m - 0.1).abs() < 1e-12);
        }
        let mut last = -1.0;
        for level in 1..=7 {
            let d = CrDistribution::preset(level).unwrap();
            let total: f64 = d.masses().iter().sum();
            assert!((total - 1.0).abs() < 1e-12);
            assert!(d.masses().iter().all(|&m| m > 0.0));
            assert!(d.mean() > last, "level {level}");
            last = d.mean();
        }
        assert!(CrDistribution::preset(0).is_err());
        assert!(CrDistribution::preset(8).is_err());
    }

    #[test]
    fn interval_distributions() {
        let low = CrDistribution::interval(0.0, 0.2).unwrap();
        assert!((low.masses()[0] - 0.5).abs() < 1e-12);
        assert!((low.masses()[1] - 0.5).abs() < 1e-12);
        assert!(low.masses()[2..].iter().all(|&m| m == 0.0));
        let high = CrDistribution::interval(0.8, 1.0).unwrap();
        assert!((high.masses()[8] - 0.5).abs() < 1e-12);
        assert!((high.masses()[9] - 0.5).abs() < 1e-12);
        let all = CrDistribution::interval(0.0, 1.0).unwrap();
        for (a, b) in all.masses().iter().zip(CrDistribution::preset(4).unwrap().masses()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(CrDistribution::interval(0.5, 0.5).is_err());
    }

    #[test]
    fn distribution_validation() {
        assert!(CrDistribution::new(vec![0.0, 0.5, 1.0], vec![0.5, 0.5]).is_ok());
        assert!(CrDistribution::new(vec![0.0, 0.5, 1.0], vec![0.6, 0.5]).is_err());
        assert!(CrDistribution::new(vec![0.0, 0.5, 0.5, 1.0], vec![0.5, 0.0, 0.5]).is_err());
        assert!(CrDistribution::new(vec![0.1, 1.0], vec![1.0]).is_err());
        assert!(ObstacleRatio::new([0.5, 0.5, 0.1]).is_err());
        assert!(ObstacleRatio::from_weights([1.0, 2.0, 4.0]).is_ok());
    }

    #[test]
    fn bin_lookup() {
        let d = CrDistribution::uniform(10);
        assert_eq!(d.bin_of(0.0), 0);
        assert_eq!(d.bin_of(0.1), 1);
        assert_eq!(d.bin_of(0.95), 9);
        assert_eq!(d.bin_of(1.0), 9);
        assert_eq!(cr_bin(1.0, 10), 9);
        assert_eq!(cr_bin(0.099, 10), 0);
    }

    #[test]
    fn concentrated_draws_respect_cell() {
        let spec = PoolSpec::point_mass();
        let pool = generate_pool(3000, &spec, 1).unwrap();
        let dist = CrDistribution::interval(0.5, 1.0).unwrap();
        let ratio = ObstacleRatio::new([0.0, 0.0, 1.0]).unwrap();
        let sampler = ScenarioSampler::new(&pool, dist, ratio);
        sampler.check_serves().unwrap();
        let mut r = rng(2);
        for _ in 0..500 {
            let s = sampler.draw(&mut r).unwrap();
            assert_eq!(s.n_obst(), 3);
            assert!(s.cr >= 0.5);
        }
    }

    #[test]
    fn empty_cell_is_reported() {
        let spec = PoolSpec::point_mass();
        let pool = generate_pool(20, &spec, 1).unwrap();
        let dist = CrDistribution::new(vec![0.0, 1e-6, 1.0], vec![1.0, 0.0]).unwrap();
        let sampler = ScenarioSampler::new(&pool, dist, ObstacleRatio::uniform());
        assert!(matches!(sampler.check_serves(), Err(Error::EmptyCell { .. })));
        assert!(matches!(sampler.draw(&mut rng(0)), Err(Error::EmptyCell { .. })));
    }

    #[test]
    fn largest_remainder_rounding() {
        assert_eq!(largest_remainder(&[1.0, 1.0, 1.0], 3), vec![1, 1, 1]);
        assert_eq!(largest_remainder(&[1.0, 1.0, 1.0], 500), vec![167, 167, 166]);
        assert_eq!(largest_remainder(&[1.0, 2.0, 4.0], 7), vec![1, 2, 4]);
        assert_eq!(largest_remainder(&[1.0, 1.0], 1), vec![1, 0]);
        let c = largest_remainder(&[0.3, 0.3, 0.4], 10);
        assert_eq!(c.iter().sum::<usize>(), 10);
    }

    #[test]
    fn save_load_round_trip() {
        let spec = PoolSpec::point_mass();
        let pool = generate_pool(1000, &spec, 9).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pool.jsonl");
        save_pool(&pool, &path).unwrap();
        let loaded = load_pool(&path, &spec).unwrap();
        assert_eq!(loaded, pool);
    }

    #[test]
    fn load_rejects_other_model() {
        let spec = PoolSpec::point_mass();
        let pool = generate_pool(10, &spec, 9).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pool.jsonl");
        save_pool(&pool, &path).unwrap();
        let mut other = spec;
        other.model.r_coll = 4.0;
        assert!(matches!(load_pool(&path, &other), Err(Error::DigestMismatch { .. })));
    }

    #[test]
    fn load_reports_truncation_line() {
        let spec = PoolSpec::point_mass();
        let pool = generate_pool(10, &spec, 9).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pool.jsonl");
        save_pool(&pool, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        // Cut the file in the middle of line 4.
        let lines: Vec<&str> = text.lines().collect();
        let mut cut = lines[..3].join("\n");
        cut.push('\n');
        cut.push_str(&lines[3][..lines[3].len() / 2]);
        std::fs::write(&path, cut).unwrap();
        match load_pool(&path, &spec) {
            Err(Error::CorruptRecord { line, .. }) => assert_eq!(line, 4),
            other => panic!("expected CorruptRecord, got {other:?}"),
        }
    }

    #[test]
    fn low_risk_three_obstacle_cell() {
        let spec = PoolSpec::point_mass();
        let mut r = rng(12);
        for _ in 0..3 {
            let s = generate_in_cell(&spec, 3, 0.0, 0.1, false, 64, &mut r).expect("cell reachable");
            assert_eq!(s.n_obst(), 3);
            assert!(s.cr > 0.0 && s.cr < 0.1, "{}", s.cr);
            assert_eq!(s.cr, s.recompute_cr(&spec.model, &spec.cr));
        }
    }

    #[test]
    fn fill_reaches_every_cell() {
        let spec = PoolSpec::point_mass();
        let plain = generate_pool(300, &spec, 4).unwrap();
        let filled = fill_cells(plain.clone(), 2, 4).unwrap();
        assert_eq!(&filled.scenarios()[..300], plain.scenarios());
        for row in filled.manifest().cell_counts {
            assert!(row.iter().all(|&c| c >= 2), "{row:?}");
        }
        let again = generate_filled_pool(300, 2, &spec, 4).unwrap();
        assert_eq!(again.scenarios(), filled.scenarios());
    }
}
