use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::plot::{learning_curve_svg, ramp_color, Series, BASELINE_COLOR};
use super::{build_validation_suite, evaluate, ValidationSuite};
use crate::env::{BoxConfig, BoxEnv, EnvConfig, PoolEnv};
use crate::error::{Error, Result};
use crate::scenario::{generate_filled_pool, load_pool, CrDistribution, ObstacleRatio, PoolSpec, ScenarioPool, ScenarioSampler};
use crate::td3::{train, write_metrics_csv, MetricsRow, Mlp, Td3Config, TrainConfig, TrainOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnvKind {
    PointMass,
    Robot,
    /// Point-mass vehicle trained in the random-initialization box.
    BaselineBox,
}

impl EnvKind {
    pub fn env_config(self) -> EnvConfig {
        match self {
            EnvKind::Robot => EnvConfig::robot(),
            _ => EnvConfig::point_mass(),
        }
    }

    /// Pool the validation suite (and pool training) draws from.
    pub fn pool_spec(self) -> PoolSpec {
        match self {
            EnvKind::Robot => PoolSpec::robot(),
            _ => PoolSpec::point_mass(),
        }
    }
}

impl FromStr for EnvKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "point-mass" => Ok(EnvKind::PointMass),
            "robot" => Ok(EnvKind::Robot),
            "baseline-box" | "box" => Ok(EnvKind::BaselineBox),
            _ => Err(Error::Config(format!("unknown env `{s}` (point-mass, robot, baseline-box)"))),
        }
    }
}

/// Target risk histogram as written in configs: `preset:K`,
/// `interval:lo,hi` or `uniform`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum DistSpec {
    Preset(u8),
    Interval(f64, f64),
    Uniform,
}

impl DistSpec {
    pub fn distribution(&self) -> Result<CrDistribution> {
        match *self {
            DistSpec::Preset(k) => CrDistribution::preset(k),
            DistSpec::Interval(lo, hi) => CrDistribution::interval(lo, hi),
            DistSpec::Uniform => Ok(CrDistribution::uniform(crate::scenario::CR_BINS)),
        }
    }

    /// File-name friendly label.
    pub fn label(&self) -> String {
        match self {
            DistSpec::Preset(k) => format!("preset{k}"),
            DistSpec::Interval(lo, hi) => format!("cr{lo}-{hi}"),
            DistSpec::Uniform => "uniform".into(),
        }
    }
}

impl fmt::Display for DistSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DistSpec::Preset(k) => write!(f, "preset:{k}"),
            DistSpec::Interval(lo, hi) => write!(f, "interval:{lo},{hi}"),
            DistSpec::Uniform => write!(f, "uniform"),
        }
    }
}

impl FromStr for DistSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("bad distribution `{s}` (preset:K, interval:lo,hi, uniform)"));
        let spec = if s == "uniform" {
            DistSpec::Uniform
        } else if let Some(k) = s.strip_prefix("preset:") {
            DistSpec::Preset(k.trim().parse().map_err(|_| bad())?)
        } else if let Some(rest) = s.strip_prefix("interval:") {
            let (lo, hi) = rest.split_once(',').ok_or_else(bad)?;
            DistSpec::Interval(lo.trim().parse().map_err(|_| bad())?, hi.trim().parse().map_err(|_| bad())?)
        } else {
            return Err(bad());
        };
        spec.distribution()?;
        Ok(spec)
    }
}

impl TryFrom<String> for DistSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<DistSpec> for String {
    fn from(d: DistSpec) -> String {
        d.to_string()
    }
}

/// Parses `p1,p2,p3` obstacle-count weights.
pub fn parse_ratio(s: &str) -> Result<ObstacleRatio> {
    let parts: Vec<&str> = s.split(',').collect();
    let bad = || Error::Config(format!("bad ratio `{s}` (expected three weights p1,p2,p3)"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let mut w = [0.0; 3];
    for (slot, p) in w.iter_mut().zip(parts) {
        *slot = p.trim().parse().map_err(|_| bad())?;
    }
    ObstacleRatio::from_weights(w)
}

fn default_ratio() -> [f64; 3] {
    [1.0, 1.0, 1.0]
}
fn default_budget() -> u64 {
    1_000_000
}
fn default_interval() -> u64 {
    20_000
}
fn default_validation() -> usize {
    500
}
fn default_pool_size() -> usize {
    100_000
}
fn default_min_per_cell() -> usize {
    50
}
fn default_out() -> PathBuf {
    PathBuf::from("study-out")
}

/// Study description, usually read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub env: EnvKind,
    /// One cell per entry; ignored by the box baseline.
    #[serde(default)]
    pub dists: Vec<DistSpec>,
    #[serde(default = "default_ratio")]
    pub ratio: [f64; 3],
    #[serde(default = "default_budget")]
    pub budget_steps: u64,
    #[serde(default = "default_interval")]
    pub eval_interval: u64,
    #[serde(default = "default_validation")]
    pub validation_size: usize,
    pub seeds: Vec<u64>,
    /// Extra noise levels at which final agents are re-evaluated.
    #[serde(default)]
    pub sigma_n: Vec<f64>,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
    /// Existing pool file; generated from `pool_size`/`pool_seed` when absent.
    #[serde(default)]
    pub pool: Option<PathBuf>,
    #[serde(default = "default_pool_size")]
    pub pool_size: usize,
    /// Top-up target for sparse (risk bin, obstacle count) cells.
    #[serde(default = "default_min_per_cell")]
    pub pool_min_per_cell: usize,
    #[serde(default)]
    pub pool_seed: u64,
    #[serde(default)]
    pub suite_seed: u64,
    #[serde(default)]
    pub box_layout: Option<BoxConfig>,
    #[serde(default)]
    pub td3: Td3Config,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.eval_interval == 0 || self.budget_steps < self.eval_interval {
            return bad("budget_steps must be at least eval_interval, which must be positive");
        }
        if self.validation_size == 0 {
            return bad("validation_size must be at least 1");
        }
        if self.seeds.is_empty() {
            return bad("seeds must not be empty");
        }
        if self.env != EnvKind::BaselineBox && self.dists.is_empty() {
            return bad("dists must name at least one distribution");
        }
        if self.sigma_n.iter().any(|s| !(*s >= 0.0)) {
            return bad("sigma_n values must be non-negative");
        }
        ObstacleRatio::from_weights(self.ratio)?;
        self.td3.validate()
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            td3: self.td3.clone(),
            budget_steps: self.budget_steps,
            eval_interval: self.eval_interval,
        }
    }

    /// Cells as `(dist, seed)`; the box baseline has no distribution.
    pub fn cells(&self) -> Vec<(Option<DistSpec>, u64)> {
        let dists: Vec<Option<DistSpec>> = if self.env == EnvKind::BaselineBox {
            vec![None]
        } else {
            self.dists.iter().copied().map(Some).collect()
        };
        dists
            .into_iter()
            .flat_map(|d| self.seeds.iter().map(move |&s| (d, s)))
            .collect()
    }
}

/// Trains one agent on `pool` drawn with `dist` × `ratio`, evaluating on
/// `suite` every `eval_interval` steps.
pub fn train_on_pool(
    env_cfg: &EnvConfig,
    pool: &ScenarioPool,
    dist: CrDistribution,
    ratio: ObstacleRatio,
    suite: &ValidationSuite,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainOutcome> {
    let mut env = PoolEnv::new(*env_cfg, ScenarioSampler::new(pool, dist, ratio))?;
    train(&mut env, cfg, seed, |step, agent| {
        Ok(evaluate(&agent.actor, suite, env_cfg, 0.0, 0)?.metrics(step))
    })
}

/// Trains one agent in the random-initialization box, evaluating on the
/// same scenario suite as pool-trained agents.
pub fn train_in_box(
    env_cfg: &EnvConfig,
    layout: &BoxConfig,
    suite: &ValidationSuite,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainOutcome> {
    let mut env = BoxEnv::new(*env_cfg, *layout)?;
    train(&mut env, cfg, seed, |step, agent| {
        Ok(evaluate(&agent.actor, suite, env_cfg, 0.0, 0)?.metrics(step))
    })
}

/// Result of one (distribution, seed) cell.
#[derive(Debug, Clone)]
pub struct CellRun {
    pub dist: Option<DistSpec>,
    pub seed: u64,
    pub metrics: Vec<MetricsRow>,
    pub actor: Mlp,
    /// `(sigma_n, success ratio)` for each extra noise level.
    pub noise: Vec<(f64, f64)>,
}

impl CellRun {
    pub fn label(&self) -> String {
        self.dist.map_or_else(|| "box".into(), |d| d.label())
    }

    pub fn final_ratio(&self) -> Option<f64> {
        self.metrics.last().map(|m| m.success_ratio)
    }
}

/// Mean and sample standard deviation of final ratios per label and noise.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub label: String,
    pub sigma_n: f64,
    pub n: usize,
    pub mean: f64,
    /// Present when at least two seeds ran.
    pub sd: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct StudyReport {
    pub suite_digest: String,
    pub cells: Vec<CellRun>,
    pub summary: Vec<SummaryRow>,
}

pub fn mean_sd(xs: &[f64]) -> (f64, Option<f64>) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let sd = (xs.len() >= 2).then(|| (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
    (mean, sd)
}

/// Pool and suite shared by every cell of a study.
#[derive(Debug, Clone)]
pub struct StudySetup {
    pub pool: ScenarioPool,
    pub suite: ValidationSuite,
}

impl StudySetup {
    pub fn new(cfg: &RunConfig) -> Result<Self> {
        let spec = cfg.env.pool_spec();
        let pool = match &cfg.pool {
            Some(path) => load_pool(path, &spec)?,
            None => generate_filled_pool(cfg.pool_size, cfg.pool_min_per_cell, &spec, cfg.pool_seed)?,
        };
        let suite = build_validation_suite(&pool, cfg.validation_size, cfg.suite_seed)?;
        Ok(StudySetup { pool, suite })
    }
}

/// Trains every cell (in parallel when enabled) without writing files.
pub fn run_cells(cfg: &RunConfig, setup: &StudySetup) -> Result<Vec<CellRun>> {
    cfg.validate()?;
    let env_cfg = cfg.env.env_config();
    let tcfg = cfg.train_config();
    let ratio = ObstacleRatio::from_weights(cfg.ratio)?;
    let layout = cfg.box_layout.unwrap_or_else(BoxConfig::point_mass);
    let run = |(dist, seed): (Option<DistSpec>, u64)| -> Result<CellRun> {
        let outcome = match dist {
            Some(d) => train_on_pool(&env_cfg, &setup.pool, d.distribution()?, ratio, &setup.suite, &tcfg, seed)?,
            None => train_in_box(&env_cfg, &layout, &setup.suite, &tcfg, seed)?,
        };
        let actor = outcome.agent.actor;
        let noise = cfg
            .sigma_n
            .iter()
            .map(|&s| Ok((s, evaluate(&actor, &setup.suite, &env_cfg, s, seed)?.success_ratio())))
            .collect::<Result<Vec<_>>>()?;
        Ok(CellRun {
            dist,
            seed,
            metrics: outcome.metrics,
            actor,
            noise,
        })
    };
    #[cfg(feature = "parallel")]
    let runs: Vec<Result<CellRun>> = {
        use rayon::prelude::*;
        cfg.cells().into_par_iter().map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let runs: Vec<Result<CellRun>> = cfg.cells().into_iter().map(run).collect();
    runs.into_iter().collect()
}

pub fn summarize(cells: &[CellRun]) -> Vec<SummaryRow> {
    let mut labels: Vec<String> = Vec::new();
    for c in cells {
        if !labels.contains(&c.label()) {
            labels.push(c.label());
        }
    }
    let mut rows = Vec::new();
    for label in labels {
        let group: Vec<&CellRun> = cells.iter().filter(|c| c.label() == label).collect();
        let finals: Vec<f64> = group.iter().filter_map(|c| c.final_ratio()).collect();
        if !finals.is_empty() {
            let (mean, sd) = mean_sd(&finals);
            rows.push(SummaryRow {
                label: label.clone(),
                sigma_n: 0.0,
                n: finals.len(),
                mean,
                sd,
            });
        }
        let sigmas: Vec<f64> = group.first().map_or(Vec::new(), |c| c.noise.iter().map(|n| n.0).collect());
        for (k, sigma) in sigmas.into_iter().enumerate() {
            let xs: Vec<f64> = group.iter().map(|c| c.noise[k].1).collect();
            let (mean, sd) = mean_sd(&xs);
            rows.push(SummaryRow {
                label: label.clone(),
                sigma_n: sigma,
                n: xs.len(),
                mean,
                sd,
            });
        }
    }
    rows
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn series_style(dist: Option<DistSpec>) -> (String, bool) {
    match dist.and_then(|d| d.distribution().ok()) {
        Some(d) => (ramp_color(d.mean()), false),
        None => (BASELINE_COLOR.into(), true),
    }
}

/// Writes per-cell metrics CSVs, one plot per distribution, an overview plot
/// of seed means and `summary.csv`.
pub fn write_study_outputs(out_dir: &Path, suite_digest: &str, cells: &[CellRun], summary: &[SummaryRow]) -> Result<()> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    for c in cells {
        let path = out_dir.join(format!("{}_seed{}.csv", c.label(), c.seed));
        let mut buf = Vec::new();
        write_metrics_csv(&mut buf, suite_digest, &c.metrics).map_err(|e| Error::io(&path, e))?;
        write_file(&path, &buf)?;
    }

    let mut overview = Vec::new();
    let mut seen: Vec<String> = Vec::new();
    for c in cells {
        let label = c.label();
        if seen.contains(&label) {
            continue;
        }
        seen.push(label.clone());
        let group: Vec<&CellRun> = cells.iter().filter(|o| o.label() == label).collect();
        let (color, dashed) = series_style(c.dist);
        let per_seed: Vec<Series> = group
            .iter()
            .map(|g| Series {
                label: format!("seed {}", g.seed),
                color: color.clone(),
                dashed,
                points: g.metrics.iter().map(|m| (m.step as f64, m.success_ratio)).collect(),
            })
            .collect();
        let svg = learning_curve_svg(&label, &per_seed);
        write_file(&out_dir.join(format!("{label}.svg")), svg.as_bytes())?;

        let len = group.iter().map(|g| g.metrics.len()).min().unwrap_or(0);
        let points = (0..len)
            .map(|i| {
                let xs: Vec<f64> = group.iter().map(|g| g.metrics[i].success_ratio).collect();
                (group[0].metrics[i].step as f64, mean_sd(&xs).0)
            })
            .collect();
        overview.push(Series {
            label,
            color,
            dashed,
            points,
        });
    }
    let svg = learning_curve_svg("mean success ratio over seeds", &overview);
    write_file(&out_dir.join("curves.svg"), svg.as_bytes())?;

    let mut text = format!("# suite_digest={suite_digest}\nlabel,sigma_n,n_seeds,mean_final,sd_final\n");
    for r in summary {
        let sd = r.sd.map_or(String::new(), |s| format!("{s:.6}"));
        text.push_str(&format!("{},{},{},{:.6},{sd}\n", r.label, r.sigma_n, r.n, r.mean));
    }
    write_file(&out_dir.join("summary.csv"), text.as_bytes())
}

/// Builds the shared suite, trains every cell and writes all outputs.
pub fn run_study(cfg: &RunConfig) -> Result<StudyReport> {
    cfg.validate()?;
    let setup = StudySetup::new(cfg)?;
    let cells = run_cells(cfg, &setup)?;
    let summary = summarize(&cells);
    let suite_digest = setup.suite.digest().to_string();
    write_study_outputs(&cfg.out_dir, &suite_digest, &cells, &summary)?;
    Ok(StudyReport {
        suite_digest,
        cells,
        summary,
    })
}
