use rand_chacha::rand_core::SeedableRng;
use serde::Serialize;

use crate::env::{BoxConfig, BoxEnv, EnvConfig};
use crate::error::{Error, Result};
use crate::risk::risk_with_threats;
use crate::scenario::{cr_bin, CR_BINS, STREAM_CHUNK};
use crate::SimRng;

/// Risk profile of the baseline environment's random initial states.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub samples: usize,
    /// Share of samples with risk exactly 0.
    pub zero_mass: f64,
    /// Share of samples with risk exactly 1.
    pub one_mass: f64,
    /// `histogram[bin][k - 1]`: share of samples with `0 < risk < 1` in risk
    /// bin `bin` and `k` threatening obstacles.
    pub histogram: Vec<Vec<f64>>,
}

impl AuditReport {
    pub fn total_mass(&self) -> f64 {
        self.zero_mass + self.one_mass + self.histogram.iter().flatten().sum::<f64>()
    }

    /// In-between mass per number of threatening obstacles.
    pub fn mass_by_threats(&self) -> Vec<f64> {
        let width = self.histogram.first().map_or(0, Vec::len);
        (0..width).map(|k| self.histogram.iter().map(|row| row[k]).sum()).collect()
    }
}

/// Samples `samples` initial box states and scores each with the risk metric.
pub fn audit_random_init(cfg: &EnvConfig, layout: &BoxConfig, samples: usize, seed: u64) -> Result<AuditReport> {
    if samples == 0 {
        return Err(Error::Config("audit needs at least one sample".into()));
    }
    let env = BoxEnv::new(*cfg, *layout)?;
    let n_obst = layout.n_obstacles;
    let chunks = samples.div_ceil(STREAM_CHUNK);
    // Per sample: (risk, number of threatening obstacles).
    let run_chunk = |chunk: usize| -> Vec<(f64, usize)> {
        let mut rng = SimRng::seed_from_u64(seed);
        rng.set_stream(chunk as u64);
        let n = STREAM_CHUNK.min(samples - chunk * STREAM_CHUNK);
        (0..n)
            .map(|_| {
                let world = env.sample_initial(&mut rng);
                let (cr, threats) = risk_with_threats((world.pose, world.vel), &world.obstacles, &cfg.model, &cfg.cr);
                (cr, threats.iter().filter(|&&t| t).count())
            })
            .collect()
    };
    #[cfg(feature = "parallel")]
    let parts: Vec<Vec<(f64, usize)>> = {
        use rayon::prelude::*;
        (0..chunks).into_par_iter().map(run_chunk).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let parts: Vec<Vec<(f64, usize)>> = (0..chunks).map(run_chunk).collect();

    let w = 1.0 / samples as f64;
    let mut report = AuditReport {
        samples,
        zero_mass: 0.0,
        one_mass: 0.0,
        histogram: vec![vec![0.0; n_obst]; CR_BINS],
    };
    for (cr, threats) in parts.into_iter().flatten() {
        if cr == 0.0 {
            report.zero_mass += w;
        } else if cr == 1.0 {
            report.one_mass += w;
        } else {
            report.histogram[cr_bin(cr, CR_BINS)][threats - 1] += w;
        }
    }
    Ok(report)
}
