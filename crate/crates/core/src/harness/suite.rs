use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::scenario::{largest_remainder, scenario_line, CrDistribution, Scenario, ScenarioPool, CR_BINS};
use crate::SimRng;

/// Frozen evaluation scenarios shared by every agent of a study.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationSuite {
    scenarios: Vec<Scenario>,
    digest: String,
}

impl ValidationSuite {
    pub fn from_scenarios(scenarios: Vec<Scenario>) -> Result<Self> {
        if scenarios.is_empty() {
            return Err(Error::Config("validation suite must not be empty".into()));
        }
        let mut hasher = Sha256::new();
        for s in &scenarios {
            hasher.update(scenario_line(s).as_bytes());
            hasher.update(b"\n");
        }
        let digest = hex::encode(&hasher.finalize()[..16]);
        Ok(ValidationSuite { scenarios, digest })
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

    /// Content hash; identical suites have identical digests.
    pub fn digest(&self) -> &str {
        &self.digest
    }
}

/// `size` scenarios spread evenly over obstacle counts and risk bins.
///
/// Counts per obstacle number and then per bin are fixed by largest-remainder
/// rounding; scenarios inside a cell are drawn uniformly with replacement.
pub fn build_validation_suite(pool: &ScenarioPool, size: usize, seed: u64) -> Result<ValidationSuite> {
    if size == 0 {
        return Err(Error::Config("validation size must be at least 1".into()));
    }
    let max_obst = pool.spec.ranges.max_obstacles;
    let dist = CrDistribution::uniform(CR_BINS);
    let mut rng = SimRng::seed_from_u64(seed);
    let mut scenarios = Vec::with_capacity(size);
    for (n_idx, &n_count) in largest_remainder(&vec![1.0; max_obst], size).iter().enumerate() {
        for (bin, &count) in largest_remainder(dist.masses(), n_count).iter().enumerate() {
            if count == 0 {
                continue;
            }
            let (lo, hi, closed) = dist.bin_bounds(bin);
            let cell = pool.cell(n_idx + 1, lo, hi, closed);
            if cell.is_empty() {
                return Err(Error::EmptyCell {
                    lo,
                    hi,
                    n_obst: n_idx + 1,
                });
            }
            for _ in 0..count {
                let idx = cell[rng.gen_range(0..cell.len())];
                scenarios.push(pool.scenarios()[idx].clone());
            }
        }
    }
    ValidationSuite::from_scenarios(scenarios)
}
