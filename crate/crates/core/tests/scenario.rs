use rand_chacha::rand_core::SeedableRng;
use riskgym::scenario::{
    cr_bin, generate_filled_pool, generate_pool, load_pool, save_pool, CrDistribution, ObstacleRatio, PoolSpec,
    ScenarioPool, ScenarioSampler, CR_BINS,
};
use riskgym::{Error, SimRng};
use std::sync::OnceLock;

fn filled() -> &'static ScenarioPool {
    static POOL: OnceLock<ScenarioPool> = OnceLock::new();
    POOL.get_or_init(|| generate_filled_pool(3000, 20, &PoolSpec::point_mass(), 77).unwrap())
}

fn histogram(sampler: &ScenarioSampler, draws: usize, seed: u64) -> ([f64; CR_BINS], [f64; 3]) {
    let mut rng = SimRng::seed_from_u64(seed);
    let (mut bins, mut counts) = ([0.0; CR_BINS], [0.0; 3]);
    for _ in 0..draws {
        let s = sampler.draw(&mut rng).unwrap();
        bins[cr_bin(s.cr, CR_BINS)] += 1.0 / draws as f64;
        counts[s.n_obst() - 1] += 1.0 / draws as f64;
    }
    (bins, counts)
}

#[test]
fn every_scenario_is_a_genuine_threat() {
    let spec = PoolSpec::point_mass();
    let pool = filled();
    for s in pool.scenarios() {
        assert!(s.cr >= 1.0 / 121.0 - 1e-12);
        assert!((1..=3).contains(&s.n_obst()));
        assert_eq!(s.recompute_cr(&spec.model, &spec.cr), s.cr);
    }
    for n in 1..=3 {
        for k in 0..CR_BINS {
            let (lo, hi) = (k as f64 / 10.0, (k + 1) as f64 / 10.0);
            assert!(pool.cell(n, lo, hi, k + 1 == CR_BINS).len() >= 20, "cell n={n} bin={k}");
        }
    }
}

#[test]
fn uniform_draws_match_target_histogram() {
    let dist = CrDistribution::uniform(CR_BINS);
    let sampler = ScenarioSampler::new(filled(), dist.clone(), ObstacleRatio::uniform());
    let (bins, _) = histogram(&sampler, 100_000, 3);
    let tv: f64 = 0.5 * bins.iter().zip(dist.masses()).map(|(e, t)| (e - t).abs()).sum::<f64>();
    assert!(tv <= 0.05, "tv {tv}");
}

#[test]
fn preset_draws_match_target_histogram() {
    for level in [1, 4, 7] {
        let dist = CrDistribution::preset(level).unwrap();
        let sampler = ScenarioSampler::new(filled(), dist.clone(), ObstacleRatio::uniform());
        let (bins, _) = histogram(&sampler, 100_000, level as u64);
        let tv: f64 = 0.5 * bins.iter().zip(dist.masses()).map(|(e, t)| (e - t).abs()).sum::<f64>();
        assert!(tv <= 0.05, "preset {level} tv {tv}");
    }
}

#[test]
fn obstacle_ratio_is_respected() {
    let ratio = ObstacleRatio::from_weights([1.0, 2.0, 4.0]).unwrap();
    let sampler = ScenarioSampler::new(filled(), CrDistribution::uniform(CR_BINS), ratio);
    let (_, counts) = histogram(&sampler, 100_000, 9);
    for (got, want) in counts.iter().zip([1.0 / 7.0, 2.0 / 7.0, 4.0 / 7.0]) {
        assert!((got - want).abs() <= 0.01, "{counts:?}");
    }
}

#[test]
fn presets_are_ordered_by_risk() {
    let means: Vec<f64> = (1..=7).map(|k| CrDistribution::preset(k).unwrap().mean()).collect();
    assert!(means.windows(2).all(|w| w[0] < w[1]), "{means:?}");
    for k in 1..=7 {
        let d = CrDistribution::preset(k).unwrap();
        assert!((d.masses().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(d.masses().iter().all(|&m| m > 0.0));
    }
    assert!((CrDistribution::preset(4).unwrap().mean() - 0.5).abs() < 1e-12);
    assert!(CrDistribution::preset(0).is_err() && CrDistribution::preset(8).is_err());
}

#[test]
fn empty_cell_is_reported() {
    let spec = PoolSpec::point_mass();
    let singles: Vec<_> = generate_pool(60, &spec, 1)
        .unwrap()
        .scenarios()
        .iter()
        .filter(|s| s.n_obst() == 1)
        .cloned()
        .collect();
    let pool = ScenarioPool::new(spec, singles).unwrap();
    let sampler = ScenarioSampler::new(&pool, CrDistribution::uniform(CR_BINS), ObstacleRatio::new([0.0, 0.0, 1.0]).unwrap());
    assert!(matches!(sampler.check_serves(), Err(Error::EmptyCell { n_obst: 3, .. })));
    assert!(matches!(sampler.draw(&mut SimRng::seed_from_u64(0)), Err(Error::EmptyCell { n_obst: 3, .. })));
}

#[test]
fn generation_is_seeded() {
    let spec = PoolSpec::point_mass();
    let a = generate_pool(300, &spec, 4).unwrap();
    let b = generate_pool(300, &spec, 4).unwrap();
    let c = generate_pool(300, &spec, 5).unwrap();
    assert_eq!(a.scenarios(), b.scenarios());
    assert_ne!(a.scenarios(), c.scenarios());
}

#[test]
fn saved_pool_reloads_bit_identically() {
    let spec = PoolSpec::point_mass();
    let pool = generate_pool(1000, &spec, 8).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("pool.jsonl");
    save_pool(&pool, &path).unwrap();
    let back = load_pool(&path, &spec).unwrap();
    assert_eq!(back.scenarios(), pool.scenarios());
    assert!(load_pool(&path, &PoolSpec::robot()).is_err());
}
