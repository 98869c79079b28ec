//! Risk profile of the box baseline's initial states for several risk
//! horizons. Usage: `cargo run --release --example audit_sweep [samples]`.

use riskgym::env::{BoxConfig, EnvConfig};
use riskgym::harness::audit_random_init;

fn main() -> riskgym::Result<()> {
    let samples = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(4000);
    println!("t_lim,zero_mass,one_mass,between_1,between_2,between_3+");
    for t_lim in [4.0, 6.0, 8.0, 10.0, 20.0] {
        let mut cfg = EnvConfig::point_mass();
        cfg.cr.t_lim = t_lim;
        let r = audit_random_init(&cfg, &BoxConfig::point_mass(), samples, 0)?;
        let by = r.mass_by_threats();
        let rest: f64 = by.iter().skip(2).sum();
        println!("{t_lim},{:.4},{:.4},{:.4},{:.4},{rest:.4}", r.zero_mass, r.one_mass, by[0], by[1]);
    }
    Ok(())
}
