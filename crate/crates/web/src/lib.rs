//! Browser demo: the collision-risk fan of one scenario, random threat
//! scenarios and the built-in risk presets. Every export returns JSON text.

use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

use riskgym::dynamics::{rollout_constant_action, Obstacle, Pose, Velocity};
use riskgym::risk::per_action_collision_mask;
use riskgym::scenario::{generate_pool, CrDistribution, PoolSpec};

/// Keep every n-th rollout point; the page draws polylines, not samples.
const PATH_STRIDE: usize = 4;

fn spec(robot: bool) -> PoolSpec {
    if robot {
        PoolSpec::robot()
    } else {
        PoolSpec::point_mass()
    }
}

/// Rollouts of every grid action plus their collision flags. `obstacles` is
/// flat `[x, y, psi, u]` per obstacle.
pub fn fan_json(u0: f64, r0: f64, obstacles: &[f64], robot: bool) -> Result<String, String> {
    if !obstacles.len().is_multiple_of(4) {
        return Err(format!("obstacle array length {} is not a multiple of 4", obstacles.len()));
    }
    let spec = spec(robot);
    let model = spec.model;
    let cfg = spec.cr;
    let agent = (Pose::ORIGIN, Velocity::new(u0, 0.0, r0));
    let obst: Vec<Obstacle> = obstacles
        .chunks_exact(4)
        .map(|o| Obstacle::new(o[0], o[1], o[2], o[3].max(0.0), model.r_coll))
        .collect();
    let mask = per_action_collision_mask(agent, &obst, &model, &cfg);

    let mut paths = Vec::with_capacity(cfg.grid.len());
    for action in cfg.grid.actions() {
        let poses = rollout_constant_action(agent, action, &model, cfg.dt, cfg.t_lim).map_err(|e| e.to_string())?;
        let last = poses.len() - 1;
        let points: Vec<[f64; 2]> = poses
            .iter()
            .enumerate()
            .filter(|(k, _)| k % PATH_STRIDE == 0 || *k == last)
            .map(|(_, p)| [p.x, p.y])
            .collect();
        paths.push(json!({ "action": action, "points": points }));
    }
    let tracks: Vec<Value> = obst
        .iter()
        .map(|o| {
            let p = o.pose();
            json!({ "start": [p.x, p.y], "end": o.position_at(cfg.t_lim), "radius": o.r_coll })
        })
        .collect();
    Ok(json!({
        "cr": mask.risk(),
        "t_lim": cfg.t_lim,
        "agent_radius": model.r_coll,
        "mask": mask.flags,
        "paths": paths,
        "obstacles": tracks,
    })
    .to_string())
}

/// One labelled threat scenario drawn with `seed`.
pub fn random_threat_json(seed: u32, robot: bool) -> Result<String, String> {
    let pool = generate_pool(1, &spec(robot), u64::from(seed)).map_err(|e| e.to_string())?;
    let s = &pool.scenarios()[0];
    let obstacles: Vec<f64> = s.obstacles.iter().flat_map(|o| [o.x, o.y, o.psi, o.u]).collect();
    Ok(json!({ "u0": s.u0, "r0": s.r0, "obstacles": obstacles, "cr": s.cr }).to_string())
}

/// Bin masses and mean risk of the seven presets.
pub fn presets_json() -> String {
    let presets: Vec<Value> = (1..=7)
        .map(|level| {
            let d = CrDistribution::preset(level).expect("levels 1..=7 exist");
            json!({ "level": level, "mean": d.mean(), "edges": d.edges(), "masses": d.masses() })
        })
        .collect();
    Value::Array(presets).to_string()
}

#[wasm_bindgen]
pub fn trajectory_fan(u0: f64, r0: f64, obstacles: &[f64], robot: bool) -> Result<String, JsError> {
    fan_json(u0, r0, obstacles, robot).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn random_threat(seed: u32, robot: bool) -> Result<String, JsError> {
    random_threat_json(seed, robot).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn preset_masses() -> String {
    presets_json()
}
