// Brute-force collision-risk oracle written straight from the equations of
// motion. It shares no code with the library: vehicle constants are spelled
// out here, the integrator is re-derived, and obstacle positions come from the
// closed-form straight line.

#![allow(dead_code)]

#[derive(Debug, Clone, Copy)]
pub enum Body {
    /// Mass, inertia, force limit, torque limit.
    PointMass { m: f64, inertia: f64, f_max: f64, t_max: f64 },
    /// Mass, rear axle to centre, wheelbase, force limit, steering limit.
    Robot { m: f64, l_r: f64, l: f64, f_max: f64, delta_max: f64 },
}

pub const POINT_MASS: Body = Body::PointMass {
    m: 15.0,
    inertia: 30.0,
    f_max: 1.0,
    t_max: 1.0,
};

pub fn robot() -> Body {
    Body::Robot {
        m: 5.0,
        l_r: 1.0,
        l: 2.0,
        f_max: 1.0,
        delta_max: 5.0 * std::f64::consts::PI / 180.0,
    }
}

/// Agent at the origin heading +x with surge `u0` and yaw rate `r0`; each
/// obstacle is `[x, y, heading, speed]`.
#[derive(Debug, Clone)]
pub struct Scene {
    pub u0: f64,
    pub r0: f64,
    pub obstacles: Vec<[f64; 4]>,
    pub collision_distance: f64,
}

/// Grid level `i` of `n` on `[-1, 1]`.
pub fn level(i: usize, n: usize) -> f64 {
    (2 * i) as f64 / (n - 1) as f64 - 1.0
}

/// Agent positions at `t = k·dt`, `k = 0..=steps`, under a constant action.
pub fn trajectory(body: Body, u0: f64, r0: f64, a: [f64; 2], dt: f64, steps: usize) -> Vec<(f64, f64)> {
    let (mut x, mut y, mut psi, mut u, mut r) = (0.0f64, 0.0f64, 0.0f64, u0, r0);
    let mut out = vec![(x, y)];
    for _ in 0..steps {
        match body {
            Body::PointMass { m, inertia, f_max, t_max } => {
                let u1 = u + f_max * a[0] / m * dt;
                let r1 = r + t_max * a[1] / inertia * dt;
                let psi1 = psi + dt * (r + r1) / 2.0;
                x += dt * (u * psi.cos() + u1 * psi1.cos()) / 2.0;
                y += dt * (u * psi.sin() + u1 * psi1.sin()) / 2.0;
                (u, r, psi) = (u1, r1, psi1);
            }
            Body::Robot { m, l_r, l, f_max, delta_max } => {
                let delta = delta_max * a[1];
                let beta = (delta.tan() * l_r / l).atan();
                let u1 = u + f_max * a[0] / m * dt;
                let yaw0 = u * beta.sin() / l_r;
                let yaw1 = u1 * beta.sin() / l_r;
                let psi1 = psi + dt * (yaw0 + yaw1) / 2.0;
                x += dt * (u * (psi + beta).cos() + u1 * (psi1 + beta).cos()) / 2.0;
                y += dt * (u * (psi + beta).sin() + u1 * (psi1 + beta).sin()) / 2.0;
                (u, psi) = (u1, psi1);
            }
        }
        out.push((x, y));
    }
    out
}

/// Collision flag for every action of an `n × n` grid, longitudinal index
/// outermost.
pub fn collision_flags(body: Body, scene: &Scene, t_lim: f64, dt: f64, n: usize) -> Vec<bool> {
    let steps = (t_lim / dt).round() as usize;
    let mut flags = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let path = trajectory(body, scene.u0, scene.r0, [level(i, n), level(j, n)], dt, steps);
            let hit = path.iter().enumerate().any(|(k, &(ax, ay))| {
                let t = k as f64 * dt;
                scene.obstacles.iter().any(|o| {
                    let ox = o[0] + o[3] * o[2].cos() * t;
                    let oy = o[1] + o[3] * o[2].sin() * t;
                    (ax - ox).hypot(ay - oy) < scene.collision_distance
                })
            });
            flags.push(hit);
        }
    }
    flags
}

/// Number of colliding actions; the risk is this over `n²`.
pub fn colliding_actions(body: Body, scene: &Scene, t_lim: f64, dt: f64, n: usize) -> usize {
    collision_flags(body, scene, t_lim, dt, n).into_iter().filter(|&f| f).count()
}
