//! Planar 3-DoF vehicle models and the Euler/ballistic integrator.
//!
//! The state of a vehicle is its pose `(x, y, psi)` and its body velocity
//! `(u, v, r)`. Velocities are advanced with an explicit Euler step, positions
//! with the ballistic (trapezoidal) rule using the rates at both ends of the
//! step. Obstacles move on straight lines at constant speed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Position and heading in the world frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    /// Heading in radians, unwrapped.
    pub psi: f64,
}

impl Pose {
    pub const ORIGIN: Pose = Pose {
        x: 0.0,
        y: 0.0,
        psi: 0.0,
    };

    pub fn new(x: f64, y: f64, psi: f64) -> Self {
        Pose { x, y, psi }
    }

    pub fn distance_to(&self, x: f64, y: f64) -> f64 {
        (self.x - x).hypot(self.y - y)
    }
}

/// Body-frame velocity: surge, sway and yaw rate.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Velocity {
    pub u: f64,
    pub v: f64,
    pub r: f64,
}

impl Velocity {
    pub fn new(u: f64, v: f64, r: f64) -> Self {
        Velocity { u, v, r }
    }
}

/// Control vector.
///
/// For the kinematic robot the third slot carries the front-axle steering
/// angle in radians instead of a torque.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Control {
    pub tau_u: f64,
    pub tau_v: f64,
    pub tau_r: f64,
}

/// Time derivative of a vehicle state.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StateRate {
    pub pose: Pose,
    pub vel: Velocity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VehicleKind {
    /// Force and torque driven point mass.
    PointMass { mass: f64, inertia: f64 },
    /// Four-wheeled robot with front-axle steering (kinematic single-track model).
    KinematicRobot {
        mass: f64,
        /// Distance from the rear axle to the centre of gravity.
        rear_length: f64,
        wheelbase: f64,
    },
}

/// A vehicle model with its actuator limits and collision radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleModel {
    pub kind: VehicleKind,
    /// Maximum longitudinal force, N.
    pub tau_u_max: f64,
    /// Maximum torque (point mass, N·m) or steering angle (robot, rad).
    pub second_max: f64,
    /// Collision radius, m.
    pub r_coll: f64,
}

impl VehicleModel {
    /// m = 15 kg, I = 30 kg·m², force and torque limits of 1, R_coll = 3 m.
    pub fn point_mass() -> Self {
        VehicleModel {
            kind: VehicleKind::PointMass {
                mass: 15.0,
                inertia: 30.0,
            },
            tau_u_max: 1.0,
            second_max: 1.0,
            r_coll: 3.0,
        }
    }

    /// m = 5 kg, l_r = 1 m, L = 2 m, force limit 1 N, steering limit 5°, R_coll = 6 m.
    pub fn robot() -> Self {
        VehicleModel {
            kind: VehicleKind::KinematicRobot {
                mass: 5.0,
                rear_length: 1.0,
                wheelbase: 2.0,
            },
            tau_u_max: 1.0,
            second_max: 5f64.to_radians(),
            r_coll: 6.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let params: &[(&str, f64)] = match self.kind {
            VehicleKind::PointMass { mass, inertia } => &[("mass", mass), ("inertia", inertia)],
            VehicleKind::KinematicRobot {
                mass,
                rear_length,
                wheelbase,
            } => &[
                ("mass", mass),
                ("rear_length", rear_length),
                ("wheelbase", wheelbase),
            ],
        };
        let limits = [
            ("tau_u_max", self.tau_u_max),
            ("second_max", self.second_max),
            ("r_coll", self.r_coll),
        ];
        for (name, value) in params.iter().chain(limits.iter()) {
            if !(value.is_finite() && *value > 0.0) {
                return Err(Error::InvalidModel(format!(
                    "{name} must be positive, got {value}"
                )));
            }
        }
        Ok(())
    }

    /// Maps a normalized action in `[-1, 1]²` onto the control vector.
    pub fn action_to_control(&self, action: [f64; 2]) -> Result<Control> {
        for &value in &action {
            if !(-1.0..=1.0).contains(&value) {
                return Err(Error::InvalidAction { value });
            }
        }
        Ok(self.control_unchecked(action))
    }

    #[inline]
    pub(crate) fn control_unchecked(&self, action: [f64; 2]) -> Control {
        Control {
            tau_u: self.tau_u_max * action[0],
            tau_v: 0.0,
            tau_r: self.second_max * action[1],
        }
    }

    /// Yaw rate implied by the current state. For the robot this is kinematic
    /// and follows from speed and steering; for the point mass it is `vel.r`.
    #[inline]
    pub fn yaw_rate(&self, vel: &Velocity, ctrl: &Control) -> f64 {
        match self.kind {
            VehicleKind::PointMass { .. } => vel.r,
            VehicleKind::KinematicRobot { rear_length, .. } => {
                vel.u / rear_length * self.slip_angle(ctrl).sin()
            }
        }
    }

    #[inline]
    fn slip_angle(&self, ctrl: &Control) -> f64 {
        match self.kind {
            VehicleKind::PointMass { .. } => 0.0,
            VehicleKind::KinematicRobot {
                rear_length,
                wheelbase,
                ..
            } => (ctrl.tau_r.tan() * rear_length / wheelbase).atan(),
        }
    }
}

/// Rates of change of pose and velocity.
pub fn derivative(pose: &Pose, vel: &Velocity, ctrl: &Control, model: &VehicleModel) -> StateRate {
    match model.kind {
        VehicleKind::PointMass { mass, inertia } => {
            let (sin, cos) = pose.psi.sin_cos();
            StateRate {
                pose: Pose::new(vel.u * cos, vel.u * sin, vel.r),
                vel: Velocity::new(ctrl.tau_u / mass, 0.0, ctrl.tau_r / inertia),
            }
        }
        VehicleKind::KinematicRobot { mass, .. } => {
            let beta = model.slip_angle(ctrl);
            let (sin, cos) = (pose.psi + beta).sin_cos();
            StateRate {
                pose: Pose::new(vel.u * cos, vel.u * sin, model.yaw_rate(vel, ctrl)),
                vel: Velocity::new(ctrl.tau_u / mass, 0.0, 0.0),
            }
        }
    }
}

/// One step: Euler for the velocity, ballistic for the pose.
///
/// The heading is advanced first so that the end-of-step position rate uses
/// both the updated velocity and the updated heading.
pub fn integrate_step(
    pose: &Pose,
    vel: &Velocity,
    ctrl: &Control,
    model: &VehicleModel,
    dt: f64,
) -> (Pose, Velocity) {
    let rate = derivative(pose, vel, ctrl, model);
    let mut next_vel = Velocity::new(
        vel.u + rate.vel.u * dt,
        vel.v + rate.vel.v * dt,
        vel.r + rate.vel.r * dt,
    );
    if matches!(model.kind, VehicleKind::KinematicRobot { .. }) {
        next_vel.r = model.yaw_rate(&next_vel, ctrl);
    }
    let psi_rate_next = model.yaw_rate(&next_vel, ctrl);
    let psi = pose.psi + 0.5 * (rate.pose.psi + psi_rate_next) * dt;
    let end = derivative(&Pose::new(pose.x, pose.y, psi), &next_vel, ctrl, model);
    let next_pose = Pose::new(
        pose.x + 0.5 * (rate.pose.x + end.pose.x) * dt,
        pose.y + 0.5 * (rate.pose.y + end.pose.y) * dt,
        psi,
    );
    (next_pose, next_vel)
}

/// Number of `dt` steps needed to cover `horizon`, i.e. `ceil(horizon / dt)`
/// with a small guard against round-off (`20.0 / 0.1` must give 200).
pub fn step_count(horizon: f64, dt: f64) -> usize {
    let ratio = horizon / dt;
    let nearest = ratio.round();
    if (ratio - nearest).abs() < 1e-9 * nearest.max(1.0) {
        nearest as usize
    } else {
        ratio.ceil() as usize
    }
}

/// Poses visited when holding a constant action for `horizon` seconds,
/// including the start pose.
pub fn rollout_constant_action(
    start: (Pose, Velocity),
    action: [f64; 2],
    model: &VehicleModel,
    dt: f64,
    horizon: f64,
) -> Result<Vec<Pose>> {
    let ctrl = model.action_to_control(action)?;
    let steps = step_count(horizon, dt);
    let (mut pose, mut vel) = start;
    let mut poses = Vec::with_capacity(steps + 1);
    poses.push(pose);
    for _ in 0..steps {
        (pose, vel) = integrate_step(&pose, &vel, &ctrl, model, dt);
        poses.push(pose);
    }
    Ok(poses)
}

/// An obstacle moving on a straight line at constant speed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Obstacle {
    pose: Pose,
    speed: f64,
    pub r_coll: f64,
}

impl Obstacle {
    pub fn new(x: f64, y: f64, psi: f64, speed: f64, r_coll: f64) -> Self {
        debug_assert!(speed >= 0.0);
        Obstacle {
            pose: Pose::new(x, y, psi),
            speed,
            r_coll,
        }
    }

    pub fn pose(&self) -> Pose {
        self.pose
    }

    pub fn speed(&self) -> f64 {
        self.speed
    }

    /// World-frame velocity `(vx, vy)`.
    #[inline]
    pub fn velocity(&self) -> (f64, f64) {
        let (sin, cos) = self.pose.psi.sin_cos();
        (self.speed * cos, self.speed * sin)
    }

    /// Position after `t` seconds of motion.
    #[inline]
    pub fn position_at(&self, t: f64) -> (f64, f64) {
        let (vx, vy) = self.velocity();
        (self.pose.x + vx * t, self.pose.y + vy * t)
    }

    /// Ballistic step; with constant velocity both end rates coincide.
    pub fn step(&mut self, dt: f64) {
        let (vx, vy) = self.velocity();
        self.pose.x += 0.5 * (vx + vx) * dt;
        self.pose.y += 0.5 * (vy + vy) * dt;
    }

    /// Moves the obstacle without touching its heading or speed.
    pub(crate) fn translate(&mut self, dx: f64, dy: f64) {
        self.pose.x += dx;
        self.pose.y += dy;
    }
}
