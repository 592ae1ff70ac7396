//! Planar two-link arm reaching for a fixed target.
//!
//! Joints are driven independently (no inertial coupling):
//!
//! ```text
//! I_j q_acc_j = TORQUE * mask_j * a_j - DAMPING * q_dot_j,   I_j = LINK_MASS * L_j^2 / 3
//! ```
//!
//! `q2` is measured relative to the first link. The end effector is at
//! `(L1 cos q1 + L2 cos(q1 + q2), L1 sin q1 + L2 sin(q1 + q2))`.

use serde::{Deserialize, Serialize};

use crate::presets::ReacherVariation;

pub const LINK_LENGTH: f64 = 0.1;
pub const LINK_MASS: f64 = 1.0;
pub const TORQUE: f64 = 0.05;
pub const DAMPING: f64 = 0.02;
pub const DT: f64 = 0.02;
pub const SUBSTEPS: usize = 4;
pub const TARGET: [f64; 2] = [0.1, 0.1];
/// Distance unit of the reward.
pub const DISTANCE_SCALE: f64 = 0.1;
pub const VELOCITY_SCALE: f64 = 5.0;
pub const OFFSET_SCALE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReacherState {
    pub q: [f64; 2],
    pub q_dot: [f64; 2],
}

impl ReacherState {
    pub const REST: ReacherState = ReacherState {
        q: [0.0; 2],
        q_dot: [0.0; 2],
    };
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReacherPhysics {
    pub lengths: [f64; 2],
    pub inertia: [f64; 2],
    pub motor_mask: [f64; 2],
    pub torque: f64,
    pub damping: f64,
    pub dt: f64,
    pub substeps: usize,
}

impl ReacherPhysics {
    pub fn new(v: &ReacherVariation) -> Self {
        let lengths = [LINK_LENGTH * v.link1, LINK_LENGTH * v.link2];
        ReacherPhysics {
            lengths,
            inertia: lengths.map(|l| LINK_MASS * l * l / 3.0),
            motor_mask: v.motor_mask,
            torque: TORQUE,
            damping: DAMPING,
            dt: DT,
            substeps: SUBSTEPS,
        }
    }

    pub fn step(&self, s: &ReacherState, action: [f64; 2]) -> ReacherState {
        let h = self.dt / self.substeps as f64;
        let mut s = *s;
        for _ in 0..self.substeps {
            for (j, a) in action.iter().enumerate() {
                let acc = (self.torque * self.motor_mask[j] * a - self.damping * s.q_dot[j]) / self.inertia[j];
                s.q_dot[j] += h * acc;
                s.q[j] += h * s.q_dot[j];
            }
        }
        s
    }

    pub fn end_effector(&self, s: &ReacherState) -> [f64; 2] {
        let [l1, l2] = self.lengths;
        let a = s.q[0];
        let b = s.q[0] + s.q[1];
        [l1 * a.cos() + l2 * b.cos(), l1 * a.sin() + l2 * b.sin()]
    }

    pub fn distance(&self, s: &ReacherState) -> f64 {
        let [x, y] = self.end_effector(s);
        (x - TARGET[0]).hypot(y - TARGET[1])
    }

    /// `[cos q1, sin q1, cos q2, sin q2, q1_dot, q2_dot, dx, dy]`, scaled.
    pub fn observe(&self, s: &ReacherState, out: &mut [f64]) {
        let [x, y] = self.end_effector(s);
        let (s1, c1) = s.q[0].sin_cos();
        let (s2, c2) = s.q[1].sin_cos();
        out.copy_from_slice(&[
            c1,
            s1,
            c2,
            s2,
            s.q_dot[0] / VELOCITY_SCALE,
            s.q_dot[1] / VELOCITY_SCALE,
            (x - TARGET[0]) / OFFSET_SCALE,
            (y - TARGET[1]) / OFFSET_SCALE,
        ]);
    }

    pub fn reward(&self, next: &ReacherState) -> f64 {
        -self.distance(next) / DISTANCE_SCALE
    }
}
