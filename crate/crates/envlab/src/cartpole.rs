//! Cart-pole with viscous cart friction and a constant lateral push.
//!
//! Pole dynamics follow the classic frictionless-pivot rod model:
//!
//! ```text
//! temp   = (F + push - mu_c * x_dot + m l theta_dot^2 sin(theta)) / (M + m)
//! th_acc = (g sin(theta) - cos(theta) temp) / (l (4/3 - m cos^2(theta) / (M + m)))
//! x_acc  = temp - m l th_acc cos(theta) / (M + m)
//! ```
//!
//! with `l` the pole half-length. `theta` is measured from upright, positive
//! clockwise (toward +x).

use serde::{Deserialize, Serialize};

use crate::presets::CartpoleVariation;

pub const GRAVITY: f64 = 9.8;
pub const CART_MASS: f64 = 1.0;
pub const POLE_MASS: f64 = 0.1;
pub const HALF_LENGTH: f64 = 0.5;
pub const FORCE_MAG: f64 = 10.0;
pub const CART_FRICTION: f64 = 1.0;
pub const DT: f64 = 0.02;
pub const SUBSTEPS: usize = 20;
pub const X_LIMIT: f64 = 2.4;
pub const THETA_LIMIT: f64 = 12.0 * std::f64::consts::PI / 180.0;
pub const ACTION_PENALTY: f64 = 0.01;

/// Observation is `state / OBS_SCALE` component-wise.
pub const OBS_SCALE: [f64; 4] = [X_LIMIT, 2.0, THETA_LIMIT, 2.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CartpoleState {
    pub x: f64,
    pub x_dot: f64,
    pub theta: f64,
    pub theta_dot: f64,
}

impl CartpoleState {
    pub const REST: CartpoleState = CartpoleState {
        x: 0.0,
        x_dot: 0.0,
        theta: 0.0,
        theta_dot: 0.0,
    };

    pub fn to_array(self) -> [f64; 4] {
        [self.x, self.x_dot, self.theta, self.theta_dot]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        CartpoleState {
            x: a[0],
            x_dot: a[1],
            theta: a[2],
            theta_dot: a[3],
        }
    }
}

/// Physical constants with a variation applied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CartpolePhysics {
    pub gravity: f64,
    pub cart_mass: f64,
    pub pole_mass: f64,
    pub half_length: f64,
    pub force_mag: f64,
    pub friction: f64,
    pub push: f64,
    pub dt: f64,
    pub substeps: usize,
}

impl CartpolePhysics {
    pub fn new(v: &CartpoleVariation) -> Self {
        CartpolePhysics {
            gravity: GRAVITY,
            cart_mass: CART_MASS,
            pole_mass: POLE_MASS,
            half_length: HALF_LENGTH * v.pole_length,
            force_mag: FORCE_MAG,
            friction: CART_FRICTION * v.friction,
            push: v.push,
            dt: DT,
            substeps: SUBSTEPS,
        }
    }

    /// `(x_acc, theta_acc)` for a total applied force `force` (actuator plus push).
    pub fn accelerations(&self, s: &CartpoleState, force: f64) -> (f64, f64) {
        let total = self.cart_mass + self.pole_mass;
        let pml = self.pole_mass * self.half_length;
        let (sin, cos) = s.theta.sin_cos();
        let temp = (force - self.friction * s.x_dot + pml * s.theta_dot * s.theta_dot * sin) / total;
        let th_acc =
            (self.gravity * sin - cos * temp) / (self.half_length * (4.0 / 3.0 - self.pole_mass * cos * cos / total));
        let x_acc = temp - pml * th_acc * cos / total;
        (x_acc, th_acc)
    }

    /// Advances one control step; `action` is already clamped to [-1, 1].
    pub fn step(&self, s: &CartpoleState, action: f64) -> CartpoleState {
        let force = self.force_mag * action + self.push;
        let h = self.dt / self.substeps as f64;
        let mut s = *s;
        for _ in 0..self.substeps {
            let (x_acc, th_acc) = self.accelerations(&s, force);
            s.x_dot += h * x_acc;
            s.theta_dot += h * th_acc;
            s.x += h * s.x_dot;
            s.theta += h * s.theta_dot;
        }
        s
    }

    /// Kinetic plus potential energy, potential zero at the pivot height.
    pub fn energy(&self, s: &CartpoleState) -> f64 {
        let (m, l) = (self.pole_mass, self.half_length);
        let cart = 0.5 * self.cart_mass * s.x_dot * s.x_dot;
        let vx = s.x_dot + l * s.theta_dot * s.theta.cos();
        let vy = -l * s.theta_dot * s.theta.sin();
        let pole = 0.5 * m * (vx * vx + vy * vy) + 0.5 * (m * l * l / 3.0) * s.theta_dot * s.theta_dot;
        cart + pole + m * self.gravity * l * s.theta.cos()
    }
}

pub fn failed(s: &CartpoleState) -> bool {
    s.x.abs() > X_LIMIT || s.theta.abs() > THETA_LIMIT
}

pub fn observe(s: &CartpoleState, out: &mut [f64]) {
    for ((o, v), k) in out.iter_mut().zip(s.to_array()).zip(OBS_SCALE) {
        *o = v / k;
    }
}

/// 1 minus a small action penalty while the pole is up, 0 on the failing step.
pub fn reward(next: &CartpoleState, action: f64) -> f64 {
    if failed(next) {
        0.0
    } else {
        1.0 - ACTION_PENALTY * action * action
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn physics() -> CartpolePhysics {
        CartpolePhysics::new(&CartpoleVariation::DEFAULT)
    }

    #[test]
    fn rest_is_an_equilibrium() {
        let p = physics();
        let mut s = CartpoleState::REST;
        for _ in 0..500 {
            s = p.step(&s, 0.0);
        }
        assert_eq!(s, CartpoleState::REST);
    }

    #[test]
    fn force_pushes_cart_and_tips_pole_back() {
        let p = physics();
        let (x_acc, th_acc) = p.accelerations(&CartpoleState::REST, 10.0);
        assert!(x_acc > 0.0 && th_acc < 0.0);
    }

    #[test]
    fn friction_only_dissipates() {
        let p = physics();
        let s = CartpoleState {
            x_dot: 1.0,
            ..CartpoleState::REST
        };
        let e0 = p.energy(&s);
        let next = p.step(&s, 0.0);
        assert!(p.energy(&next) < e0);
        assert!(next.x_dot < 1.0);
    }

    #[test]
    fn observation_scaling() {
        let mut o = [0.0; 4];
        observe(
            &CartpoleState {
                x: 2.4,
                x_dot: -1.0,
                theta: THETA_LIMIT,
                theta_dot: 4.0,
            },
            &mut o,
        );
        assert_eq!(o, [1.0, -0.5, 1.0, 2.0]);
    }

    #[test]
    fn reward_values() {
        assert_eq!(reward(&CartpoleState::REST, 0.0), 1.0);
        assert!((reward(&CartpoleState::REST, -1.0) - 0.99).abs() < 1e-15);
        let fallen = CartpoleState {
            theta: 0.3,
            ..CartpoleState::REST
        };
        assert_eq!(reward(&fallen, 0.0), 0.0);
    }
}
