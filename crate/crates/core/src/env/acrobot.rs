use std::f64::consts::PI;

use rand::Rng;

const DT: f64 = 0.2;
const LINK_LENGTH_1: f64 = 1.0;
const LINK_MASS_1: f64 = 1.0;
const LINK_MASS_2: f64 = 1.0;
const LINK_COM_1: f64 = 0.5;
const LINK_COM_2: f64 = 0.5;
const LINK_MOI: f64 = 1.0;
const GRAVITY: f64 = 9.8;
const MAX_VEL_1: f64 = 4.0 * PI;
const MAX_VEL_2: f64 = 9.0 * PI;
const TORQUES: [f64; 3] = [-1.0, 0.0, 1.0];

pub const RESET_BOUND: f64 = 0.1;

/// Two-link underactuated swing-up ("book" dynamics, one RK4 step per
/// action). Observation is `(cos θ1, sin θ1, cos θ2, sin θ2, θ1', θ2')`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcrobotState {
    pub theta1: f64,
    pub theta2: f64,
    pub dtheta1: f64,
    pub dtheta2: f64,
}

impl AcrobotState {
    pub fn reset<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let mut u = || rng.random_range(-RESET_BOUND..RESET_BOUND);
        Self {
            theta1: u(),
            theta2: u(),
            dtheta1: u(),
            dtheta2: u(),
        }
    }

    pub fn observation(&self) -> [f64; 6] {
        [
            self.theta1.cos(),
            self.theta1.sin(),
            self.theta2.cos(),
            self.theta2.sin(),
            self.dtheta1,
            self.dtheta2,
        ]
    }

    pub fn is_goal(&self) -> bool {
        -self.theta1.cos() - (self.theta2 + self.theta1).cos() > 1.0
    }

    /// Reward is -1 per step and 0 on the step that reaches the goal height.
    pub fn step(&self, action: usize) -> (Self, f64, bool) {
        let torque = TORQUES[action];
        let y0 = [self.theta1, self.theta2, self.dtheta1, self.dtheta2];
        let y = rk4(y0, torque, DT);
        let next = Self {
            theta1: wrap(y[0], -PI, PI),
            theta2: wrap(y[1], -PI, PI),
            dtheta1: y[2].clamp(-MAX_VEL_1, MAX_VEL_1),
            dtheta2: y[3].clamp(-MAX_VEL_2, MAX_VEL_2),
        };
        let terminal = next.is_goal();
        (next, if terminal { 0.0 } else { -1.0 }, terminal)
    }
}

fn derivatives(s: [f64; 4], torque: f64) -> [f64; 4] {
    let (m1, m2, l1) = (LINK_MASS_1, LINK_MASS_2, LINK_LENGTH_1);
    let (lc1, lc2) = (LINK_COM_1, LINK_COM_2);
    let (i1, i2) = (LINK_MOI, LINK_MOI);
    let [theta1, theta2, dtheta1, dtheta2] = s;

    let d1 = m1 * lc1 * lc1 + m2 * (l1 * l1 + lc2 * lc2 + 2.0 * l1 * lc2 * theta2.cos()) + i1 + i2;
    let d2 = m2 * (lc2 * lc2 + l1 * lc2 * theta2.cos()) + i2;
    let phi2 = m2 * lc2 * GRAVITY * (theta1 + theta2 - PI / 2.0).cos();
    let phi1 = -m2 * l1 * lc2 * dtheta2 * dtheta2 * theta2.sin()
        - 2.0 * m2 * l1 * lc2 * dtheta2 * dtheta1 * theta2.sin()
        + (m1 * lc1 + m2 * l1) * GRAVITY * (theta1 - PI / 2.0).cos()
        + phi2;
    let ddtheta2 = (torque + d2 / d1 * phi1 - m2 * l1 * lc2 * dtheta1 * dtheta1 * theta2.sin() - phi2)
        / (m2 * lc2 * lc2 + i2 - d2 * d2 / d1);
    let ddtheta1 = -(d2 * ddtheta2 + phi1) / d1;
    [dtheta1, dtheta2, ddtheta1, ddtheta2]
}

fn rk4(y0: [f64; 4], torque: f64, dt: f64) -> [f64; 4] {
    let add = |y: [f64; 4], k: [f64; 4], h: f64| -> [f64; 4] {
        [y[0] + h * k[0], y[1] + h * k[1], y[2] + h * k[2], y[3] + h * k[3]]
    };
    let k1 = derivatives(y0, torque);
    let k2 = derivatives(add(y0, k1, dt / 2.0), torque);
    let k3 = derivatives(add(y0, k2, dt / 2.0), torque);
    let k4 = derivatives(add(y0, k3, dt), torque);
    let mut out = y0;
    for i in 0..4 {
        out[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

fn wrap(x: f64, lo: f64, hi: f64) -> f64 {
    let span = hi - lo;
    let mut x = x;
    while x > hi {
        x -= span;
    }
    while x < lo {
        x += span;
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rest() -> AcrobotState {
        AcrobotState { theta1: 0.0, theta2: 0.0, dtheta1: 0.0, dtheta2: 0.0 }
    }

    #[test]
    fn rest_is_an_equilibrium_without_torque() {
        let mut s = rest();
        for _ in 0..50 {
            let (n, r, done) = s.step(1);
            assert_eq!(r, -1.0);
            assert!(!done);
            s = n;
        }
        for v in [s.theta1, s.theta2, s.dtheta1, s.dtheta2] {
            assert!(v.abs() < 1e-9, "{v}");
        }
    }

    #[test]
    fn rk4_step_conserves_energy_approximately() {
        // Small free oscillation: total mechanical energy drifts only slightly.
        fn energy(s: &AcrobotState) -> f64 {
            let (m1, m2, l1, lc1, lc2, i) = (1.0, 1.0, 1.0, 0.5, 0.5, 1.0);
            let (t1, t2, d1, d2) = (s.theta1, s.theta2, s.dtheta1, s.dtheta2);
            let kinetic = 0.5 * (m1 * lc1 * lc1 + m2 * (l1 * l1 + lc2 * lc2 + 2.0 * l1 * lc2 * t2.cos()) + 2.0 * i) * d1 * d1
                + (m2 * (lc2 * lc2 + l1 * lc2 * t2.cos()) + i) * d1 * d2
                + 0.5 * (m2 * lc2 * lc2 + i) * d2 * d2;
            let potential = -m1 * GRAVITY * lc1 * t1.cos() - m2 * GRAVITY * (l1 * t1.cos() + lc2 * (t1 + t2).cos());
            kinetic + potential
        }
        let mut s = AcrobotState { theta1: 0.3, theta2: -0.2, dtheta1: 0.0, dtheta2: 0.0 };
        let e0 = energy(&s);
        for _ in 0..20 {
            s = s.step(1).0;
        }
        assert!((energy(&s) - e0).abs() < 1e-2 * e0.abs());
    }

    #[test]
    fn goal_condition() {
        let up = AcrobotState { theta1: PI, theta2: 0.0, dtheta1: 0.0, dtheta2: 0.0 };
        assert!(up.is_goal());
        assert!(!rest().is_goal());
    }

    #[test]
    fn wrap_and_clip() {
        assert!((wrap(3.0 * PI / 2.0, -PI, PI) + PI / 2.0).abs() < 1e-12);
        assert!((wrap(-3.0 * PI / 2.0, -PI, PI) - PI / 2.0).abs() < 1e-12);
        let fast = AcrobotState { theta1: 0.0, theta2: 0.0, dtheta1: 100.0, dtheta2: -100.0 };
        let (n, _, _) = fast.step(2);
        assert!(n.dtheta1.abs() <= MAX_VEL_1 && n.dtheta2.abs() <= MAX_VEL_2);
    }
}
