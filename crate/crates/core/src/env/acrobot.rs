use std::f64::consts::PI;

use rand::Rng as _;

use super::{Action, ActionKind, Dynamics, EnvName, EnvSpec};
use crate::rng::Rng;

const DT: f64 = 0.2;
const LINK_LENGTH_1: f64 = 1.0;
const LINK_MASS_1: f64 = 1.0;
const LINK_MASS_2: f64 = 1.0;
const LINK_COM_1: f64 = 0.5;
const LINK_COM_2: f64 = 0.5;
const LINK_MOI: f64 = 1.0;
const MAX_VEL_1: f64 = 4.0 * PI;
const MAX_VEL_2: f64 = 9.0 * PI;
const TORQUES: [f64; 3] = [-1.0, 0.0, 1.0];

/// Two-link underactuated swing-up ("book" dynamics, RK4 integration).
#[derive(Debug, Default, Clone)]
pub struct Acrobot {
    // theta1, theta2, dtheta1, dtheta2
    state: [f64; 4],
}

impl Acrobot {
    pub fn spec() -> EnvSpec {
        EnvSpec {
            name: EnvName::Acrobot,
            state_dim: 6,
            action_kind: ActionKind::Discrete(3),
            state_bounds: vec![
                (-1.0, 1.0),
                (-1.0, 1.0),
                (-1.0, 1.0),
                (-1.0, 1.0),
                (-MAX_VEL_1, MAX_VEL_1),
                (-MAX_VEL_2, MAX_VEL_2),
            ],
            solve_threshold: -100.0,
            max_steps: 500,
        }
    }

    fn observation(&self) -> Vec<f64> {
        let [t1, t2, d1, d2] = self.state;
        vec![t1.cos(), t1.sin(), t2.cos(), t2.sin(), d1, d2]
    }

    fn terminal(&self) -> bool {
        let [t1, t2, ..] = self.state;
        -t1.cos() - (t2 + t1).cos() > 1.0
    }
}

fn derivatives(s: [f64; 4], torque: f64) -> [f64; 4] {
    let (m1, m2, l1, lc1, lc2, i1, i2, g) = (
        LINK_MASS_1,
        LINK_MASS_2,
        LINK_LENGTH_1,
        LINK_COM_1,
        LINK_COM_2,
        LINK_MOI,
        LINK_MOI,
        9.8,
    );
    let [theta1, theta2, dtheta1, dtheta2] = s;
    let d1 = m1 * lc1 * lc1 + m2 * (l1 * l1 + lc2 * lc2 + 2.0 * l1 * lc2 * theta2.cos()) + i1 + i2;
    let d2 = m2 * (lc2 * lc2 + l1 * lc2 * theta2.cos()) + i2;
    let phi2 = m2 * lc2 * g * (theta1 + theta2 - PI / 2.0).cos();
    let phi1 = -m2 * l1 * lc2 * dtheta2 * dtheta2 * theta2.sin()
        - 2.0 * m2 * l1 * lc2 * dtheta2 * dtheta1 * theta2.sin()
        + (m1 * lc1 + m2 * l1) * g * (theta1 - PI / 2.0).cos()
        + phi2;
    let ddtheta2 =
        (torque + d2 / d1 * phi1 - m2 * l1 * lc2 * dtheta1 * dtheta1 * theta2.sin() - phi2)
            / (m2 * lc2 * lc2 + i2 - d2 * d2 / d1);
    let ddtheta1 = -(d2 * ddtheta2 + phi1) / d1;
    [dtheta1, dtheta2, ddtheta1, ddtheta2]
}

fn rk4(y0: [f64; 4], torque: f64, dt: f64) -> [f64; 4] {
    let add = |a: [f64; 4], k: [f64; 4], h: f64| std::array::from_fn(|i| a[i] + h * k[i]);
    let k1 = derivatives(y0, torque);
    let k2 = derivatives(add(y0, k1, dt / 2.0), torque);
    let k3 = derivatives(add(y0, k2, dt / 2.0), torque);
    let k4 = derivatives(add(y0, k3, dt), torque);
    std::array::from_fn(|i| y0[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
}

/// Wraps into [-pi, pi) like gymnasium's `wrap`.
fn wrap(mut x: f64) -> f64 {
    let span = 2.0 * PI;
    while x > PI {
        x -= span;
    }
    while x < -PI {
        x += span;
    }
    x
}

impl Dynamics for Acrobot {
    fn reset(&mut self, rng: &mut Rng) -> Vec<f64> {
        for x in &mut self.state {
            *x = rng.random_range(-0.1..0.1);
        }
        self.observation()
    }

    fn step(&mut self, action: &Action) -> (Vec<f64>, f64, bool) {
        let torque = TORQUES[action.discrete().unwrap_or(1)];
        let ns = rk4(self.state, torque, DT);
        self.state = [
            wrap(ns[0]),
            wrap(ns[1]),
            ns[2].clamp(-MAX_VEL_1, MAX_VEL_1),
            ns[3].clamp(-MAX_VEL_2, MAX_VEL_2),
        ];
        let terminal = self.terminal();
        (
            self.observation(),
            if terminal { 0.0 } else { -1.0 },
            terminal,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Env;

    #[test]
    fn resting_acrobot_stays_down() {
        let mut env = Env::new(EnvName::Acrobot, 0);
        env.reset(0);
        let mut total = 0.0;
        for _ in 0..500 {
            let res = env.step(&Action::Discrete(1)).unwrap();
            total += res.reward;
            assert!(!res.terminated);
            if res.truncated {
                break;
            }
        }
        assert_eq!(total, -500.0);
    }

    #[test]
    fn torque_pumping_eventually_swings_up() {
        let mut env = Env::new(EnvName::Acrobot, 0);
        let stats = crate::env::rollout(
            &mut env,
            |s| Ok(Action::Discrete(if s[5] > 0.0 { 2 } else { 0 })),
            5,
            0,
        )
        .unwrap();
        assert!(
            stats.lengths.iter().all(|&l| l < 500),
            "{:?}",
            stats.lengths
        );
    }

    #[test]
    fn wrap_matches_modular_definition() {
        for x in [-7.0, -3.2, 0.0, 3.0, 3.5, 10.0] {
            let w = wrap(x);
            assert!((-PI..=PI).contains(&w));
            assert!(((x - w) / (2.0 * PI)).fract().abs() < 1e-9);
        }
    }
}
