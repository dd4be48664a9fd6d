use std::f64::consts::PI;

use rand::Rng as _;

use super::{Action, ActionKind, Dynamics, EnvName, EnvSpec};
use crate::rng::Rng;

const MAX_SPEED: f64 = 8.0;
const MAX_TORQUE: f64 = 2.0;
const DT: f64 = 0.05;
const G: f64 = 10.0;
const M: f64 = 1.0;
const L: f64 = 1.0;

/// Inverted pendulum swing-up. Never terminates; truncated at 200 steps.
#[derive(Debug, Default, Clone)]
pub struct Pendulum {
    theta: f64,
    theta_dot: f64,
}

impl Pendulum {
    pub fn spec() -> EnvSpec {
        EnvSpec {
            name: EnvName::Pendulum,
            state_dim: 3,
            action_kind: ActionKind::Continuous {
                low: vec![-MAX_TORQUE],
                high: vec![MAX_TORQUE],
            },
            state_bounds: vec![(-1.0, 1.0), (-1.0, 1.0), (-MAX_SPEED, MAX_SPEED)],
            solve_threshold: -400.0,
            max_steps: 200,
        }
    }

    fn observation(&self) -> Vec<f64> {
        vec![self.theta.cos(), self.theta.sin(), self.theta_dot]
    }
}

fn angle_normalize(x: f64) -> f64 {
    (x + PI).rem_euclid(2.0 * PI) - PI
}

impl Dynamics for Pendulum {
    fn reset(&mut self, rng: &mut Rng) -> Vec<f64> {
        self.theta = rng.random_range(-PI..PI);
        self.theta_dot = rng.random_range(-1.0..1.0);
        self.observation()
    }

    fn step(&mut self, action: &Action) -> (Vec<f64>, f64, bool) {
        let u = match action {
            Action::Continuous(v) => v[0],
            Action::Discrete(_) => 0.0,
        };
        let th = self.theta;
        let thdot = self.theta_dot;
        let cost = angle_normalize(th).powi(2) + 0.1 * thdot * thdot + 0.001 * u * u;
        let new_thdot = (thdot + (3.0 * G / (2.0 * L) * th.sin() + 3.0 / (M * L * L) * u) * DT)
            .clamp(-MAX_SPEED, MAX_SPEED);
        self.theta = th + new_thdot * DT;
        self.theta_dot = new_thdot;
        (self.observation(), -cost, false)
    }
}
