use rand::Rng as _;

use super::{Action, ActionKind, Dynamics, EnvName, EnvSpec};
use crate::rng::Rng;

const GRAVITY: f64 = 9.8;
const CART_MASS: f64 = 1.0;
const POLE_MASS: f64 = 0.1;
const TOTAL_MASS: f64 = CART_MASS + POLE_MASS;
const HALF_LENGTH: f64 = 0.5;
const POLE_MASS_LENGTH: f64 = POLE_MASS * HALF_LENGTH;
const FORCE_MAG: f64 = 10.0;
const TAU: f64 = 0.02;
const X_THRESHOLD: f64 = 2.4;
pub(crate) const THETA_THRESHOLD: f64 = 12.0 * 2.0 * std::f64::consts::PI / 360.0;

/// Cart-pole balancing, explicit Euler integration.
#[derive(Debug, Default, Clone)]
pub struct CartPole {
    state: [f64; 4],
}

impl CartPole {
    pub fn spec() -> EnvSpec {
        EnvSpec {
            name: EnvName::CartPole,
            state_dim: 4,
            action_kind: ActionKind::Discrete(2),
            state_bounds: vec![
                (-2.0 * X_THRESHOLD, 2.0 * X_THRESHOLD),
                (-X_DOT_CLIP, X_DOT_CLIP),
                (-2.0 * THETA_THRESHOLD, 2.0 * THETA_THRESHOLD),
                (-THETA_DOT_CLIP, THETA_DOT_CLIP),
            ],
            solve_threshold: 490.0,
            max_steps: 500,
        }
    }
}

// 2x the largest |value| over 10k uniform-random steps (seed 1).
const X_DOT_CLIP: f64 = 5.01;
const THETA_DOT_CLIP: f64 = 5.61;

impl Dynamics for CartPole {
    fn reset(&mut self, rng: &mut Rng) -> Vec<f64> {
        for x in &mut self.state {
            *x = rng.random_range(-0.05..0.05);
        }
        self.state.to_vec()
    }

    fn step(&mut self, action: &Action) -> (Vec<f64>, f64, bool) {
        let [x, x_dot, theta, theta_dot] = self.state;
        let force = if action.discrete() == Some(1) {
            FORCE_MAG
        } else {
            -FORCE_MAG
        };
        let (sin, cos) = theta.sin_cos();
        let temp = (force + POLE_MASS_LENGTH * theta_dot * theta_dot * sin) / TOTAL_MASS;
        let theta_acc = (GRAVITY * sin - cos * temp)
            / (HALF_LENGTH * (4.0 / 3.0 - POLE_MASS * cos * cos / TOTAL_MASS));
        let x_acc = temp - POLE_MASS_LENGTH * theta_acc * cos / TOTAL_MASS;
        self.state = [
            x + TAU * x_dot,
            x_dot + TAU * x_acc,
            theta + TAU * theta_dot,
            theta_dot + TAU * theta_acc,
        ];
        let [x, _, theta, _] = self.state;
        let terminated = !(-X_THRESHOLD..=X_THRESHOLD).contains(&x)
            || !(-THETA_THRESHOLD..=THETA_THRESHOLD).contains(&theta);
        (self.state.to_vec(), 1.0, terminated)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Env;

    /// Straight transcription of gymnasium's `CartPoleEnv.step`.
    fn reference_step(s: [f64; 4], action: usize) -> ([f64; 4], bool) {
        let (g, mc, mp, l, fm, tau) = (9.8, 1.0, 0.1, 0.5, 10.0, 0.02);
        let total = mc + mp;
        let pml = mp * l;
        let [x, xd, th, thd] = s;
        let f = if action == 1 { fm } else { -fm };
        let temp = (f + pml * thd.powi(2) * th.sin()) / total;
        let thacc =
            (g * th.sin() - th.cos() * temp) / (l * (4.0 / 3.0 - mp * th.cos().powi(2) / total));
        let xacc = temp - pml * thacc * th.cos() / total;
        let n = [
            x + tau * xd,
            xd + tau * xacc,
            th + tau * thd,
            thd + tau * thacc,
        ];
        let thr = 12.0 * 2.0 * std::f64::consts::PI / 360.0;
        (n, n[0] < -2.4 || n[0] > 2.4 || n[2] < -thr || n[2] > thr)
    }

    #[test]
    fn matches_reference_and_terminates_past_twelve_degrees() {
        let mut env = Env::new(EnvName::CartPole, 0);
        let s0 = env.reset(4);
        let mut s: [f64; 4] = s0.try_into().unwrap();
        // constant push topples the pole
        for _ in 0..200 {
            let res = env.step(&Action::Discrete(1)).unwrap();
            let (expect, term) = reference_step(s, 1);
            assert!(res
                .state
                .iter()
                .zip(&expect)
                .all(|(a, b)| (a - b).abs() < 1e-12));
            assert_eq!(res.terminated, term);
            s = expect;
            if res.terminated {
                assert!(s[2].abs() > THETA_THRESHOLD || s[0].abs() > X_THRESHOLD);
                return;
            }
        }
        panic!("pole never fell");
    }
}
