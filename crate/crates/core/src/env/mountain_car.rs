use rand::Rng as _;

use super::{Action, ActionKind, Dynamics, EnvName, EnvSpec};
use crate::rng::Rng;

const MIN_POSITION: f64 = -1.2;
const MAX_POSITION: f64 = 0.6;
const MAX_SPEED: f64 = 0.07;
const GRAVITY: f64 = 0.0025;

fn reset_state(rng: &mut Rng) -> [f64; 2] {
    [rng.random_range(-0.6..-0.4), 0.0]
}

fn integrate(state: &mut [f64; 2], accel: f64) {
    let [mut position, mut velocity] = *state;
    velocity += accel - (3.0 * position).cos() * GRAVITY;
    velocity = velocity.clamp(-MAX_SPEED, MAX_SPEED);
    position += velocity;
    position = position.clamp(MIN_POSITION, MAX_POSITION);
    if position == MIN_POSITION && velocity < 0.0 {
        velocity = 0.0;
    }
    *state = [position, velocity];
}

fn bounds() -> Vec<(f64, f64)> {
    vec![(MIN_POSITION, MAX_POSITION), (-MAX_SPEED, MAX_SPEED)]
}

/// Discrete mountain car: push left, no push, push right.
#[derive(Debug, Default, Clone)]
pub struct MountainCar {
    state: [f64; 2],
}

impl MountainCar {
    pub const GOAL_POSITION: f64 = 0.5;

    pub fn spec() -> EnvSpec {
        EnvSpec {
            name: EnvName::MountainCar,
            state_dim: 2,
            action_kind: ActionKind::Discrete(3),
            state_bounds: bounds(),
            solve_threshold: 90.0,
            max_steps: 200,
        }
    }
}

impl Dynamics for MountainCar {
    fn reset(&mut self, rng: &mut Rng) -> Vec<f64> {
        self.state = reset_state(rng);
        self.state.to_vec()
    }

    fn step(&mut self, action: &Action) -> (Vec<f64>, f64, bool) {
        let a = action.discrete().unwrap_or(1) as f64;
        integrate(&mut self.state, (a - 1.0) * 0.001);
        let terminated = self.state[0] >= Self::GOAL_POSITION && self.state[1] >= 0.0;
        (self.state.to_vec(), -1.0, terminated)
    }
}

/// Continuous mountain car with a bounded engine force in [-1, 1].
#[derive(Debug, Default, Clone)]
pub struct MountainCarContinuous {
    state: [f64; 2],
}

impl MountainCarContinuous {
    pub const GOAL_POSITION: f64 = 0.45;
    const POWER: f64 = 0.0015;

    pub fn spec() -> EnvSpec {
        EnvSpec {
            name: EnvName::MountainCarContinuous,
            state_dim: 2,
            action_kind: ActionKind::Continuous {
                low: vec![-1.0],
                high: vec![1.0],
            },
            state_bounds: bounds(),
            solve_threshold: -110.0,
            max_steps: 999,
        }
    }
}

impl Dynamics for MountainCarContinuous {
    fn reset(&mut self, rng: &mut Rng) -> Vec<f64> {
        self.state = reset_state(rng);
        self.state.to_vec()
    }

    fn step(&mut self, action: &Action) -> (Vec<f64>, f64, bool) {
        let force = match action {
            Action::Continuous(v) => v[0],
            Action::Discrete(_) => 0.0,
        };
        integrate(&mut self.state, force * Self::POWER);
        let terminated = self.state[0] >= Self::GOAL_POSITION && self.state[1] >= 0.0;
        let reward = if terminated { 100.0 } else { 0.0 } - 0.1 * force * force;
        (self.state.to_vec(), reward, terminated)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Env;

    #[test]
    fn reset_position_range_by_sampling() {
        let mut env = Env::new(EnvName::MountainCar, 0);
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for seed in 0..5000 {
            let s = env.reset(seed);
            assert!((-0.6..=-0.4).contains(&s[0]));
            assert_eq!(s[1], 0.0);
            lo = lo.min(s[0]);
            hi = hi.max(s[0]);
        }
        // the sampler covers the whole range
        assert!(lo < -0.59 && hi > -0.41);
    }

    /// Straight transcription of gymnasium's `MountainCarEnv.step`.
    fn reference_step(pos: f64, vel: f64, action: usize) -> (f64, f64, bool) {
        let mut velocity = vel + ((action as f64 - 1.0) * 0.001 + (3.0 * pos).cos() * (-0.0025));
        velocity = velocity.clamp(-0.07, 0.07);
        let mut position = (pos + velocity).clamp(-1.2, 0.6);
        if position == -1.2 && velocity < 0.0 {
            velocity = 0.0;
        }
        position = position.clamp(-1.2, 0.6);
        (position, velocity, position >= 0.5 && velocity >= 0.0)
    }

    #[test]
    fn energy_pumping_reaches_goal_like_reference() {
        let mut env = Env::new(EnvName::MountainCar, 0);
        let s = env.reset(0);
        let (mut p, mut v) = (s[0], s[1]);
        loop {
            let a = if v >= 0.0 { 2 } else { 0 };
            let res = env.step(&Action::Discrete(a)).unwrap();
            let (rp, rv, term) = reference_step(p, v, a);
            assert_eq!(res.state, vec![rp, rv]);
            assert_eq!(res.terminated, term);
            p = rp;
            v = rv;
            if res.terminated {
                assert!(p >= 0.5);
                break;
            }
            assert!(!res.truncated, "pumping should reach the goal");
        }
    }

    #[test]
    fn continuous_action_is_clipped() {
        let mut a = Env::new(EnvName::MountainCarContinuous, 0);
        let mut b = Env::new(EnvName::MountainCarContinuous, 0);
        a.reset(1);
        b.reset(1);
        let ra = a.step(&Action::Continuous(vec![5.0])).unwrap();
        let rb = b.step(&Action::Continuous(vec![1.0])).unwrap();
        assert_eq!(ra, rb);
        assert!((ra.reward + 0.1).abs() < 1e-12);
    }
}
