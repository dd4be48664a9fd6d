//! Classic-control MDPs with gymnasium dynamics, seeded resets and episode caps.

mod acrobot;
mod cartpole;
mod mountain_car;
mod pendulum;

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::{self, Rng};

pub use acrobot::Acrobot;
pub use cartpole::CartPole;
pub use mountain_car::{MountainCar, MountainCarContinuous};
pub use pendulum::Pendulum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EnvName {
    CartPole,
    MountainCar,
    MountainCarContinuous,
    Acrobot,
    Pendulum,
}

impl EnvName {
    pub const ALL: [EnvName; 5] = [
        EnvName::CartPole,
        EnvName::MountainCar,
        EnvName::MountainCarContinuous,
        EnvName::Acrobot,
        EnvName::Pendulum,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EnvName::CartPole => "CartPole",
            EnvName::MountainCar => "MountainCar",
            EnvName::MountainCarContinuous => "MountainCarContinuous",
            EnvName::Acrobot => "Acrobot",
            EnvName::Pendulum => "Pendulum",
        }
    }
}

impl fmt::Display for EnvName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EnvName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EnvName::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| Error::UnknownEnv(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ActionKind {
    Discrete(usize),
    Continuous { low: Vec<f64>, high: Vec<f64> },
}

impl ActionKind {
    pub fn is_discrete(&self) -> bool {
        matches!(self, ActionKind::Discrete(_))
    }

    /// Number of discrete actions, or the dimension of a continuous action.
    pub fn arity(&self) -> usize {
        match self {
            ActionKind::Discrete(n) => *n,
            ActionKind::Continuous { low, .. } => low.len(),
        }
    }
}

/// An action handed to [`Env::step`].
#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    Discrete(usize),
    Continuous(Vec<f64>),
}

impl Action {
    pub fn discrete(&self) -> Option<usize> {
        match self {
            Action::Discrete(a) => Some(*a),
            Action::Continuous(_) => None,
        }
    }
}

/// Static description of a task.
///
/// `state_bounds` is finite on every dimension. Dimensions the observation
/// space leaves unbounded (CartPole velocities) use ranges of twice the
/// largest magnitude seen over 10k random-policy steps.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvSpec {
    pub name: EnvName,
    pub state_dim: usize,
    pub action_kind: ActionKind,
    pub state_bounds: Vec<(f64, f64)>,
    /// Solve threshold as listed in the environment table the toolkit
    /// reproduces. For the two MountainCar tasks these are swapped relative
    /// to gymnasium; see [`EnvSpec::expert_target`].
    pub solve_threshold: f64,
    pub max_steps: usize,
}

impl EnvSpec {
    pub fn of(name: EnvName) -> EnvSpec {
        match name {
            EnvName::CartPole => CartPole::spec(),
            EnvName::MountainCar => MountainCar::spec(),
            EnvName::MountainCarContinuous => MountainCarContinuous::spec(),
            EnvName::Acrobot => Acrobot::spec(),
            EnvName::Pendulum => Pendulum::spec(),
        }
    }

    /// Return an expert must average to count as solving the task. Equal to
    /// `solve_threshold` except on MountainCar (-110) and
    /// MountainCarContinuous (90), where the table's values are only
    /// meaningful under gymnasium's convention.
    pub fn expert_target(&self) -> f64 {
        match self.name {
            EnvName::MountainCar => -110.0,
            EnvName::MountainCarContinuous => 90.0,
            _ => self.solve_threshold,
        }
    }

    pub fn contains(&self, state: &[f64]) -> bool {
        state.len() == self.state_dim
            && state
                .iter()
                .zip(&self.state_bounds)
                .all(|(x, (lo, hi))| *x >= *lo && *x <= *hi)
    }

    pub(crate) fn validate_action(&self, action: &Action) -> Result<Action> {
        match (&self.action_kind, action) {
            (ActionKind::Discrete(n), Action::Discrete(a)) => {
                if a < n {
                    Ok(action.clone())
                } else {
                    Err(Error::Action(format!(
                        "{} has {n} actions, got index {a}",
                        self.name
                    )))
                }
            }
            (ActionKind::Continuous { low, high }, Action::Continuous(v)) => {
                if v.len() != low.len() {
                    return Err(Error::Shape {
                        expected: low.len(),
                        got: v.len(),
                    });
                }
                let clipped = v
                    .iter()
                    .zip(low.iter().zip(high))
                    .map(|(x, (lo, hi))| if x.is_nan() { 0.0 } else { x.clamp(*lo, *hi) })
                    .collect();
                Ok(Action::Continuous(clipped))
            }
            _ => Err(Error::Action(format!(
                "action kind does not match {}",
                self.name
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub state: Vec<f64>,
    pub reward: f64,
    pub terminated: bool,
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EpisodeStats {
    pub returns: Vec<f64>,
    pub lengths: Vec<usize>,
}

impl EpisodeStats {
    pub fn mean_return(&self) -> f64 {
        self.returns.iter().sum::<f64>() / self.returns.len().max(1) as f64
    }

    pub fn mean_length(&self) -> f64 {
        self.lengths.iter().sum::<usize>() as f64 / self.lengths.len().max(1) as f64
    }
}

/// Task dynamics behind [`Env`]. `step` receives an already validated action.
pub(crate) trait Dynamics: Send {
    fn reset(&mut self, rng: &mut Rng) -> Vec<f64>;
    fn step(&mut self, action: &Action) -> (Vec<f64>, f64, bool);
}

/// One environment instance: dynamics, step counter and a private RNG stream.
pub struct Env {
    spec: EnvSpec,
    dynamics: Box<dyn Dynamics>,
    rng: Rng,
    steps: usize,
}

impl fmt::Debug for Env {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Env")
            .field("name", &self.spec.name)
            .field("steps", &self.steps)
            .finish()
    }
}

pub fn make_env(name: &str, seed: u64) -> Result<Env> {
    Ok(Env::new(name.parse()?, seed))
}

impl Env {
    pub fn new(name: EnvName, seed: u64) -> Env {
        let dynamics: Box<dyn Dynamics> = match name {
            EnvName::CartPole => Box::new(CartPole::default()),
            EnvName::MountainCar => Box::new(MountainCar::default()),
            EnvName::MountainCarContinuous => Box::new(MountainCarContinuous::default()),
            EnvName::Acrobot => Box::new(Acrobot::default()),
            EnvName::Pendulum => Box::new(Pendulum::default()),
        };
        Env {
            spec: EnvSpec::of(name),
            dynamics,
            rng: rng::stream(seed, name.as_str()),
            steps: 0,
        }
    }

    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Reseeds the instance stream and samples an initial state.
    pub fn reset(&mut self, seed: u64) -> Vec<f64> {
        self.rng = rng::stream(seed, self.spec.name.as_str());
        self.steps = 0;
        self.dynamics.reset(&mut self.rng)
    }

    pub fn step(&mut self, action: &Action) -> Result<StepResult> {
        let action = self.spec.validate_action(action)?;
        let (state, reward, terminated) = self.dynamics.step(&action);
        self.steps += 1;
        Ok(StepResult {
            state,
            reward,
            terminated,
            truncated: !terminated && self.steps >= self.spec.max_steps,
        })
    }

    /// Uniformly random valid action from the instance stream.
    pub fn sample_action(&mut self) -> Action {
        match &self.spec.action_kind {
            ActionKind::Discrete(n) => Action::Discrete(self.rng.random_range(0..*n)),
            ActionKind::Continuous { low, high } => Action::Continuous(
                low.iter()
                    .zip(high)
                    .map(|(lo, hi)| self.rng.random_range(*lo..=*hi))
                    .collect(),
            ),
        }
    }
}

/// Runs `episodes` episodes; episode `i` resets with seed `seed + i`.
pub fn rollout<F>(env: &mut Env, mut actor: F, episodes: usize, seed: u64) -> Result<EpisodeStats>
where
    F: FnMut(&[f64]) -> Result<Action>,
{
    if episodes == 0 {
        return Err(Error::Config("rollout needs at least one episode".into()));
    }
    let mut stats = EpisodeStats::default();
    for ep in 0..episodes {
        let mut state = env.reset(seed.wrapping_add(ep as u64));
        let mut total = 0.0;
        loop {
            let action = actor(&state)?;
            let res = env.step(&action)?;
            total += res.reward;
            state = res.state;
            if res.terminated || res.truncated {
                break;
            }
        }
        stats.returns.push(total);
        stats.lengths.push(env.steps());
    }
    Ok(stats)
}

/// Mean return of the uniform random policy; the lower anchor of normalized returns.
pub fn random_policy_stats(name: EnvName, episodes: usize, seed: u64) -> Result<EpisodeStats> {
    let mut env = Env::new(name, seed);
    let mut sampler = Env::new(name, rng::derive_seed(seed, "random-actor"));
    rollout(&mut env, |_| Ok(sampler.sample_action()), episodes, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn specs_match_table() {
        let cp = make_env("CartPole", 0).unwrap();
        assert_eq!(cp.spec().state_dim, 4);
        assert_eq!(cp.spec().action_kind, ActionKind::Discrete(2));
        assert_eq!(cp.spec().solve_threshold, 490.0);
        let mc = make_env("MountainCar", 0).unwrap();
        assert_eq!((mc.spec().state_dim, mc.spec().action_kind.arity()), (2, 3));
        assert_eq!(mc.spec().solve_threshold, 90.0);
        let pd = make_env("Pendulum", 0).unwrap();
        assert_eq!(pd.spec().state_dim, 3);
        assert!(!pd.spec().action_kind.is_discrete());
        assert_eq!(pd.spec().action_kind.arity(), 1);
        assert_eq!(pd.spec().solve_threshold, -400.0);
        let ac = EnvSpec::of(EnvName::Acrobot);
        assert_eq!(
            (ac.state_dim, ac.action_kind.arity(), ac.solve_threshold),
            (6, 3, -100.0)
        );
        let mcc = EnvSpec::of(EnvName::MountainCarContinuous);
        assert_eq!(
            (mcc.state_dim, mcc.action_kind.arity(), mcc.solve_threshold),
            (2, 1, -110.0)
        );
    }

    #[test]
    fn unknown_name_is_rejected() {
        assert!(matches!(
            make_env("LunarLander", 0),
            Err(Error::UnknownEnv(_))
        ));
    }

    #[test]
    fn bounds_are_well_formed() {
        for name in EnvName::ALL {
            let spec = EnvSpec::of(name);
            assert_eq!(spec.state_bounds.len(), spec.state_dim);
            assert!(spec
                .state_bounds
                .iter()
                .all(|(lo, hi)| lo < hi && lo.is_finite() && hi.is_finite()));
        }
    }

    #[test]
    fn reset_is_deterministic() {
        for name in EnvName::ALL {
            let mut env = Env::new(name, 3);
            let a = env.reset(0);
            let b = env.reset(0);
            assert_eq!(a, b);
            assert_ne!(a, env.reset(1));
            assert!(env.spec().contains(&a));
        }
        assert_eq!(Env::new(EnvName::Acrobot, 0).reset(5).len(), 6);
    }

    #[test]
    fn out_of_range_discrete_action() {
        let mut env = Env::new(EnvName::CartPole, 0);
        env.reset(0);
        assert!(matches!(
            env.step(&Action::Discrete(2)),
            Err(Error::Action(_))
        ));
        assert!(env.step(&Action::Continuous(vec![0.0])).is_err());
    }

    #[test]
    fn constant_actor_on_pendulum_truncates() {
        let mut env = Env::new(EnvName::Pendulum, 0);
        let stats = rollout(&mut env, |_| Ok(Action::Continuous(vec![0.5])), 3, 11).unwrap();
        assert_eq!(stats.returns.len(), 3);
        assert!(stats.lengths.iter().all(|&l| l == 200));
    }

    #[test]
    fn rollout_is_deterministic() {
        for name in EnvName::ALL {
            let a = random_policy_stats(name, 3, 9).unwrap();
            let b = random_policy_stats(name, 3, 9).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn random_cartpole_is_far_from_solved() {
        let stats = random_policy_stats(EnvName::CartPole, 100, 0).unwrap();
        // the random actor is its own oracle: it averages roughly 22 steps
        assert!(stats.mean_return() < 50.0, "{}", stats.mean_return());
        assert_eq!(stats.returns.len(), stats.lengths.len());
        assert!(stats.lengths.iter().all(|&l| l <= 500));
    }

    #[test]
    fn random_policy_states_stay_in_bounds() {
        for name in EnvName::ALL {
            let mut env = Env::new(name, 1);
            let mut state = env.reset(0);
            for i in 0..10_000u64 {
                assert!(env.spec().contains(&state), "{name}: {state:?}");
                let a = env.sample_action();
                let res = env.step(&a).unwrap();
                if res.truncated {
                    assert_eq!(env.steps(), env.spec().max_steps);
                }
                state = if res.terminated || res.truncated {
                    env.reset(i)
                } else {
                    res.state
                };
            }
        }
    }
}
