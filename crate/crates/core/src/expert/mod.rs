//! Expert policies that imitation learns from: Q-networks trained by double
//! DQN on discrete environments and directly searched actors on continuous
//! ones. Checkpoints reuse the policy text format with a metadata header.

mod cem;
mod dqn;

use std::path::Path;

use crate::env::{rollout, Action, ActionKind, Env, EnvName, EnvSpec, EpisodeStats};
use crate::error::{Error, Result};
use crate::policy::{self as io, Policy, ReluMlp, Task};
use crate::rng::derive_seed;

pub use cem::{train_continuous_expert, CemConfig};
pub use dqn::{train_q_expert, DqnConfig};

/// Episodes used to certify a freshly trained expert.
pub const CERTIFY_EPISODES: usize = 20;
/// Episodes behind the return stored in a checkpoint.
pub const REFERENCE_EPISODES: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct QExpert {
    /// Maps a state to one Q-value per action; the greedy action is its argmax.
    pub q_net: ReluMlp,
}

impl QExpert {
    pub fn new(q_net: ReluMlp) -> QExpert {
        QExpert { q_net }
    }

    pub fn q_values(&self, state: &[f64]) -> Result<Vec<f64>> {
        self.q_net.forward(state)
    }

    /// `V(s) - min_a Q(s, a)` with `V(s) = max_a Q(s, a)`.
    pub fn importance_weight(&self, state: &[f64]) -> Result<f64> {
        let q = self.q_values(state)?;
        let max = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = q.iter().copied().fold(f64::INFINITY, f64::min);
        Ok(max - min)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousExpert {
    /// A regression `Linear` or `ReluMlp` policy returning the raw action.
    pub actor: Policy,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expert {
    Q(QExpert),
    Continuous(ContinuousExpert),
}

impl Expert {
    /// The expert as an ordinary policy: greedy over Q or the actor itself.
    pub fn policy(&self) -> Policy {
        match self {
            Expert::Q(q) => Policy::ReluMlp(q.q_net.clone()),
            Expert::Continuous(c) => c.actor.clone(),
        }
    }

    pub fn act(&self, state: &[f64]) -> Result<Action> {
        match self {
            Expert::Q(q) => q
                .q_net
                .forward(state)
                .map(|v| Action::Discrete(crate::policy::argmax(&v))),
            Expert::Continuous(c) => c.actor.predict(state),
        }
    }

    pub fn importance_weight(&self, state: &[f64]) -> Result<f64> {
        match self {
            Expert::Q(q) => q.importance_weight(state),
            Expert::Continuous(_) => Err(Error::Unsupported(
                "importance weights need Q-values; continuous experts have none".into(),
            )),
        }
    }

    pub fn has_q(&self) -> bool {
        matches!(self, Expert::Q(_))
    }

    fn check_env(&self, spec: &EnvSpec) -> Result<()> {
        let p = self.policy();
        let (ok_kind, arity) = match (&spec.action_kind, self) {
            (ActionKind::Discrete(n), Expert::Q(_)) => (p.task() == Task::Classify, *n),
            (ActionKind::Continuous { low, .. }, Expert::Continuous(_)) => {
                (p.task() == Task::Regress, low.len())
            }
            _ => (false, 0),
        };
        if !ok_kind || p.state_dim() != spec.state_dim || p.n_outputs() != arity {
            return Err(Error::format(format!("expert does not fit {}", spec.name)));
        }
        Ok(())
    }
}

/// A trained expert with the environment it solves and its reference return.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpertCheckpoint {
    pub env: EnvName,
    pub expert: Expert,
    /// Mean return over [`REFERENCE_EPISODES`] episodes.
    pub eval_return: f64,
    /// Mean episode length over the same episodes.
    pub eval_length: f64,
    /// Seed the reference episodes derive from.
    pub seed: u64,
}

impl ExpertCheckpoint {
    /// Measures the reference return and length with a fixed evaluation stream.
    pub fn new(env: EnvName, expert: Expert, seed: u64) -> Result<ExpertCheckpoint> {
        expert.check_env(&EnvSpec::of(env))?;
        let stats = evaluate(&expert, env, REFERENCE_EPISODES, reference_seed(seed))?;
        Ok(ExpertCheckpoint {
            env,
            expert,
            eval_return: stats.mean_return(),
            eval_length: stats.mean_length(),
            seed,
        })
    }

    pub fn render(&self) -> String {
        let kind = if self.expert.has_q() { "q" } else { "actor" };
        let meta = vec![
            ("kind".to_string(), kind.to_string()),
            ("env".to_string(), self.env.to_string()),
            ("eval_return".to_string(), format!("{:?}", self.eval_return)),
            ("eval_length".to_string(), format!("{:?}", self.eval_length)),
            ("seed".to_string(), self.seed.to_string()),
        ];
        io::render_with_meta(&self.expert.policy(), &meta)
    }

    pub fn parse(text: &str) -> Result<ExpertCheckpoint> {
        let (policy, meta) = io::parse_with_meta(text)?;
        let get = |key: &str| {
            meta.iter()
                .find(|(k, _)| k == key)
                .map(|(_, v)| v.as_str())
                .ok_or_else(|| Error::format(format!("expert checkpoint lacks `meta {key}`")))
        };
        let num = |key: &str| -> Result<f64> {
            get(key)?
                .parse()
                .map_err(|_| Error::format(format!("bad number in `meta {key}`")))
        };
        let env: EnvName = get("env")?.parse()?;
        let expert = match (get("kind")?, policy) {
            ("q", Policy::ReluMlp(q_net)) => Expert::Q(QExpert { q_net }),
            ("actor", actor @ (Policy::Linear(_) | Policy::ReluMlp(_))) => {
                Expert::Continuous(ContinuousExpert { actor })
            }
            (kind, _) => {
                return Err(Error::format(format!(
                    "unsupported expert kind `{kind}` for this policy class"
                )))
            }
        };
        expert.check_env(&EnvSpec::of(env))?;
        let seed = get("seed")?
            .parse()
            .map_err(|_| Error::format("bad `meta seed`"))?;
        Ok(ExpertCheckpoint {
            env,
            expert,
            eval_return: num("eval_return")?,
            eval_length: num("eval_length")?,
            seed,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.render())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<ExpertCheckpoint> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        ExpertCheckpoint::parse(&text).map_err(|e| match e {
            Error::Format { path: None, msg } => Error::Format {
                path: Some(path.to_path_buf()),
                msg,
            },
            other => other,
        })
    }
}

/// Seed of the reference evaluation stored in a checkpoint.
pub fn reference_seed(seed: u64) -> u64 {
    derive_seed(seed, "expert-reference")
}

/// Conventional checkpoint file name inside an experts directory.
pub fn checkpoint_path(dir: impl AsRef<Path>, env: EnvName) -> std::path::PathBuf {
    dir.as_ref().join(format!("{env}.policy"))
}

/// Greedy evaluation of an expert.
pub fn evaluate(expert: &Expert, env: EnvName, episodes: usize, seed: u64) -> Result<EpisodeStats> {
    let mut e = Env::new(env, seed);
    rollout(&mut e, |s| expert.act(s), episodes, seed)
}

/// Trains with the default recipe for `env`, then certifies the result over
/// [`CERTIFY_EPISODES`] fresh episodes against [`EnvSpec::expert_target`].
pub fn train_expert(env: EnvName, seed: u64) -> Result<ExpertCheckpoint> {
    let spec = EnvSpec::of(env);
    let expert = if spec.action_kind.is_discrete() {
        Expert::Q(train_q_expert(env, &DqnConfig::for_env(env), seed)?)
    } else {
        Expert::Continuous(train_continuous_expert(
            env,
            &CemConfig::for_env(env),
            seed,
        )?)
    };
    certify(&expert, env, seed)?;
    ExpertCheckpoint::new(env, expert, seed)
}

/// [`train_expert`] over seeds `seed, seed + 1, ...` until one certifies.
pub fn train_expert_retrying(env: EnvName, seed: u64, attempts: usize) -> Result<ExpertCheckpoint> {
    let mut last = Error::ExpertTraining(format!("{env}: no training attempts allowed"));
    for i in 0..attempts as u64 {
        match train_expert(env, seed.wrapping_add(i)) {
            Ok(ck) => return Ok(ck),
            Err(e @ Error::ExpertTraining(_)) => {
                log::warn!("{e}; retrying with seed {}", seed.wrapping_add(i + 1));
                last = e;
            }
            Err(e) => return Err(e),
        }
    }
    Err(last)
}

pub fn certify(expert: &Expert, env: EnvName, seed: u64) -> Result<f64> {
    let target = EnvSpec::of(env).expert_target();
    let got = evaluate(
        expert,
        env,
        CERTIFY_EPISODES,
        derive_seed(seed, "expert-certify"),
    )?
    .mean_return();
    if got < target {
        return Err(Error::ExpertTraining(format!(
            "{env}: mean return {got:.1} over {CERTIFY_EPISODES} episodes, need {target}"
        )));
    }
    Ok(got)
}

/// Box scaling used by both trainers: inputs are mapped to roughly [-1, 1]
/// from the environment's observation bounds during training, and the map is
/// folded into the first layer on export.
pub(crate) fn input_scaling(spec: &EnvSpec) -> (Vec<f64>, Vec<f64>) {
    spec.state_bounds
        .iter()
        .map(|(lo, hi)| ((lo + hi) / 2.0, (hi - lo) / 2.0))
        .unzip()
}
