//! Algorithm 1: fit a student on states visited by the expert (round 1) or
//! by the latest student (later rounds), always labeled by the expert and
//! optionally weighted by the expert's Q-value spread.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::RngCore;

use crate::env::{rollout, Env, EnvName, EnvSpec};
use crate::error::{Error, Result};
use crate::expert::ExpertCheckpoint;
use crate::fit::{fit, ClassSize, ClassSpec, LabeledSet, Labels};
use crate::metrics::{normalized_return, random_return};
use crate::policy::Policy;
use crate::rng::{derive_seed, stream};

/// Fitting rounds for DAgger and Q-DAgger.
pub const DAGGER_ITERATIONS: usize = 10;
/// Desk-scale sample budget.
pub const DESK_BUDGET: usize = 20_000;
/// Budgets of the full-scale sweep.
pub const FULL_BUDGETS: [usize; 2] = [50_000, 100_000];
pub const EVAL_EPISODES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    Bc,
    Dagger,
    QDagger,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Bc, Variant::Dagger, Variant::QDagger];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Bc => "bc",
            Variant::Dagger => "dagger",
            Variant::QDagger => "qdagger",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown imitation variant `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImitationConfig {
    pub n_iterations: usize,
    pub total_samples: usize,
    pub importance_sampling: bool,
    pub class: ClassSize,
    pub eval_episodes: usize,
    pub seed: u64,
    /// Checked between rounds; the run is abandoned once it has passed.
    pub deadline: Option<Instant>,
}

impl ImitationConfig {
    pub fn for_variant(
        variant: Variant,
        total_samples: usize,
        class: ClassSize,
        seed: u64,
    ) -> ImitationConfig {
        let (n_iterations, importance_sampling) = match variant {
            Variant::Bc => (1, false),
            Variant::Dagger => (DAGGER_ITERATIONS, false),
            Variant::QDagger => (DAGGER_ITERATIONS, true),
        };
        ImitationConfig {
            n_iterations,
            total_samples,
            importance_sampling,
            class,
            eval_episodes: EVAL_EPISODES,
            seed,
            deadline: None,
        }
    }

    pub fn variant(&self) -> Variant {
        match (self.n_iterations, self.importance_sampling) {
            (_, true) => Variant::QDagger,
            (1, false) => Variant::Bc,
            _ => Variant::Dagger,
        }
    }

    pub fn per_round(&self) -> usize {
        self.total_samples / self.n_iterations.max(1)
    }

    pub fn validate(&self, expert: &ExpertCheckpoint) -> Result<()> {
        if self.n_iterations == 0 {
            return Err(Error::Config(
                "at least one fitting round is required".into(),
            ));
        }
        if self.per_round() == 0 {
            return Err(Error::Config(format!(
                "{} samples over {} rounds leaves none per round",
                self.total_samples, self.n_iterations
            )));
        }
        if self.eval_episodes == 0 {
            return Err(Error::Config("eval_episodes must be positive".into()));
        }
        if self.importance_sampling && !expert.expert.has_q() {
            return Err(Error::Unsupported(format!(
                "Q-DAgger needs a Q expert; the {} expert has none",
                expert.env
            )));
        }
        self.class.validate()
    }
}

/// Random and expert returns that anchor normalization on one environment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reference {
    pub random_return: f64,
    pub expert_return: f64,
}

impl Reference {
    pub fn of(expert: &ExpertCheckpoint) -> Result<Reference> {
        Ok(Reference {
            random_return: random_return(expert.env)?,
            expert_return: expert.eval_return,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub env: EnvName,
    pub variant: Variant,
    pub class: ClassSize,
    pub budget: usize,
    pub repetition: usize,
    pub seed: u64,
    pub returns: Vec<f64>,
    pub lengths: Vec<usize>,
    pub mean_return: f64,
    pub normalized_return: f64,
    pub param_count: usize,
    pub dataset_size: usize,
    /// Where the fitted student was saved, if anywhere.
    pub policy_file: Option<String>,
}

/// Result of one run of Algorithm 1.
#[derive(Debug, Clone)]
pub struct Imitation {
    pub policy: Policy,
    pub record: RunRecord,
    /// The aggregated dataset D.
    pub dataset: LabeledSet,
    /// |D| after each round.
    pub sizes: Vec<usize>,
}

fn empty_labels(spec: &EnvSpec) -> Labels {
    match spec.action_kind {
        crate::env::ActionKind::Discrete(n) => Labels::Discrete {
            actions: Vec::new(),
            n_actions: n,
        },
        crate::env::ActionKind::Continuous { .. } => Labels::Continuous(Vec::new()),
    }
}

fn check_deadline(config: &ImitationConfig, round: usize) -> Result<()> {
    match config.deadline {
        Some(d) if Instant::now() > d => Err(Error::Timeout(format!(
            "imitation stopped after {round} rounds"
        ))),
        _ => Ok(()),
    }
}

/// Runs Algorithm 1 with `config` and evaluates the final student.
pub fn imitate(
    expert: &ExpertCheckpoint,
    config: &ImitationConfig,
    reference: &Reference,
) -> Result<Imitation> {
    config.validate(expert)?;
    let spec = EnvSpec::of(expert.env);
    let quota = config.per_round();
    let mut env = Env::new(expert.env, config.seed);
    let mut episodes = stream(config.seed, "imitation-collect");
    let mut data = LabeledSet::empty(&empty_labels(&spec));
    let mut sizes = Vec::with_capacity(config.n_iterations);
    let mut student: Option<Policy> = None;

    for round in 0..config.n_iterations {
        check_deadline(config, round)?;
        let mut state = env.reset(episodes.next_u64());
        for _ in 0..quota {
            let label = expert.expert.act(&state)?;
            let weight = if config.importance_sampling {
                expert.expert.importance_weight(&state)?
            } else {
                1.0
            };
            let behavior = match &student {
                None => label.clone(),
                Some(p) => p.predict(&state)?,
            };
            data.push(state.clone(), label, weight)?;
            let res = env.step(&behavior)?;
            state = if res.terminated || res.truncated {
                env.reset(episodes.next_u64())
            } else {
                res.state
            };
        }
        sizes.push(data.len());
        let spec = ClassSpec {
            size: config.class,
            seed: derive_seed(config.seed, &format!("fit-{round}")),
        };
        student = Some(fit(&data, &spec)?);
    }

    check_deadline(config, config.n_iterations)?;
    let policy = student.expect("at least one round");
    let eval_seed = derive_seed(config.seed, "imitation-eval");
    let mut eval_env = Env::new(expert.env, eval_seed);
    let stats = rollout(
        &mut eval_env,
        |s| policy.predict(s),
        config.eval_episodes,
        eval_seed,
    )?;
    let mean_return = stats.mean_return();
    let record = RunRecord {
        env: expert.env,
        variant: config.variant(),
        class: config.class,
        budget: config.total_samples,
        repetition: 0,
        seed: config.seed,
        mean_return,
        normalized_return: normalized_return(
            mean_return,
            reference.random_return,
            reference.expert_return,
        )?,
        param_count: policy.param_count(),
        dataset_size: data.len(),
        returns: stats.returns,
        lengths: stats.lengths,
        policy_file: None,
    };
    Ok(Imitation {
        policy,
        record,
        dataset: data,
        sizes,
    })
}

/// One sweep cell: (env, variant, budget, class, repetition).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cell {
    pub env: EnvName,
    pub variant: Variant,
    pub budget: usize,
    pub class: ClassSize,
    pub repetition: usize,
}

impl Cell {
    /// Stable identifier, also used to resume sweeps.
    pub fn key(&self) -> String {
        format!(
            "{}/{}/{}/{}/{}",
            self.env, self.variant, self.budget, self.class, self.repetition
        )
    }

    pub fn seed(&self, master_seed: u64) -> u64 {
        derive_seed(master_seed, &self.key())
    }

    pub fn config(&self, master_seed: u64, eval_episodes: usize) -> ImitationConfig {
        ImitationConfig {
            eval_episodes,
            ..ImitationConfig::for_variant(
                self.variant,
                self.budget,
                self.class,
                self.seed(master_seed),
            )
        }
    }
}

/// Cartesian product in a fixed order.
pub fn cells(
    envs: &[EnvName],
    variants: &[Variant],
    budgets: &[usize],
    classes: &[ClassSize],
    repetitions: usize,
) -> Vec<Cell> {
    let mut out = Vec::new();
    for &env in envs {
        for &variant in variants {
            for &budget in budgets {
                for &class in classes {
                    for repetition in 0..repetitions {
                        out.push(Cell {
                            env,
                            variant,
                            budget,
                            class,
                            repetition,
                        });
                    }
                }
            }
        }
    }
    out
}

/// Settings shared by every cell of a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepOptions {
    pub master_seed: u64,
    pub eval_episodes: usize,
    pub cell_timeout: Option<Duration>,
}

impl SweepOptions {
    pub fn new(master_seed: u64) -> SweepOptions {
        SweepOptions {
            master_seed,
            eval_episodes: EVAL_EPISODES,
            cell_timeout: None,
        }
    }
}

/// Runs one cell end to end.
pub fn run_cell(
    cell: &Cell,
    expert: &ExpertCheckpoint,
    reference: &Reference,
    opts: &SweepOptions,
) -> Result<Imitation> {
    if expert.env != cell.env {
        return Err(Error::Config(format!(
            "cell {} got the {} expert",
            cell.key(),
            expert.env
        )));
    }
    let config = ImitationConfig {
        deadline: opts.cell_timeout.map(|t| Instant::now() + t),
        ..cell.config(opts.master_seed, opts.eval_episodes)
    };
    let mut run = imitate(expert, &config, reference)?;
    run.record.repetition = cell.repetition;
    Ok(run)
}

#[derive(Debug, Clone)]
pub enum CellOutcome {
    Done(Box<Imitation>),
    Failed { cell: Cell, error: String },
}

/// Runs every cell; failures are recorded and the sweep continues.
pub fn sweep(
    experts: &[ExpertCheckpoint],
    cells: &[Cell],
    opts: &SweepOptions,
) -> Result<Vec<CellOutcome>> {
    let mut refs = Vec::with_capacity(experts.len());
    for e in experts {
        refs.push((e, Reference::of(e)?));
    }
    Ok(cells
        .iter()
        .map(|cell| {
            let Some((expert, reference)) = refs.iter().find(|(e, _)| e.env == cell.env) else {
                return CellOutcome::Failed {
                    cell: *cell,
                    error: format!("no expert for {}", cell.env),
                };
            };
            match run_cell(cell, expert, reference, opts) {
                Ok(run) => CellOutcome::Done(Box::new(run)),
                Err(e) => {
                    log::warn!("cell {} failed: {e}", cell.key());
                    CellOutcome::Failed {
                        cell: *cell,
                        error: e.to_string(),
                    }
                }
            }
        })
        .collect())
}

#[cfg(test)]
mod tests;
