//! Weighted supervised fitting of the four policy classes.

mod cart;
mod linear;
mod mlp;

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::policy::{Policy, PolicyClass, Task};

pub use cart::{
    fit_cart, fit_oblique, grow_regression_forest_tree, ForestTree, DEFAULT_DIRECTIONS,
};
pub use linear::fit_linear;
pub use mlp::{fit_mlp, fit_mlp_with, loss_and_gradient, MlpOptions};

/// Expert labels paired with the states of a [`LabeledSet`].
#[derive(Debug, Clone, PartialEq)]
pub enum Labels {
    Discrete {
        actions: Vec<usize>,
        n_actions: usize,
    },
    Continuous(Vec<Vec<f64>>),
}

impl Labels {
    pub fn len(&self) -> usize {
        match self {
            Labels::Discrete { actions, .. } => actions.len(),
            Labels::Continuous(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn task(&self) -> Task {
        match self {
            Labels::Discrete { .. } => Task::Classify,
            Labels::Continuous(_) => Task::Regress,
        }
    }

    /// Number of classes, or regression output dimension.
    pub fn n_outputs(&self) -> usize {
        match self {
            Labels::Discrete { n_actions, .. } => *n_actions,
            Labels::Continuous(v) => v.first().map_or(0, Vec::len),
        }
    }
}

/// States, expert labels and nonnegative per-sample weights.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet {
    pub states: Vec<Vec<f64>>,
    pub labels: Labels,
    pub weights: Vec<f64>,
}

impl LabeledSet {
    pub fn new(states: Vec<Vec<f64>>, labels: Labels, weights: Vec<f64>) -> Result<Self> {
        let set = LabeledSet {
            states,
            labels,
            weights,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn unweighted(states: Vec<Vec<f64>>, labels: Labels) -> Result<Self> {
        let n = states.len();
        Self::new(states, labels, vec![1.0; n])
    }

    /// Empty set, to be filled with [`LabeledSet::extend`].
    pub fn empty(labels_like: &Labels) -> LabeledSet {
        let labels = match labels_like {
            Labels::Discrete { n_actions, .. } => Labels::Discrete {
                actions: Vec::new(),
                n_actions: *n_actions,
            },
            Labels::Continuous(_) => Labels::Continuous(Vec::new()),
        };
        LabeledSet {
            states: Vec::new(),
            labels,
            weights: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.states.len();
        if n == 0 {
            return Err(Error::Config("empty dataset".into()));
        }
        if self.labels.len() != n || self.weights.len() != n {
            return Err(Error::Config(format!(
                "dataset has {n} states, {} labels and {} weights",
                self.labels.len(),
                self.weights.len()
            )));
        }
        let d = self.states[0].len();
        if d == 0 || self.states.iter().any(|s| s.len() != d) {
            return Err(Error::Config("states have inconsistent dimensions".into()));
        }
        if self.weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite())
            || !self.weights.iter().any(|w| *w > 0.0)
        {
            return Err(Error::Config(
                "weights must be finite, nonnegative and not all zero".into(),
            ));
        }
        match &self.labels {
            Labels::Discrete { actions, n_actions } => {
                if *n_actions < 2 || actions.iter().any(|a| a >= n_actions) {
                    return Err(Error::Config("discrete labels out of range".into()));
                }
            }
            Labels::Continuous(v) => {
                let k = v[0].len();
                if k == 0 || v.iter().any(|t| t.len() != k) {
                    return Err(Error::Config(
                        "regression targets have inconsistent dimensions".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.states.first().map_or(0, Vec::len)
    }

    pub fn push(&mut self, state: Vec<f64>, label: crate::env::Action, weight: f64) -> Result<()> {
        match (&mut self.labels, label) {
            (Labels::Discrete { actions, .. }, crate::env::Action::Discrete(a)) => actions.push(a),
            (Labels::Continuous(v), crate::env::Action::Continuous(t)) => v.push(t),
            _ => return Err(Error::Config("label kind does not match dataset".into())),
        }
        self.states.push(state);
        self.weights.push(weight);
        Ok(())
    }

    pub fn extend(&mut self, other: LabeledSet) -> Result<()> {
        match (&mut self.labels, other.labels) {
            (Labels::Discrete { actions, .. }, Labels::Discrete { actions: more, .. }) => {
                actions.extend(more)
            }
            (Labels::Continuous(v), Labels::Continuous(more)) => v.extend(more),
            _ => return Err(Error::Config("label kind does not match dataset".into())),
        }
        self.states.extend(other.states);
        self.weights.extend(other.weights);
        Ok(())
    }

    /// Weighted per-feature mean and scale; constant features get scale 1.
    pub(crate) fn standardization(&self) -> (Vec<f64>, Vec<f64>) {
        let d = self.state_dim();
        let total: f64 = self.weights.iter().sum();
        let mut mean = vec![0.0; d];
        for (s, w) in self.states.iter().zip(&self.weights) {
            for j in 0..d {
                mean[j] += w * s[j];
            }
        }
        mean.iter_mut().for_each(|m| *m /= total);
        let mut var = vec![0.0; d];
        for (s, w) in self.states.iter().zip(&self.weights) {
            for j in 0..d {
                var[j] += w * (s[j] - mean[j]).powi(2);
            }
        }
        let scale = var
            .iter()
            .map(|v| {
                let sd = (v / total).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        (mean, scale)
    }
}

/// Hidden width grid for MLP students (two hidden layers of this width).
pub const MLP_WIDTHS: [usize; 4] = [2, 4, 8, 16];
/// Internal-node budgets for (oblique) trees; leaves are capped at twice this.
pub const TREE_BUDGETS: [usize; 5] = [4, 8, 16, 64, 128];

/// A policy class with its size parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ClassSize {
    Linear,
    AxisTree { max_nodes: usize },
    ObliqueTree { max_nodes: usize },
    ReluMlp { width: usize },
}

impl ClassSize {
    /// The 15 baseline classes.
    pub fn grid() -> Vec<ClassSize> {
        let mut out = vec![ClassSize::Linear];
        out.extend(
            TREE_BUDGETS
                .iter()
                .map(|&n| ClassSize::AxisTree { max_nodes: n }),
        );
        out.extend(
            TREE_BUDGETS
                .iter()
                .map(|&n| ClassSize::ObliqueTree { max_nodes: n }),
        );
        out.extend(MLP_WIDTHS.iter().map(|&w| ClassSize::ReluMlp { width: w }));
        out
    }

    pub fn class(self) -> PolicyClass {
        match self {
            ClassSize::Linear => PolicyClass::Linear,
            ClassSize::AxisTree { .. } => PolicyClass::AxisTree,
            ClassSize::ObliqueTree { .. } => PolicyClass::ObliqueTree,
            ClassSize::ReluMlp { .. } => PolicyClass::ReluMlp,
        }
    }

    /// Size parameter: node budget, hidden width, or 0 for linear.
    pub fn size(self) -> usize {
        match self {
            ClassSize::Linear => 0,
            ClassSize::AxisTree { max_nodes } | ClassSize::ObliqueTree { max_nodes } => max_nodes,
            ClassSize::ReluMlp { width } => width,
        }
    }

    pub fn validate(self) -> Result<()> {
        let ok = match self {
            ClassSize::Linear => true,
            ClassSize::AxisTree { max_nodes } | ClassSize::ObliqueTree { max_nodes } => {
                TREE_BUDGETS.contains(&max_nodes)
            }
            ClassSize::ReluMlp { width } => MLP_WIDTHS.contains(&width),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("{self} is not in the class grid")))
        }
    }
}

impl fmt::Display for ClassSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClassSize::Linear => f.write_str("linear"),
            ClassSize::AxisTree { max_nodes } => write!(f, "tree-{max_nodes}"),
            ClassSize::ObliqueTree { max_nodes } => write!(f, "oblique-{max_nodes}"),
            ClassSize::ReluMlp { width } => write!(f, "mlp-{width}x{width}"),
        }
    }
}

impl FromStr for ClassSize {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("unknown policy class `{s}`"));
        let parsed = if s == "linear" {
            ClassSize::Linear
        } else if let Some(n) = s.strip_prefix("tree-") {
            ClassSize::AxisTree {
                max_nodes: n.parse().map_err(|_| bad())?,
            }
        } else if let Some(n) = s.strip_prefix("oblique-") {
            ClassSize::ObliqueTree {
                max_nodes: n.parse().map_err(|_| bad())?,
            }
        } else if let Some(n) = s.strip_prefix("mlp-") {
            let (a, b) = n.split_once('x').ok_or_else(bad)?;
            if a != b {
                return Err(bad());
            }
            ClassSize::ReluMlp {
                width: a.parse().map_err(|_| bad())?,
            }
        } else {
            return Err(bad());
        };
        parsed.validate()?;
        Ok(parsed)
    }
}

/// Class, size and fitting seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ClassSpec {
    pub size: ClassSize,
    pub seed: u64,
}

/// Fits the class described by `spec` on `data`.
pub fn fit(data: &LabeledSet, spec: &ClassSpec) -> Result<Policy> {
    data.validate()?;
    spec.size.validate()?;
    Ok(match spec.size {
        ClassSize::Linear => fit_linear(data)?.into(),
        ClassSize::AxisTree { max_nodes } => fit_cart(data, max_nodes)?.into(),
        ClassSize::ObliqueTree { max_nodes } => {
            fit_oblique(data, max_nodes, DEFAULT_DIRECTIONS, spec.seed)?.into()
        }
        ClassSize::ReluMlp { width } => fit_mlp(data, (width, width), 500, spec.seed)?.into(),
    })
}
