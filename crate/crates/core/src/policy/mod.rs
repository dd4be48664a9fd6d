//! The four baseline policy classes and their folded (native) inference.
//!
//! Every arithmetic routine here fixes its evaluation order: affine sums
//! accumulate left to right starting from the first product, with the bias
//! added last, and argmax keeps the first maximum. The unfolded programs in
//! [`crate::unfold`] replay exactly these operations, which is what makes
//! folded and unfolded inference bit-identical.

mod io;

use std::fmt;
use std::str::FromStr;

use crate::env::Action;
use crate::error::{Error, Result};

pub use io::{
    load, load_with_meta, parse, parse_with_meta, render, render_with_meta, save, save_with_meta,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Task {
    Classify,
    Regress,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Classify => "classify",
            Task::Regress => "regress",
        }
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "classify" => Ok(Task::Classify),
            "regress" => Ok(Task::Regress),
            other => Err(Error::format(format!("unknown task `{other}`"))),
        }
    }
}

/// Left-to-right dot product: `((w0*x0 + w1*x1) + w2*x2) + ...`.
#[inline]
pub fn dot(w: &[f64], x: &[f64]) -> f64 {
    let mut acc = w[0] * x[0];
    for j in 1..w.len() {
        acc += w[j] * x[j];
    }
    acc
}

#[inline]
pub fn affine(w: &[f64], x: &[f64], b: f64) -> f64 {
    dot(w, x) + b
}

#[inline]
pub fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

/// Sequential strict-greater argmax; ties go to the lowest index.
#[inline]
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = scores[0];
    let mut action = 0;
    for (i, &y) in scores.iter().enumerate().skip(1) {
        if y > best {
            best = y;
            action = i;
        }
    }
    action
}

fn check_dim(expected: usize, state: &[f64]) -> Result<()> {
    if state.len() == expected {
        Ok(())
    } else {
        Err(Error::Shape {
            expected,
            got: state.len(),
        })
    }
}

/// Affine map: `weights` holds one row per output.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn new(weights: Vec<Vec<f64>>, bias: Vec<f64>) -> Result<Dense> {
        if weights.is_empty() || weights.len() != bias.len() {
            return Err(Error::Shape {
                expected: weights.len(),
                got: bias.len(),
            });
        }
        let n_in = weights[0].len();
        if n_in == 0 {
            return Err(Error::Shape {
                expected: 1,
                got: 0,
            });
        }
        if let Some(row) = weights.iter().find(|r| r.len() != n_in) {
            return Err(Error::Shape {
                expected: n_in,
                got: row.len(),
            });
        }
        Ok(Dense { weights, bias })
    }

    pub fn zeros(n_in: usize, n_out: usize) -> Dense {
        Dense {
            weights: vec![vec![0.0; n_in]; n_out],
            bias: vec![0.0; n_out],
        }
    }

    pub fn n_in(&self) -> usize {
        self.weights[0].len()
    }

    pub fn n_out(&self) -> usize {
        self.weights.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.bias)
            .map(|(w, b)| affine(w, x, *b))
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.n_out() * (self.n_in() + 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearPolicy {
    pub layer: Dense,
    pub task: Task,
}

impl LinearPolicy {
    pub fn new(weights: Vec<Vec<f64>>, bias: Vec<f64>, task: Task) -> Result<Self> {
        Ok(LinearPolicy {
            layer: Dense::new(weights, bias)?,
            task,
        })
    }

    pub fn scores(&self, state: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.layer.n_in(), state)?;
        Ok(self.layer.apply(state))
    }
}

/// What a leaf outputs: an action index or a regression vector.
#[derive(Debug, Clone, PartialEq)]
pub enum Leaf {
    Class(usize),
    Values(Vec<f64>),
}

/// Branch predicate of an internal node; `true` sends the state left.
pub trait Split: Clone + fmt::Debug + PartialEq {
    fn goes_left(&self, state: &[f64]) -> bool;
    fn is_valid(&self, state_dim: usize) -> bool;
}

/// `state[feature] <= threshold`.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisSplit {
    pub feature: usize,
    pub threshold: f64,
}

impl Split for AxisSplit {
    #[inline]
    fn goes_left(&self, state: &[f64]) -> bool {
        state[self.feature] <= self.threshold
    }

    fn is_valid(&self, state_dim: usize) -> bool {
        self.feature < state_dim
    }
}

/// `dot(weights, state) <= threshold`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObliqueSplit {
    pub weights: Vec<f64>,
    pub threshold: f64,
}

impl Split for ObliqueSplit {
    #[inline]
    fn goes_left(&self, state: &[f64]) -> bool {
        dot(&self.weights, state) <= self.threshold
    }

    fn is_valid(&self, state_dim: usize) -> bool {
        self.weights.len() == state_dim
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node<S> {
    Internal { split: S, left: usize, right: usize },
    Leaf(Leaf),
}

/// Binary tree stored as a node array rooted at index 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree<S> {
    nodes: Vec<Node<S>>,
    state_dim: usize,
    n_outputs: usize,
    task: Task,
}

pub type AxisTree = Tree<AxisSplit>;
pub type ObliqueTree = Tree<ObliqueSplit>;

impl<S: Split> Tree<S> {
    /// Validates that `nodes` forms a single tree rooted at 0 in which every
    /// node is reachable exactly once and leaves match the task.
    pub fn new(
        nodes: Vec<Node<S>>,
        state_dim: usize,
        n_outputs: usize,
        task: Task,
    ) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::Validation("tree has no nodes".into()));
        }
        let mut seen = vec![false; nodes.len()];
        let mut stack = vec![0usize];
        while let Some(i) = stack.pop() {
            if i >= nodes.len() || seen[i] {
                return Err(Error::Validation(format!(
                    "node {i} is out of range or reached twice"
                )));
            }
            seen[i] = true;
            match &nodes[i] {
                Node::Internal { split, left, right } => {
                    if !split.is_valid(state_dim) {
                        return Err(Error::Validation(format!(
                            "node {i} splits on an invalid feature"
                        )));
                    }
                    stack.push(*right);
                    stack.push(*left);
                }
                Node::Leaf(Leaf::Class(a)) if task == Task::Classify && *a < n_outputs => {}
                Node::Leaf(Leaf::Values(v)) if task == Task::Regress && v.len() == n_outputs => {}
                Node::Leaf(_) => {
                    return Err(Error::Validation(format!(
                        "leaf {i} does not match the task"
                    )))
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Validation("tree has unreachable nodes".into()));
        }
        Ok(Tree {
            nodes,
            state_dim,
            n_outputs,
            task,
        })
    }

    pub fn leaf(leaf: Leaf, state_dim: usize, n_outputs: usize, task: Task) -> Result<Self> {
        Self::new(vec![Node::Leaf(leaf)], state_dim, n_outputs, task)
    }

    pub fn nodes(&self) -> &[Node<S>] {
        &self.nodes
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn n_outputs(&self) -> usize {
        self.n_outputs
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf(_)))
            .count()
    }

    pub fn depth(&self) -> usize {
        fn go<S>(nodes: &[Node<S>], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf(_) => 0,
                Node::Internal { left, right, .. } => 1 + go(nodes, *left).max(go(nodes, *right)),
            }
        }
        go(&self.nodes, 0)
    }

    /// Index of the leaf reached by `state` and the number of splits evaluated.
    pub fn descend(&self, state: &[f64]) -> (usize, usize) {
        let mut i = 0;
        let mut depth = 0;
        while let Node::Internal { split, left, right } = &self.nodes[i] {
            i = if split.goes_left(state) {
                *left
            } else {
                *right
            };
            depth += 1;
        }
        (i, depth)
    }

    pub fn predict_leaf(&self, state: &[f64]) -> Result<&Leaf> {
        check_dim(self.state_dim, state)?;
        match &self.nodes[self.descend(state).0] {
            Node::Leaf(leaf) => Ok(leaf),
            Node::Internal { .. } => unreachable!("descend stops at leaves"),
        }
    }
}

/// Fully connected ReLU network; the last layer is linear.
#[derive(Debug, Clone, PartialEq)]
pub struct ReluMlp {
    pub layers: Vec<Dense>,
    pub task: Task,
}

impl ReluMlp {
    pub fn new(layers: Vec<Dense>, task: Task) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Validation("network has no layers".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].n_out() != pair[1].n_in() {
                return Err(Error::Shape {
                    expected: pair[0].n_out(),
                    got: pair[1].n_in(),
                });
            }
        }
        Ok(ReluMlp { layers, task })
    }

    pub fn state_dim(&self) -> usize {
        self.layers[0].n_in()
    }

    pub fn n_outputs(&self) -> usize {
        self.layers.last().map(Dense::n_out).unwrap_or(0)
    }

    pub fn hidden_sizes(&self) -> Vec<usize> {
        self.layers[..self.layers.len() - 1]
            .iter()
            .map(Dense::n_out)
            .collect()
    }

    /// Output-layer values (Q-values, logits or regression outputs).
    pub fn forward(&self, state: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.state_dim(), state)?;
        let last = self.layers.len() - 1;
        let mut x = state.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            x = layer.apply(&x);
            if i < last {
                x.iter_mut().for_each(|v| *v = relu(*v));
            }
        }
        Ok(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PolicyClass {
    Linear,
    AxisTree,
    ObliqueTree,
    ReluMlp,
}

impl PolicyClass {
    pub const ALL: [PolicyClass; 4] = [
        PolicyClass::Linear,
        PolicyClass::AxisTree,
        PolicyClass::ObliqueTree,
        PolicyClass::ReluMlp,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyClass::Linear => "linear",
            PolicyClass::AxisTree => "axis_tree",
            PolicyClass::ObliqueTree => "oblique_tree",
            PolicyClass::ReluMlp => "relu_mlp",
        }
    }
}

impl fmt::Display for PolicyClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PolicyClass::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::format(format!("unknown policy class `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Policy {
    Linear(LinearPolicy),
    AxisTree(AxisTree),
    ObliqueTree(ObliqueTree),
    ReluMlp(ReluMlp),
}

fn leaf_action(leaf: &Leaf) -> Action {
    match leaf {
        Leaf::Class(a) => Action::Discrete(*a),
        Leaf::Values(v) => Action::Continuous(v.clone()),
    }
}

fn scores_action(scores: Vec<f64>, task: Task) -> Action {
    match task {
        Task::Classify => Action::Discrete(argmax(&scores)),
        Task::Regress => Action::Continuous(scores),
    }
}

impl Policy {
    pub fn class(&self) -> PolicyClass {
        match self {
            Policy::Linear(_) => PolicyClass::Linear,
            Policy::AxisTree(_) => PolicyClass::AxisTree,
            Policy::ObliqueTree(_) => PolicyClass::ObliqueTree,
            Policy::ReluMlp(_) => PolicyClass::ReluMlp,
        }
    }

    pub fn task(&self) -> Task {
        match self {
            Policy::Linear(p) => p.task,
            Policy::AxisTree(t) => t.task(),
            Policy::ObliqueTree(t) => t.task(),
            Policy::ReluMlp(m) => m.task,
        }
    }

    pub fn state_dim(&self) -> usize {
        match self {
            Policy::Linear(p) => p.layer.n_in(),
            Policy::AxisTree(t) => t.state_dim(),
            Policy::ObliqueTree(t) => t.state_dim(),
            Policy::ReluMlp(m) => m.state_dim(),
        }
    }

    /// Number of discrete actions (classification) or output dimension.
    pub fn n_outputs(&self) -> usize {
        match self {
            Policy::Linear(p) => p.layer.n_out(),
            Policy::AxisTree(t) => t.n_outputs(),
            Policy::ObliqueTree(t) => t.n_outputs(),
            Policy::ReluMlp(m) => m.n_outputs(),
        }
    }

    /// Folded inference. Continuous outputs are returned raw; the
    /// environment clips them.
    pub fn predict(&self, state: &[f64]) -> Result<Action> {
        match self {
            Policy::Linear(p) => Ok(scores_action(p.scores(state)?, p.task)),
            Policy::AxisTree(t) => Ok(leaf_action(t.predict_leaf(state)?)),
            Policy::ObliqueTree(t) => Ok(leaf_action(t.predict_leaf(state)?)),
            Policy::ReluMlp(m) => Ok(scores_action(m.forward(state)?, m.task)),
        }
    }

    /// Linear: weights + biases. Trees: node count. MLP: weights + biases.
    pub fn param_count(&self) -> usize {
        match self {
            Policy::Linear(p) => p.layer.param_count(),
            Policy::AxisTree(t) => t.nodes().len(),
            Policy::ObliqueTree(t) => t.nodes().len(),
            Policy::ReluMlp(m) => m.layers.iter().map(Dense::param_count).sum(),
        }
    }
}

impl From<LinearPolicy> for Policy {
    fn from(p: LinearPolicy) -> Self {
        Policy::Linear(p)
    }
}

impl From<AxisTree> for Policy {
    fn from(t: AxisTree) -> Self {
        Policy::AxisTree(t)
    }
}

impl From<ObliqueTree> for Policy {
    fn from(t: ObliqueTree) -> Self {
        Policy::ObliqueTree(t)
    }
}

impl From<ReluMlp> for Policy {
    fn from(m: ReluMlp) -> Self {
        Policy::ReluMlp(m)
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng as _, SeedableRng};

    pub(crate) fn mountain_car_linear() -> LinearPolicy {
        LinearPolicy::new(
            vec![
                vec![0.969, -30.830],
                vec![-0.205, 22.592],
                vec![-0.763, 8.237],
            ],
            vec![0.575, -0.63, 0.054],
            Task::Classify,
        )
        .unwrap()
    }

    pub(crate) fn random_mlp(rng: &mut impl rand::Rng, sizes: &[usize], task: Task) -> ReluMlp {
        let layers = sizes
            .windows(2)
            .map(|w| {
                let weights = (0..w[1])
                    .map(|_| (0..w[0]).map(|_| rng.random_range(-1.0..1.0)).collect())
                    .collect();
                let bias = (0..w[1]).map(|_| rng.random_range(-1.0..1.0)).collect();
                Dense::new(weights, bias).unwrap()
            })
            .collect();
        ReluMlp::new(layers, task).unwrap()
    }

    #[test]
    fn linear_score_at_origin_is_bias() {
        let p = mountain_car_linear();
        let scores = p.scores(&[0.0, 0.0]).unwrap();
        assert_eq!(scores[0], 0.575);
        assert_eq!(
            Policy::from(p).predict(&[0.0, 0.0]).unwrap(),
            Action::Discrete(0)
        );
    }

    #[test]
    fn single_leaf_tree_predicts_its_action() {
        let t = AxisTree::leaf(Leaf::Class(2), 3, 3, Task::Classify).unwrap();
        let p = Policy::from(t);
        assert_eq!(p.predict(&[5.0, -1.0, 0.0]).unwrap(), Action::Discrete(2));
        assert_eq!(p.param_count(), 1);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let p = Policy::from(mountain_car_linear());
        assert!(matches!(
            p.predict(&[0.0]),
            Err(Error::Shape {
                expected: 2,
                got: 1
            })
        ));
    }

    #[test]
    fn param_counts() {
        let lin = LinearPolicy::new(vec![vec![0.0; 2]; 3], vec![0.0; 3], Task::Classify).unwrap();
        assert_eq!(Policy::from(lin).param_count(), 9);

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let mlp = random_mlp(&mut rng, &[2, 4, 4, 3], Task::Classify);
        assert_eq!(Policy::from(mlp).param_count(), 47);

        // 4 internal nodes, 5 leaves
        let split = |f| AxisSplit {
            feature: f,
            threshold: 0.0,
        };
        let nodes = vec![
            Node::Internal {
                split: split(0),
                left: 1,
                right: 2,
            },
            Node::Internal {
                split: split(1),
                left: 3,
                right: 4,
            },
            Node::Internal {
                split: split(1),
                left: 5,
                right: 6,
            },
            Node::Leaf(Leaf::Class(0)),
            Node::Internal {
                split: split(0),
                left: 7,
                right: 8,
            },
            Node::Leaf(Leaf::Class(1)),
            Node::Leaf(Leaf::Class(0)),
            Node::Leaf(Leaf::Class(1)),
            Node::Leaf(Leaf::Class(0)),
        ];
        let tree = AxisTree::new(nodes, 2, 2, Task::Classify).unwrap();
        assert_eq!(tree.n_leaves(), 5);
        assert_eq!(Policy::from(tree).param_count(), 9);
    }

    #[test]
    fn malformed_trees_are_rejected() {
        let split = AxisSplit {
            feature: 0,
            threshold: 0.0,
        };
        let cyclic = vec![
            Node::Internal {
                split: split.clone(),
                left: 0,
                right: 1,
            },
            Node::Leaf(Leaf::Class(0)),
        ];
        assert!(AxisTree::new(cyclic, 1, 2, Task::Classify).is_err());
        let bad_feature = vec![
            Node::Internal {
                split: AxisSplit {
                    feature: 3,
                    threshold: 0.0,
                },
                left: 1,
                right: 2,
            },
            Node::Leaf(Leaf::Class(0)),
            Node::Leaf(Leaf::Class(1)),
        ];
        assert!(AxisTree::new(bad_feature, 2, 2, Task::Classify).is_err());
        let orphan = vec![Node::Leaf(Leaf::Class(0)), Node::Leaf(Leaf::Class(1))];
        assert!(AxisTree::new(orphan, 2, 2, Task::Classify).is_err());
    }

    /// Independent forward pass: explicit index loops, no shared helpers.
    fn matrix_walk(mlp: &ReluMlp, s: &[f64]) -> Vec<f64> {
        let mut x = s.to_vec();
        for (l, layer) in mlp.layers.iter().enumerate() {
            let mut y = vec![0.0; layer.weights.len()];
            for i in 0..y.len() {
                let mut acc = 0.0;
                for j in 0..x.len() {
                    acc += layer.weights[i][j] * x[j];
                }
                y[i] = acc + layer.bias[i];
                if l + 1 < mlp.layers.len() {
                    y[i] = y[i].max(0.0);
                }
            }
            x = y;
        }
        x
    }

    #[test]
    fn mlp_matches_matrix_walk_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        for _ in 0..100 {
            let dims = [
                rng.random_range(1..6),
                rng.random_range(1..9),
                rng.random_range(1..9),
                rng.random_range(2..5),
            ];
            let mlp = random_mlp(&mut rng, &dims, Task::Classify);
            let s: Vec<f64> = (0..dims[0]).map(|_| rng.random_range(-3.0..3.0)).collect();
            let got = mlp.forward(&s).unwrap();
            let expect = matrix_walk(&mlp, &s);
            for (a, b) in got.iter().zip(&expect) {
                assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
            }
            assert_eq!(
                Policy::from(mlp).predict(&s).unwrap(),
                Action::Discrete(argmax(&expect)),
            );
        }
    }

    proptest! {
        #[test]
        fn argmax_ties_pick_lowest_index(values in proptest::collection::vec(-3i32..3, 2..8)) {
            let scores: Vec<f64> = values.iter().map(|&v| v as f64).collect();
            let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let first = scores.iter().position(|&s| s == max).unwrap();
            prop_assert_eq!(argmax(&scores), first);
        }
    }

    #[test]
    fn crafted_tie_in_linear_policy() {
        let p = LinearPolicy::new(
            vec![vec![1.0], vec![1.0], vec![0.0]],
            vec![0.0, 0.0, 1.0],
            Task::Classify,
        )
        .unwrap();
        // scores (1, 1, 1): all tied
        assert_eq!(
            Policy::from(p).predict(&[1.0]).unwrap(),
            Action::Discrete(0)
        );
    }
}
