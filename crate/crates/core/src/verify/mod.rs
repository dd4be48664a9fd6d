//! Local explainability queries: does some state in a box make the policy
//! choose an action from a target set? Axis trees are decided exactly by
//! path enumeration; the other classes by input-splitting branch and bound
//! with interval bound propagation.

use std::time::{Duration, Instant};

use rand::Rng as _;

use crate::env::{Action, ActionKind, EnvSpec};
use crate::error::{Error, Result};
use crate::policy::{relu, AxisTree, Dense, Leaf, Node, ObliqueTree, Policy, Task};
use crate::rng::stream;

pub const DEFAULT_QUERIES: usize = 500;
pub const DEFAULT_EPS: f64 = 1e-3;
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);
/// Slack an interval bound must clear before it counts as a proof, covering
/// rounding differences between bound arithmetic and concrete inference.
const PROOF_MARGIN: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum ActionTarget {
    /// Sorted, nonempty, proper subset of the discrete actions.
    Discrete(Vec<usize>),
    /// Box in action space.
    Continuous(Vec<(f64, f64)>),
}

impl ActionTarget {
    pub fn contains(&self, action: &Action) -> bool {
        match (self, action) {
            (ActionTarget::Discrete(set), Action::Discrete(a)) => set.contains(a),
            (ActionTarget::Continuous(b), Action::Continuous(v)) => {
                b.len() == v.len() && b.iter().zip(v).all(|((lo, hi), x)| lo <= x && x <= hi)
            }
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub state_box: Vec<(f64, f64)>,
    pub target: ActionTarget,
}

impl Query {
    pub fn contains_state(&self, s: &[f64]) -> bool {
        s.len() == self.state_box.len()
            && self
                .state_box
                .iter()
                .zip(s)
                .all(|((lo, hi), x)| lo <= x && x <= hi)
    }

    pub fn validate(&self) -> Result<()> {
        if self.state_box.iter().any(|(lo, hi)| !(lo <= hi)) {
            return Err(Error::Config("query box has an empty interval".into()));
        }
        match &self.target {
            ActionTarget::Discrete(set) if set.is_empty() => {
                Err(Error::Config("empty action target".into()))
            }
            ActionTarget::Continuous(b) if b.iter().any(|(lo, hi)| !(lo <= hi)) => Err(
                Error::Config("action target box has an empty interval".into()),
            ),
            _ => Ok(()),
        }
    }
}

fn ordered_pair(rng: &mut impl rand::Rng, lo: f64, hi: f64) -> (f64, f64) {
    let a = rng.random_range(lo..=hi);
    let b = rng.random_range(lo..=hi);
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Uniform random queries: each box side is two ordered uniform draws
/// within the observation bounds; discrete targets are uniform nonempty
/// proper subsets, continuous targets sub-boxes of the actuator range.
pub fn gen_queries(spec: &EnvSpec, n: usize, seed: u64) -> Vec<Query> {
    let mut rng = stream(seed, "queries");
    (0..n)
        .map(|_| {
            let state_box = spec
                .state_bounds
                .iter()
                .map(|&(lo, hi)| ordered_pair(&mut rng, lo, hi))
                .collect();
            let target = match &spec.action_kind {
                ActionKind::Discrete(k) => {
                    let mask = rng.random_range(1..(1u64 << k) - 1);
                    ActionTarget::Discrete((0..*k).filter(|a| mask >> a & 1 == 1).collect())
                }
                ActionKind::Continuous { low, high } => ActionTarget::Continuous(
                    low.iter()
                        .zip(high)
                        .map(|(&l, &h)| ordered_pair(&mut rng, l, h))
                        .collect(),
                ),
            };
            Query { state_box, target }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum Status {
    Sat(Vec<f64>),
    Unsat,
    Unknown,
}

impl Status {
    pub fn as_str(&self) -> &'static str {
        match self {
            Status::Sat(_) => "SAT",
            Status::Unsat => "UNSAT",
            Status::Unknown => "UNKNOWN",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub status: Status,
    pub wall_time_s: f64,
    pub nodes: usize,
}

impl Verdict {
    /// A SAT verdict whose witness has been checked against the query.
    pub fn sat(
        policy: &Policy,
        query: &Query,
        witness: Vec<f64>,
        wall_time_s: f64,
        nodes: usize,
    ) -> Result<Verdict> {
        if !query.contains_state(&witness) || !query.target.contains(&policy.predict(&witness)?) {
            return Err(Error::Validation(format!(
                "witness {witness:?} does not satisfy the query"
            )));
        }
        Ok(Verdict {
            status: Status::Sat(witness),
            wall_time_s,
            nodes,
        })
    }
}

/// One interval per coordinate; `open_lo` marks a strict lower bound left
/// by a `>` branch.
#[derive(Debug, Clone)]
struct Side {
    lo: f64,
    hi: f64,
    open_lo: bool,
}

impl Side {
    fn point(&self) -> f64 {
        let mid = self.lo + (self.hi - self.lo) / 2.0;
        if self.open_lo && mid <= self.lo {
            self.hi
        } else {
            mid
        }
    }
}

/// Exact verification of an axis-aligned tree: enumerates root-to-leaf
/// paths whose constraints intersect the query box.
pub fn verify_tree(tree: &AxisTree, query: &Query) -> Result<Verdict> {
    query.validate()?;
    let start = Instant::now();
    let policy = Policy::AxisTree(tree.clone());
    let root: Vec<Side> = query
        .state_box
        .iter()
        .map(|&(lo, hi)| Side {
            lo,
            hi,
            open_lo: false,
        })
        .collect();
    let mut stack = vec![(0usize, root)];
    let mut nodes = 0;
    while let Some((id, sides)) = stack.pop() {
        nodes += 1;
        match &tree.nodes()[id] {
            Node::Leaf(leaf) => {
                let action = match leaf {
                    Leaf::Class(a) => Action::Discrete(*a),
                    Leaf::Values(v) => Action::Continuous(v.clone()),
                };
                if query.target.contains(&action) {
                    let witness = sides.iter().map(Side::point).collect();
                    return Verdict::sat(
                        &policy,
                        query,
                        witness,
                        start.elapsed().as_secs_f64(),
                        nodes,
                    );
                }
            }
            Node::Internal { split, left, right } => {
                let s = &sides[split.feature];
                let t = split.threshold;
                // Right branch: x > t.
                if t < s.hi {
                    let mut r = sides.clone();
                    if t >= s.lo {
                        r[split.feature] = Side {
                            lo: t,
                            hi: s.hi,
                            open_lo: true,
                        };
                    }
                    stack.push((*right, r));
                }
                // Left branch: x <= t.
                if t >= s.lo && !(s.open_lo && t <= s.lo) {
                    let mut l = sides;
                    l[split.feature].hi = l[split.feature].hi.min(t);
                    stack.push((*left, l));
                }
            }
        }
    }
    Ok(Verdict {
        status: Status::Unsat,
        wall_time_s: start.elapsed().as_secs_f64(),
        nodes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BnbOptions {
    /// Boxes narrower than this fraction of the query box on every side are
    /// not split further.
    pub eps: f64,
    pub timeout: Duration,
}

impl Default for BnbOptions {
    fn default() -> Self {
        BnbOptions {
            eps: DEFAULT_EPS,
            timeout: DEFAULT_TIMEOUT,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Bound {
    /// No state of the box can satisfy the query.
    Infeasible,
    /// Every state of the box satisfies the query.
    Feasible,
    Undecided,
}

/// Interval image of `x` under an affine layer.
fn affine_bounds(layer: &Dense, x: &[(f64, f64)]) -> Vec<(f64, f64)> {
    layer
        .weights
        .iter()
        .zip(&layer.bias)
        .map(|(row, b)| row_bounds(row, *b, x))
        .collect()
}

fn row_bounds(row: &[f64], bias: f64, x: &[(f64, f64)]) -> (f64, f64) {
    let (mut lo, mut hi) = (bias, bias);
    for (w, (l, h)) in row.iter().zip(x) {
        if *w >= 0.0 {
            lo += w * l;
            hi += w * h;
        } else {
            lo += w * h;
            hi += w * l;
        }
    }
    (lo, hi)
}

/// Bounds on the last hidden activations (or the input for linear maps).
fn hidden_bounds(layers: &[Dense], x: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut cur = x.to_vec();
    for layer in &layers[..layers.len() - 1] {
        cur = affine_bounds(layer, &cur)
            .into_iter()
            .map(|(l, h)| (relu(l), relu(h)))
            .collect();
    }
    cur
}

fn network_bound(layers: &[Dense], target: &ActionTarget, x: &[(f64, f64)]) -> Bound {
    let h = hidden_bounds(layers, x);
    let out = &layers[layers.len() - 1];
    match target {
        ActionTarget::Discrete(set) => {
            // Action t is ruled out when some other action's score provably
            // exceeds it: lower bound of y_a - y_t above zero.
            let beaten = |t: usize| {
                (0..out.n_out()).any(|a| {
                    if a == t {
                        return false;
                    }
                    let row: Vec<f64> = out.weights[a]
                        .iter()
                        .zip(&out.weights[t])
                        .map(|(p, q)| p - q)
                        .collect();
                    row_bounds(&row, out.bias[a] - out.bias[t], &h).0 > PROOF_MARGIN
                })
            };
            if set.iter().all(|&t| beaten(t)) {
                Bound::Infeasible
            } else {
                Bound::Undecided
            }
        }
        ActionTarget::Continuous(b) => {
            let y = affine_bounds(out, &h);
            if y.iter()
                .zip(b)
                .any(|((l, h), (tl, th))| *h < tl - PROOF_MARGIN || *l > th + PROOF_MARGIN)
            {
                Bound::Infeasible
            } else if y
                .iter()
                .zip(b)
                .all(|((l, h), (tl, th))| *l >= tl + PROOF_MARGIN && *h <= th - PROOF_MARGIN)
            {
                Bound::Feasible
            } else {
                Bound::Undecided
            }
        }
    }
}

/// Reachable leaves of an oblique tree over a box, by interval evaluation
/// of each split.
fn oblique_bound(tree: &ObliqueTree, target: &ActionTarget, x: &[(f64, f64)]) -> Bound {
    let (mut any_in, mut any_out) = (false, false);
    let mut stack = vec![0usize];
    while let Some(id) = stack.pop() {
        match &tree.nodes()[id] {
            Node::Leaf(leaf) => {
                let action = match leaf {
                    Leaf::Class(a) => Action::Discrete(*a),
                    Leaf::Values(v) => Action::Continuous(v.clone()),
                };
                if target.contains(&action) {
                    any_in = true;
                } else {
                    any_out = true;
                }
            }
            Node::Internal { split, left, right } => {
                let (lo, hi) = row_bounds(&split.weights, 0.0, x);
                if lo <= split.threshold + PROOF_MARGIN {
                    stack.push(*left);
                }
                if hi > split.threshold - PROOF_MARGIN {
                    stack.push(*right);
                }
            }
        }
    }
    match (any_in, any_out) {
        (false, _) => Bound::Infeasible,
        (true, false) => Bound::Feasible,
        (true, true) => Bound::Undecided,
    }
}

/// Input-splitting branch and bound for linear policies, ReLU MLPs and
/// oblique trees (axis trees go to [`verify_tree`]).
pub fn verify_bnb(policy: &Policy, query: &Query, opts: &BnbOptions) -> Result<Verdict> {
    query.validate()?;
    if !(opts.eps > 0.0) {
        return Err(Error::Config("eps must be positive".into()));
    }
    if query.state_box.len() != policy.state_dim() {
        return Err(Error::Shape {
            expected: policy.state_dim(),
            got: query.state_box.len(),
        });
    }
    let discrete_target = matches!(query.target, ActionTarget::Discrete(_));
    if discrete_target != (policy.task() == Task::Classify) {
        return Err(Error::Config(
            "action target kind does not match the policy".into(),
        ));
    }
    let bound: Box<dyn Fn(&[(f64, f64)]) -> Bound + '_> = match policy {
        Policy::Linear(p) => {
            Box::new(move |x| network_bound(std::slice::from_ref(&p.layer), &query.target, x))
        }
        Policy::ReluMlp(m) => Box::new(move |x| network_bound(&m.layers, &query.target, x)),
        Policy::ObliqueTree(t) => Box::new(move |x| oblique_bound(t, &query.target, x)),
        Policy::AxisTree(_) => {
            return Err(Error::Unsupported(
                "axis trees are verified exactly by verify_tree".into(),
            ))
        }
    };
    let start = Instant::now();
    let widths: Vec<f64> = query.state_box.iter().map(|(lo, hi)| hi - lo).collect();
    let mut stack = vec![query.state_box.clone()];
    let mut nodes = 0;
    let mut exhausted = false;
    while let Some(b) = stack.pop() {
        nodes += 1;
        if start.elapsed() > opts.timeout {
            return Ok(Verdict {
                status: Status::Unknown,
                wall_time_s: start.elapsed().as_secs_f64(),
                nodes,
            });
        }
        let verdict = bound(&b);
        if verdict == Bound::Infeasible {
            continue;
        }
        let center: Vec<f64> = b.iter().map(|(lo, hi)| lo + (hi - lo) / 2.0).collect();
        if verdict == Bound::Feasible || query.target.contains(&policy.predict(&center)?) {
            return Verdict::sat(policy, query, center, start.elapsed().as_secs_f64(), nodes);
        }
        // Split the side that is widest relative to the query box.
        let (dim, rel) = b
            .iter()
            .zip(&widths)
            .map(|((lo, hi), w)| if *w > 0.0 { (hi - lo) / w } else { 0.0 })
            .enumerate()
            .fold(
                (0, -1.0),
                |best, (i, r)| if r > best.1 { (i, r) } else { best },
            );
        if rel < opts.eps {
            exhausted = true;
            continue;
        }
        let (lo, hi) = b[dim];
        let mid = lo + (hi - lo) / 2.0;
        let mut left = b.clone();
        left[dim].1 = mid;
        let mut right = b;
        right[dim].0 = mid;
        stack.push(right);
        stack.push(left);
    }
    let status = if exhausted {
        Status::Unknown
    } else {
        Status::Unsat
    };
    Ok(Verdict {
        status,
        wall_time_s: start.elapsed().as_secs_f64(),
        nodes,
    })
}

/// Dispatches to the exact tree verifier or branch and bound.
pub fn verify(policy: &Policy, query: &Query, opts: &BnbOptions) -> Result<Verdict> {
    match policy {
        Policy::AxisTree(t) => verify_tree(t, query),
        _ => verify_bnb(policy, query, opts),
    }
}

/// Uniform sampling falsifier: returns a state in the box satisfying the
/// query, if one of `samples` draws does.
pub fn sample_witness(
    policy: &Policy,
    query: &Query,
    samples: usize,
    seed: u64,
) -> Result<Option<Vec<f64>>> {
    let mut rng = stream(seed, "falsifier");
    for _ in 0..samples {
        let s: Vec<f64> = query
            .state_box
            .iter()
            .map(|&(lo, hi)| rng.random_range(lo..=hi))
            .collect();
        if query.target.contains(&policy.predict(&s)?) {
            return Ok(Some(s));
        }
    }
    Ok(None)
}
