//! Greedy best-first CART shared by axis-aligned trees, random-projection
//! oblique trees and the regression forest behind feature importances.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::seq::index::sample;
use rand_distr::{Distribution, StandardNormal};

use super::{LabeledSet, Labels};
use crate::error::{Error, Result};
use crate::policy::{
    argmax, dot, AxisSplit, AxisTree, Leaf, Node, ObliqueSplit, ObliqueTree, Task, Tree,
};
use crate::rng::{self, Rng};

/// Random directions proposed at each oblique node on top of the axes.
pub const DEFAULT_DIRECTIONS: usize = 8;

#[derive(Debug, Clone, PartialEq)]
enum Direction {
    Axis(usize),
    Oblique(Vec<f64>),
}

/// How a direction projects states; oblique trees project every candidate
/// (axes included) through `dot` so thresholds agree with inference.
trait SplitKind: Sized {
    fn project(dir: &Direction, state: &[f64]) -> f64;
    fn make(dir: &Direction, threshold: f64, state_dim: usize) -> Self;
}

impl SplitKind for AxisSplit {
    fn project(dir: &Direction, state: &[f64]) -> f64 {
        match dir {
            Direction::Axis(j) => state[*j],
            Direction::Oblique(_) => unreachable!("axis trees only propose axes"),
        }
    }

    fn make(dir: &Direction, threshold: f64, _: usize) -> Self {
        match dir {
            Direction::Axis(j) => AxisSplit {
                feature: *j,
                threshold,
            },
            Direction::Oblique(_) => unreachable!("axis trees only propose axes"),
        }
    }
}

impl SplitKind for ObliqueSplit {
    fn project(dir: &Direction, state: &[f64]) -> f64 {
        match dir {
            Direction::Axis(j) => dot(&one_hot(*j, state.len()), state),
            Direction::Oblique(w) => dot(w, state),
        }
    }

    fn make(dir: &Direction, threshold: f64, state_dim: usize) -> Self {
        let weights = match dir {
            Direction::Axis(j) => one_hot(*j, state_dim),
            Direction::Oblique(w) => w.clone(),
        };
        ObliqueSplit { weights, threshold }
    }
}

fn one_hot(j: usize, d: usize) -> Vec<f64> {
    let mut v = vec![0.0; d];
    v[j] = 1.0;
    v
}

/// Sufficient statistics of a set of samples for the split criterion.
#[derive(Clone)]
enum Stats {
    /// Weighted class totals.
    Gini(Vec<f64>),
    /// Weighted sum and sum of squares per output.
    Variance { sum: Vec<f64>, sum_sq: Vec<f64> },
}

impl Stats {
    fn empty(labels: &Labels) -> Stats {
        match labels {
            Labels::Discrete { n_actions, .. } => Stats::Gini(vec![0.0; *n_actions]),
            Labels::Continuous(v) => {
                let k = v[0].len();
                Stats::Variance {
                    sum: vec![0.0; k],
                    sum_sq: vec![0.0; k],
                }
            }
        }
    }

    fn add(&mut self, labels: &Labels, i: usize, w: f64) {
        match (self, labels) {
            (Stats::Gini(c), Labels::Discrete { actions, .. }) => c[actions[i]] += w,
            (Stats::Variance { sum, sum_sq }, Labels::Continuous(v)) => {
                for (k, y) in v[i].iter().enumerate() {
                    sum[k] += w * y;
                    sum_sq[k] += w * y * y;
                }
            }
            _ => unreachable!("stats built from the same labels"),
        }
    }

    fn sub(&self, other: &Stats) -> Stats {
        match (self, other) {
            (Stats::Gini(a), Stats::Gini(b)) => {
                Stats::Gini(a.iter().zip(b).map(|(x, y)| x - y).collect())
            }
            (
                Stats::Variance {
                    sum: s1,
                    sum_sq: q1,
                },
                Stats::Variance {
                    sum: s2,
                    sum_sq: q2,
                },
            ) => Stats::Variance {
                sum: s1.iter().zip(s2).map(|(x, y)| x - y).collect(),
                sum_sq: q1.iter().zip(q2).map(|(x, y)| x - y).collect(),
            },
            _ => unreachable!(),
        }
    }

    /// Weight times impurity: W * gini, or the weighted sum of squared
    /// deviations from the mean summed over outputs.
    fn weighted_impurity(&self, weight: f64) -> f64 {
        if weight <= 0.0 {
            return 0.0;
        }
        match self {
            Stats::Gini(c) => weight - c.iter().map(|x| x * x).sum::<f64>() / weight,
            Stats::Variance { sum, sum_sq } => sum
                .iter()
                .zip(sum_sq)
                .map(|(s, q)| (q - s * s / weight).max(0.0))
                .sum(),
        }
    }

    fn leaf(&self, weight: f64) -> Leaf {
        match self {
            Stats::Gini(c) => Leaf::Class(argmax(c)),
            Stats::Variance { sum, .. } => Leaf::Values(sum.iter().map(|s| s / weight).collect()),
        }
    }
}

struct Choice {
    dir: Direction,
    threshold: f64,
    gain: f64,
    left: Vec<usize>,
    right: Vec<usize>,
}

struct Open {
    node: usize,
    gain: f64,
    choice: Choice,
}

impl PartialEq for Open {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Open {}

impl PartialOrd for Open {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Open {
    // highest gain first; ties resolved towards the earlier-created node
    fn cmp(&self, other: &Self) -> Ordering {
        self.gain
            .total_cmp(&other.gain)
            .then_with(|| other.node.cmp(&self.node))
    }
}

struct Grower<'a> {
    data: &'a LabeledSet,
}

impl Grower<'_> {
    fn stats(&self, idx: &[usize]) -> (Stats, f64) {
        let mut st = Stats::empty(&self.data.labels);
        let mut w = 0.0;
        for &i in idx {
            st.add(&self.data.labels, i, self.data.weights[i]);
            w += self.data.weights[i];
        }
        (st, w)
    }

    /// Best threshold over all candidate directions, by weighted impurity decrease.
    fn best_split<S: SplitKind>(&self, idx: &[usize], dirs: Vec<Direction>) -> Option<Choice> {
        let labels = &self.data.labels;
        let (total, total_w) = self.stats(idx);
        let parent = total.weighted_impurity(total_w);
        if parent <= 0.0 {
            return None;
        }
        let min_gain = 1e-12 * parent.max(1e-300);
        let mut best: Option<(usize, f64, f64, usize)> = None;
        let mut orders = Vec::with_capacity(dirs.len());
        for (d, dir) in dirs.iter().enumerate() {
            let mut proj: Vec<(f64, usize)> = idx
                .iter()
                .map(|&i| (S::project(dir, &self.data.states[i]), i))
                .collect();
            proj.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let mut left = Stats::empty(labels);
            let mut left_w = 0.0;
            for p in 0..proj.len() - 1 {
                let (v, i) = proj[p];
                left.add(labels, i, self.data.weights[i]);
                left_w += self.data.weights[i];
                let next = proj[p + 1].0;
                if !(v < next) {
                    continue;
                }
                let right_w = total_w - left_w;
                if left_w <= 0.0 || right_w <= 1e-12 * total_w {
                    continue;
                }
                let right = total.sub(&left);
                let gain =
                    parent - left.weighted_impurity(left_w) - right.weighted_impurity(right_w);
                if gain > min_gain && best.is_none_or(|b| gain > b.1 + min_gain) {
                    let mut t = (v + next) / 2.0;
                    if !(t < next) {
                        t = v;
                    }
                    best = Some((d, gain, t, p + 1));
                }
            }
            orders.push(proj);
        }
        let (d, gain, threshold, cut) = best?;
        let order = &orders[d];
        Some(Choice {
            dir: dirs[d].clone(),
            threshold,
            gain,
            left: order[..cut].iter().map(|x| x.1).collect(),
            right: order[cut..].iter().map(|x| x.1).collect(),
        })
    }

    fn grow<S: SplitKind + crate::policy::Split>(
        &self,
        max_leaves: usize,
        mut directions: impl FnMut() -> Vec<Direction>,
    ) -> Result<(Tree<S>, Vec<(Direction, f64)>)> {
        let d = self.data.state_dim();
        let labels = &self.data.labels;
        let root: Vec<usize> = (0..self.data.len()).collect();
        let mut nodes: Vec<Node<S>> = Vec::new();
        let mut samples: Vec<Vec<usize>> = Vec::new();
        let mut heap = BinaryHeap::new();
        let mut gains = Vec::new();

        let mut open = |idx: Vec<usize>,
                        nodes: &mut Vec<Node<S>>,
                        samples: &mut Vec<Vec<usize>>,
                        heap: &mut BinaryHeap<Open>| {
            let (st, w) = self.stats(&idx);
            let node = nodes.len();
            nodes.push(Node::Leaf(st.leaf(w)));
            if idx.len() > 1 {
                if let Some(choice) = self.best_split::<S>(&idx, directions()) {
                    heap.push(Open {
                        node,
                        gain: choice.gain,
                        choice,
                    });
                }
            }
            samples.push(idx);
        };

        open(root, &mut nodes, &mut samples, &mut heap);
        let mut leaves = 1;
        while leaves < max_leaves {
            let Some(Open { node, choice, .. }) = heap.pop() else {
                break;
            };
            let left = nodes.len();
            open(choice.left, &mut nodes, &mut samples, &mut heap);
            let right = nodes.len();
            open(choice.right, &mut nodes, &mut samples, &mut heap);
            nodes[node] = Node::Internal {
                split: S::make(&choice.dir, choice.threshold, d),
                left,
                right,
            };
            gains.push((choice.dir, choice.gain));
            leaves += 1;
        }
        let tree = Tree::new(nodes, d, labels.n_outputs(), labels.task())?;
        Ok((tree, gains))
    }
}

fn leaf_cap(max_nodes: usize) -> Result<usize> {
    if max_nodes == 0 {
        return Err(Error::Config("tree node budget must be positive".into()));
    }
    Ok(2 * max_nodes)
}

/// Axis-aligned CART, best-first, with at most `2 * max_nodes` leaves.
pub fn fit_cart(data: &LabeledSet, max_nodes: usize) -> Result<AxisTree> {
    data.validate()?;
    let d = data.state_dim();
    let grower = Grower { data };
    Ok(grower
        .grow::<AxisSplit>(leaf_cap(max_nodes)?, || {
            (0..d).map(Direction::Axis).collect()
        })?
        .0)
}

/// CART whose candidate directions at every node are the axes plus
/// `n_directions` seeded random unit vectors.
pub fn fit_oblique(
    data: &LabeledSet,
    max_nodes: usize,
    n_directions: usize,
    seed: u64,
) -> Result<ObliqueTree> {
    data.validate()?;
    let d = data.state_dim();
    let mut rng = rng::stream(seed, "oblique-directions");
    let grower = Grower { data };
    let propose = || {
        let mut dirs: Vec<Direction> = (0..d).map(Direction::Axis).collect();
        for _ in 0..n_directions {
            dirs.push(Direction::Oblique(random_unit(&mut rng, d)));
        }
        dirs
    };
    Ok(grower
        .grow::<ObliqueSplit>(leaf_cap(max_nodes)?, propose)?
        .0)
}

fn random_unit(rng: &mut Rng, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-9 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// One fully grown regression tree of a random forest together with the
/// impurity decrease it attributes to each feature.
#[derive(Debug, Clone)]
pub struct ForestTree {
    pub tree: AxisTree,
    pub importances: Vec<f64>,
}

/// Grows a regression tree on `data` (bootstrap counts go in the weights),
/// drawing `max_features` candidate features at every node.
pub fn grow_regression_forest_tree(
    data: &LabeledSet,
    max_features: usize,
    rng: &mut Rng,
) -> Result<ForestTree> {
    data.validate()?;
    if data.labels.task() != Task::Regress {
        return Err(Error::Config("forest trees are regression trees".into()));
    }
    let d = data.state_dim();
    let k = max_features.clamp(1, d);
    let grower = Grower { data };
    let (tree, gains) = grower.grow::<AxisSplit>(usize::MAX, || {
        let mut feats = sample(rng, d, k).into_vec();
        feats.sort_unstable();
        feats.into_iter().map(Direction::Axis).collect()
    })?;
    let mut importances = vec![0.0; d];
    for (dir, gain) in gains {
        if let Direction::Axis(j) = dir {
            importances[j] += gain;
        }
    }
    Ok(ForestTree { tree, importances })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Action;
    use crate::policy::Policy;
    use rand::{Rng as _, SeedableRng};

    fn classes(states: Vec<Vec<f64>>, actions: Vec<usize>, n: usize) -> LabeledSet {
        LabeledSet::unweighted(
            states,
            Labels::Discrete {
                actions,
                n_actions: n,
            },
        )
        .unwrap()
    }

    fn accuracy(p: &Policy, data: &LabeledSet) -> f64 {
        let Labels::Discrete { actions, .. } = &data.labels else {
            unreachable!()
        };
        let hits = data
            .states
            .iter()
            .zip(actions)
            .filter(|(s, a)| p.predict(s).unwrap() == Action::Discrete(**a))
            .count();
        hits as f64 / actions.len() as f64
    }

    #[test]
    fn one_threshold_gives_depth_one() {
        let states: Vec<Vec<f64>> = (0..10).map(|i| vec![(i * 37 % 10) as f64, 1.0]).collect();
        let actions = states.iter().map(|s| usize::from(s[0] >= 4.0)).collect();
        let data = classes(states, actions, 2);
        let tree = fit_cart(&data, 4).unwrap();
        assert_eq!(tree.depth(), 1);
        assert_eq!(accuracy(&tree.into(), &data), 1.0);
    }

    #[test]
    fn pure_labels_give_a_single_leaf() {
        let data = classes((0..5).map(|i| vec![i as f64]).collect(), vec![1; 5], 3);
        let tree = fit_cart(&data, 8).unwrap();
        assert_eq!(tree.nodes().len(), 1);
        assert_eq!(tree.nodes()[0], Node::Leaf(Leaf::Class(1)));
    }

    /// Exhaustive search: every midpoint, impurity computed from scratch.
    fn brute_force_root(xs: &[f64], ys: &[usize], n_classes: usize) -> Option<f64> {
        let gini = |set: &[usize]| {
            if set.is_empty() {
                return 0.0;
            }
            let n = set.len() as f64;
            1.0 - (0..n_classes)
                .map(|c| (set.iter().filter(|&&y| y == c).count() as f64 / n).powi(2))
                .sum::<f64>()
        };
        let mut sorted = xs.to_vec();
        sorted.sort_by(f64::total_cmp);
        sorted.dedup();
        let n = xs.len() as f64;
        let parent = gini(ys);
        let mut best: Option<(f64, f64)> = None;
        for w in sorted.windows(2) {
            let t = (w[0] + w[1]) / 2.0;
            let l: Vec<usize> = xs
                .iter()
                .zip(ys)
                .filter(|(x, _)| **x <= t)
                .map(|(_, y)| *y)
                .collect();
            let r: Vec<usize> = xs
                .iter()
                .zip(ys)
                .filter(|(x, _)| **x > t)
                .map(|(_, y)| *y)
                .collect();
            let child = (l.len() as f64 * gini(&l) + r.len() as f64 * gini(&r)) / n;
            if parent - child > 1e-12 && best.is_none_or(|b| child < b.1 - 1e-12) {
                best = Some((t, child));
            }
        }
        best.map(|b| b.0)
    }

    #[test]
    fn root_split_matches_brute_force_on_six_points() {
        let xs = [0.3, -1.2, 2.5, 0.9, 1.7, -0.4];
        let ys = [1, 0, 2, 1, 2, 0];
        let data = classes(xs.iter().map(|x| vec![*x]).collect(), ys.to_vec(), 3);
        let tree = fit_cart(&data, 4).unwrap();
        let Node::Internal { split, .. } = &tree.nodes()[0] else {
            panic!("expected a split")
        };
        assert_eq!(Some(split.threshold), brute_force_root(&xs, &ys, 3));
    }

    #[test]
    fn root_split_matches_brute_force_on_random_sets() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for _ in 0..200 {
            let n = rng.random_range(2..=8);
            let xs: Vec<f64> = (0..n)
                .map(|_| (rng.random_range(-20..20) as f64) / 4.0)
                .collect();
            let ys: Vec<usize> = (0..n).map(|_| rng.random_range(0..3)).collect();
            let data = classes(xs.iter().map(|x| vec![*x]).collect(), ys.clone(), 3);
            let tree = fit_cart(&data, 4).unwrap();
            let got = match &tree.nodes()[0] {
                Node::Internal { split, .. } => Some(split.threshold),
                Node::Leaf(_) => None,
            };
            assert_eq!(got, brute_force_root(&xs, &ys, 3), "xs={xs:?} ys={ys:?}");
        }
    }

    #[test]
    fn leaf_cap_holds() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let states: Vec<Vec<f64>> = (0..400).map(|_| vec![rng.random(), rng.random()]).collect();
        let actions: Vec<usize> = (0..400).map(|_| rng.random_range(0..3)).collect();
        let data = classes(states, actions, 3);
        for budget in super::super::TREE_BUDGETS {
            let tree = fit_cart(&data, budget).unwrap();
            assert!(tree.n_leaves() <= 2 * budget);
            assert!(tree.nodes().len() <= 4 * budget - 1);
        }
    }

    #[test]
    fn duplicated_samples_equal_integer_weights() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let base: Vec<Vec<f64>> = (0..30)
            .map(|_| {
                vec![
                    rng.random_range(-5..5) as f64,
                    rng.random_range(0..4) as f64,
                ]
            })
            .collect();
        let acts: Vec<usize> = (0..30).map(|_| rng.random_range(0..2)).collect();
        let counts: Vec<usize> = (0..30).map(|_| rng.random_range(1..4)).collect();
        let mut dup_s = Vec::new();
        let mut dup_a = Vec::new();
        for i in 0..30 {
            for _ in 0..counts[i] {
                dup_s.push(base[i].clone());
                dup_a.push(acts[i]);
            }
        }
        let weighted = LabeledSet::new(
            base,
            Labels::Discrete {
                actions: acts,
                n_actions: 2,
            },
            counts.iter().map(|c| *c as f64).collect(),
        )
        .unwrap();
        let dup = classes(dup_s, dup_a, 2);
        assert_eq!(fit_cart(&weighted, 8).unwrap(), fit_cart(&dup, 8).unwrap());
    }

    #[test]
    fn regression_tree_predicts_means() {
        let states: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64]).collect();
        let targets: Vec<Vec<f64>> = (0..8)
            .map(|i| vec![if i < 4 { -1.0 } else { 3.0 }])
            .collect();
        let data = LabeledSet::unweighted(states, Labels::Continuous(targets)).unwrap();
        let tree = fit_cart(&data, 4).unwrap();
        let p = Policy::from(tree);
        assert_eq!(p.predict(&[1.0]).unwrap(), Action::Continuous(vec![-1.0]));
        assert_eq!(p.predict(&[6.0]).unwrap(), Action::Continuous(vec![3.0]));
    }

    #[test]
    fn planted_oblique_split() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let states: Vec<Vec<f64>> = (0..200)
            .map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
            .collect();
        let actions = states
            .iter()
            .map(|s| usize::from(s[0] + s[1] > 0.0))
            .collect();
        let data = classes(states, actions, 2);
        // no axis split separates the classes; with enough random directions
        // one lands close to (1, 1)/sqrt(2)
        let tree = fit_oblique(&data, 4, 4000, 0).unwrap();
        let p = Policy::from(tree.clone());
        assert!(accuracy(&p, &data) > 0.97);
        let Node::Internal { split, .. } = &tree.nodes()[0] else {
            panic!()
        };
        assert!((split.weights[0] - split.weights[1]).abs() < 0.1 * split.weights[0].abs());
    }

    #[test]
    fn oblique_without_random_directions_is_cart() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let states: Vec<Vec<f64>> = (0..300)
            .map(|_| {
                vec![
                    rng.random_range(-2.0..2.0),
                    rng.random_range(-1.0..1.0),
                    rng.random(),
                ]
            })
            .collect();
        let actions = states
            .iter()
            .map(|s| usize::from(s[0] * s[1] > 0.1) + usize::from(s[2] > 0.7))
            .collect();
        let data = classes(states.clone(), actions, 3);
        let axis = fit_cart(&data, 16).unwrap();
        let oblique = fit_oblique(&data, 16, 0, 99).unwrap();
        assert_eq!(axis.nodes().len(), oblique.nodes().len());
        for (a, o) in axis.nodes().iter().zip(oblique.nodes()) {
            match (a, o) {
                (Node::Leaf(x), Node::Leaf(y)) => assert_eq!(x, y),
                (
                    Node::Internal {
                        split: sa,
                        left: la,
                        right: ra,
                    },
                    Node::Internal {
                        split: so,
                        left: lo,
                        right: ro,
                    },
                ) => {
                    assert_eq!((la, ra), (lo, ro));
                    assert_eq!(so.weights, one_hot(sa.feature, 3));
                    assert_eq!(so.threshold, sa.threshold);
                }
                _ => panic!("structure differs"),
            }
        }
    }

    #[test]
    fn oblique_is_deterministic_per_seed() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let states: Vec<Vec<f64>> = (0..100).map(|_| vec![rng.random(), rng.random()]).collect();
        let actions = states
            .iter()
            .map(|s| usize::from(2.0 * s[0] - s[1] > 0.3))
            .collect();
        let data = classes(states, actions, 2);
        assert_eq!(
            fit_oblique(&data, 8, 8, 7).unwrap(),
            fit_oblique(&data, 8, 8, 7).unwrap()
        );
    }
}
