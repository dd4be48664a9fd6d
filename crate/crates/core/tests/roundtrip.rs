//! Save/load must not change behavior: for random policies of every class,
//! the parsed policy equals the original and predicts bit-identically.

use proptest::prelude::*;
use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use simbench::env::Action;
use simbench::policy::{
    parse, render, AxisSplit, AxisTree, Dense, Leaf, LinearPolicy, Node, ObliqueSplit, ObliqueTree,
    Policy, ReluMlp, Split, Task, Tree,
};

/// Mostly ordinary floats with awkward ones mixed in.
fn float(rng: &mut ChaCha8Rng) -> f64 {
    const ODD: [f64; 6] = [
        0.0,
        -0.0,
        1e-300,
        5e-324,
        -1.7976931348623157e308,
        0.1 + 0.2,
    ];
    if rng.random_bool(0.1) {
        ODD[rng.random_range(0..ODD.len())]
    } else {
        rng.random_range(-3.0..3.0) * 10f64.powi(rng.random_range(-4..4))
    }
}

fn dense(rng: &mut ChaCha8Rng, n_in: usize, n_out: usize) -> Dense {
    let w = (0..n_out)
        .map(|_| (0..n_in).map(|_| float(rng)).collect())
        .collect();
    let b = (0..n_out).map(|_| float(rng)).collect();
    Dense::new(w, b).unwrap()
}

fn leaf(rng: &mut ChaCha8Rng, task: Task, k: usize) -> Leaf {
    match task {
        Task::Classify => Leaf::Class(rng.random_range(0..k)),
        Task::Regress => Leaf::Values((0..k).map(|_| float(rng)).collect()),
    }
}

fn grow<S>(
    rng: &mut ChaCha8Rng,
    nodes: &mut Vec<Node<S>>,
    depth: usize,
    task: Task,
    k: usize,
    split: &dyn Fn(&mut ChaCha8Rng) -> S,
) -> usize {
    let at = nodes.len();
    if depth == 0 || rng.random_bool(0.3) {
        nodes.push(Node::Leaf(leaf(rng, task, k)));
        return at;
    }
    nodes.push(Node::Leaf(Leaf::Class(0)));
    let s = split(rng);
    let left = grow(rng, nodes, depth - 1, task, k, split);
    let right = grow(rng, nodes, depth - 1, task, k, split);
    nodes[at] = Node::Internal {
        split: s,
        left,
        right,
    };
    at
}

fn tree<S: Split>(
    rng: &mut ChaCha8Rng,
    d: usize,
    task: Task,
    k: usize,
    split: &dyn Fn(&mut ChaCha8Rng) -> S,
) -> Tree<S> {
    let mut nodes = Vec::new();
    grow(rng, &mut nodes, 5, task, k, split);
    Tree::new(nodes, d, k, task).unwrap()
}

fn random_policy(kind: u8, seed: u64) -> Policy {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = rng.random_range(1..6);
    let k = rng.random_range(1..4) + 1;
    let task = if rng.random_bool(0.5) {
        Task::Classify
    } else {
        Task::Regress
    };
    match kind % 4 {
        0 => {
            let l = dense(&mut rng, d, k);
            LinearPolicy::new(l.weights, l.bias, task).unwrap().into()
        }
        1 => {
            let t: AxisTree = tree(&mut rng, d, task, k, &|r| AxisSplit {
                feature: r.random_range(0..d),
                threshold: float(r),
            });
            t.into()
        }
        2 => {
            let t: ObliqueTree = tree(&mut rng, d, task, k, &|r| ObliqueSplit {
                weights: (0..d).map(|_| float(r)).collect(),
                threshold: float(r),
            });
            t.into()
        }
        _ => {
            let h1 = rng.random_range(1..6);
            let h2 = rng.random_range(1..6);
            let layers = vec![
                dense(&mut rng, d, h1),
                dense(&mut rng, h1, h2),
                dense(&mut rng, h2, k),
            ];
            ReluMlp::new(layers, task).unwrap().into()
        }
    }
}

/// Bit patterns, so NaN outputs from extreme weights still compare.
fn bits(a: Action) -> Vec<u64> {
    match a {
        Action::Discrete(i) => vec![i as u64],
        Action::Continuous(v) => v.into_iter().map(f64::to_bits).collect(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 200, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn predict_survives_round_trip(kind in 0u8..4, seed in any::<u64>(), states in prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 5), 1..20)) {
        let policy = random_policy(kind, seed);
        let text = render(&policy);
        let back = parse(&text).unwrap();
        prop_assert_eq!(&back, &policy);
        prop_assert_eq!(render(&back), text);
        for s in &states {
            let s = &s[..policy.state_dim()];
            prop_assert_eq!(bits(back.predict(s).unwrap()), bits(policy.predict(s).unwrap()));
        }
    }
}

#[test]
fn file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    for kind in 0..4 {
        let policy = random_policy(kind, 99);
        let path = dir.path().join(format!("{kind}.policy"));
        simbench::policy::save(&policy, &path).unwrap();
        assert_eq!(simbench::policy::load(&path).unwrap(), policy);
    }
}
