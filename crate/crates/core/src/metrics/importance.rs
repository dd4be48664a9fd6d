use rand::Rng as _;

use crate::env::EnvSpec;
use crate::error::{Error, Result};
use crate::fit::{grow_regression_forest_tree, LabeledSet, Labels};
use crate::rng::stream;

/// Environment attributes used to explain interpretability scores.
pub const ATTRIBUTES: [&str; 7] = [
    "state_dim",
    "action_dim",
    "expert_return",
    "random_return",
    "solve_threshold",
    "expert_solve_gap",
    "expert_episode_length",
];

pub const FOREST_TREES: usize = 100;

/// Attribute vector of one environment, in [`ATTRIBUTES`] order.
pub fn env_attributes(
    spec: &EnvSpec,
    expert_return: f64,
    random_return: f64,
    expert_episode_length: f64,
) -> Vec<f64> {
    let threshold = spec.expert_target();
    vec![
        spec.state_dim as f64,
        spec.action_kind.arity() as f64,
        expert_return,
        random_return,
        threshold,
        expert_return - threshold,
        expert_episode_length,
    ]
}

/// Attributes ranked by importance; values sum to 100.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceTable {
    pub rows: Vec<(String, f64)>,
}

impl ImportanceTable {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.rows.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    pub fn rank(&self, name: &str) -> Option<usize> {
        self.rows.iter().position(|(n, _)| n == name)
    }
}

/// Random-forest impurity importance: bagged regression trees with
/// per-split feature subsampling, total weighted impurity decrease per
/// attribute, normalized to sum to 100. A constant target yields uniform
/// importances.
pub fn feature_importance(
    names: &[&str],
    rows: &[Vec<f64>],
    target: &[f64],
    seed: u64,
) -> Result<ImportanceTable> {
    let p = names.len();
    if rows.len() != target.len() || rows.is_empty() || rows.iter().any(|r| r.len() != p) || p == 0
    {
        return Err(Error::Shape {
            expected: p,
            got: rows.first().map_or(0, Vec::len),
        });
    }
    let mut totals = vec![0.0; p];
    let constant = target.iter().all(|&t| t == target[0]);
    if constant {
        log::warn!("constant importance target; reporting uniform importances");
        totals = vec![1.0; p];
    } else {
        let labels = Labels::Continuous(target.iter().map(|&t| vec![t]).collect());
        let mut data = LabeledSet::unweighted(rows.to_vec(), labels)?;
        let mut rng = stream(seed, "forest");
        let max_features = (2 * p).div_ceil(3).max(1);
        let n = rows.len();
        for _ in 0..FOREST_TREES {
            data.weights.iter_mut().for_each(|w| *w = 0.0);
            for _ in 0..n {
                data.weights[rng.random_range(0..n)] += 1.0;
            }
            let tree = grow_regression_forest_tree(&data, max_features, &mut rng)?;
            let sum: f64 = tree.importances.iter().sum();
            if sum > 0.0 {
                totals
                    .iter_mut()
                    .zip(&tree.importances)
                    .for_each(|(t, v)| *t += v / sum);
            }
        }
        if totals.iter().sum::<f64>() == 0.0 {
            totals = vec![1.0; p];
        }
    }
    let sum: f64 = totals.iter().sum();
    let mut out: Vec<(String, f64)> = names
        .iter()
        .zip(totals)
        .map(|(n, v)| (n.to_string(), 100.0 * v / sum))
        .collect();
    out.sort_by(|a, b| b.1.total_cmp(&a.1));
    Ok(ImportanceTable { rows: out })
}
