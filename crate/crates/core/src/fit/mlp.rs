use ndarray::Array2;

use super::{LabeledSet, Labels};
use crate::error::{Error, Result};
use crate::nn::{rows_to_array, weighted_cross_entropy, weighted_mse, Adam, Net};
use crate::policy::ReluMlp;
use crate::rng;

/// Optimizer settings for [`fit_mlp_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MlpOptions {
    pub iters: usize,
    pub lr: f64,
    /// `None` trains full-batch: one Adam step per iteration.
    pub batch_size: Option<usize>,
}

impl Default for MlpOptions {
    fn default() -> Self {
        MlpOptions {
            iters: 500,
            lr: 1e-2,
            batch_size: None,
        }
    }
}

/// Two-hidden-layer ReLU student trained with full-batch Adam for exactly
/// `iters` iterations from a seeded He-uniform initialization.
pub fn fit_mlp(
    data: &LabeledSet,
    hidden: (usize, usize),
    iters: usize,
    seed: u64,
) -> Result<ReluMlp> {
    fit_mlp_with(
        data,
        hidden,
        seed,
        MlpOptions {
            iters,
            ..MlpOptions::default()
        },
    )
}

pub fn fit_mlp_with(
    data: &LabeledSet,
    hidden: (usize, usize),
    seed: u64,
    opts: MlpOptions,
) -> Result<ReluMlp> {
    data.validate()?;
    if hidden.0 == 0 || hidden.1 == 0 {
        return Err(Error::Config("hidden layers need at least one unit".into()));
    }
    let (mean, scale) = data.standardization();
    let z: Vec<Vec<f64>> = data
        .states
        .iter()
        .map(|s| {
            s.iter()
                .zip(mean.iter().zip(&scale))
                .map(|(x, (m, sc))| (x - m) / sc)
                .collect()
        })
        .collect();
    let x = rows_to_array(&z);
    let sizes = [
        data.state_dim(),
        hidden.0,
        hidden.1,
        data.labels.n_outputs(),
    ];
    let mut rng = rng::stream(seed, "mlp-init");
    let mut net = Net::he_uniform(&sizes, &mut rng);
    let mut adam = Adam::new(net.n_params(), opts.lr);
    let n = data.len();
    match opts.batch_size {
        None => {
            for _ in 0..opts.iters {
                let (_, grads) = loss_and_gradient(&net, &x, &data.labels, &data.weights);
                adam.step(&mut net, &grads);
            }
        }
        Some(bs) => {
            let bs = bs.clamp(1, n);
            let mut order: Vec<usize> = (0..n).collect();
            for _ in 0..opts.iters {
                rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
                for chunk in order.chunks(bs) {
                    let xb = x.select(ndarray::Axis(0), chunk);
                    let labels = subset_labels(&data.labels, chunk);
                    let weights: Vec<f64> = chunk.iter().map(|&i| data.weights[i]).collect();
                    if weights.iter().sum::<f64>() <= 0.0 {
                        continue;
                    }
                    let (_, grads) = loss_and_gradient(&net, &xb, &labels, &weights);
                    adam.step(&mut net, &grads);
                }
            }
        }
    }
    net.fold_input_standardization(&mean, &scale);
    Ok(net.to_mlp(data.labels.task()))
}

fn subset_labels(labels: &Labels, idx: &[usize]) -> Labels {
    match labels {
        Labels::Discrete { actions, n_actions } => Labels::Discrete {
            actions: idx.iter().map(|&i| actions[i]).collect(),
            n_actions: *n_actions,
        },
        Labels::Continuous(v) => Labels::Continuous(idx.iter().map(|&i| v[i].clone()).collect()),
    }
}

/// Weighted training loss (cross-entropy or squared error) and its gradient
/// with respect to every parameter of `net`.
pub fn loss_and_gradient(
    net: &Net,
    x: &Array2<f64>,
    labels: &Labels,
    weights: &[f64],
) -> (f64, Net) {
    let cache = net.forward(x.view());
    let (loss, d_out) = match labels {
        Labels::Discrete { actions, .. } => {
            weighted_cross_entropy(cache.output(), actions, weights)
        }
        Labels::Continuous(t) => weighted_mse(cache.output(), &rows_to_array(t), weights),
    };
    (loss, net.backward(&cache, d_out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Action;
    use crate::policy::Policy;
    use rand::{Rng as _, SeedableRng};

    fn xor() -> LabeledSet {
        LabeledSet::unweighted(
            vec![
                vec![0.0, 0.0],
                vec![0.0, 1.0],
                vec![1.0, 0.0],
                vec![1.0, 1.0],
            ],
            Labels::Discrete {
                actions: vec![0, 1, 1, 0],
                n_actions: 2,
            },
        )
        .unwrap()
    }

    fn loss_of(net: &Net, data: &LabeledSet) -> f64 {
        loss_and_gradient(
            net,
            &rows_to_array(&data.states),
            &data.labels,
            &data.weights,
        )
        .0
    }

    #[test]
    fn xor_is_learned_with_pinned_seed() {
        let data = xor();
        let mlp = fit_mlp(&data, (4, 4), 500, XOR_SEED).unwrap();
        let p = Policy::from(mlp);
        for (s, a) in data.states.iter().zip([0, 1, 1, 0]) {
            assert_eq!(p.predict(s).unwrap(), Action::Discrete(a));
        }
    }

    // first seed in 0..5 for which 500 full-batch iterations separate XOR
    const XOR_SEED: u64 = 3;

    #[test]
    fn training_lowers_the_loss() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let states: Vec<Vec<f64>> = (0..60)
            .map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
            .collect();
        let targets: Vec<Vec<f64>> = states
            .iter()
            .map(|s| vec![s[0] * s[1], s[0] - s[1]])
            .collect();
        let data = LabeledSet::unweighted(states, Labels::Continuous(targets)).unwrap();
        let before = fit_mlp(&data, (8, 8), 0, 1).unwrap();
        let after = fit_mlp(&data, (8, 8), 500, 1).unwrap();
        assert!(loss_of(&Net::from_mlp(&after), &data) < loss_of(&Net::from_mlp(&before), &data));
    }

    #[test]
    fn fit_is_deterministic() {
        let data = xor();
        assert_eq!(
            fit_mlp(&data, (2, 2), 50, 3).unwrap(),
            fit_mlp(&data, (2, 2), 50, 3).unwrap()
        );
    }

    #[test]
    fn duplicate_and_weight_losses_agree() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
        let net = Net::he_uniform(&[2, 3, 3, 2], &mut rng);
        let base = xor();
        let weighted = LabeledSet::new(
            base.states.clone(),
            base.labels.clone(),
            vec![1.0, 3.0, 2.0, 1.0],
        )
        .unwrap();
        let dup = LabeledSet::unweighted(
            vec![
                vec![0.0, 0.0],
                vec![0.0, 1.0],
                vec![0.0, 1.0],
                vec![0.0, 1.0],
                vec![1.0, 0.0],
                vec![1.0, 0.0],
                vec![1.0, 1.0],
            ],
            Labels::Discrete {
                actions: vec![0, 1, 1, 1, 1, 1, 0],
                n_actions: 2,
            },
        )
        .unwrap();
        assert!((loss_of(&net, &weighted) - loss_of(&net, &dup)).abs() < 1e-12);
    }
}
