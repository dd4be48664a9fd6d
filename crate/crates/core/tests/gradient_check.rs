//! Backpropagation against central finite differences on random small
//! networks, for both training losses.

use ndarray::Array2;
use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use simbench::fit::{loss_and_gradient, Labels};
use simbench::nn::Net;

const H: f64 = 1e-6;
const TOL: f64 = 1e-5;

/// ||a - n|| / (||a|| + ||n||) over all parameters.
fn relative_error(net: &Net, x: &Array2<f64>, labels: &Labels, weights: &[f64]) -> f64 {
    let analytic = loss_and_gradient(net, x, labels, weights).1.flat();
    let base = net.flat();
    let mut probe = net.clone();
    let mut num = Vec::with_capacity(base.len());
    for i in 0..base.len() {
        let mut p = base.clone();
        p[i] = base[i] + H;
        probe.set_flat(&p);
        let up = loss_and_gradient(&probe, x, labels, weights).0;
        p[i] = base[i] - H;
        probe.set_flat(&p);
        let down = loss_and_gradient(&probe, x, labels, weights).0;
        num.push((up - down) / (2.0 * H));
    }
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(&num).map(|(a, n)| a - n).collect();
    norm(&diff) / (norm(&analytic) + norm(&num)).max(1e-12)
}

fn random_case(seed: u64, regress: bool) -> (Net, Array2<f64>, Labels, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = rng.random_range(1..5);
    let k = rng.random_range(2..4);
    let sizes = [d, rng.random_range(1..6), rng.random_range(1..6), k];
    let mut net = Net::he_uniform(&sizes, &mut rng);
    // Nonzero biases so hidden units sit away from the kink at zero.
    let mut p = net.flat();
    p.iter_mut().for_each(|v| *v += rng.random_range(-0.3..0.3));
    net.set_flat(&p);
    let n = rng.random_range(3..12);
    let x = Array2::from_shape_fn((n, d), |_| rng.random_range(-2.0..2.0));
    let labels = if regress {
        Labels::Continuous(
            (0..n)
                .map(|_| (0..k).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect(),
        )
    } else {
        Labels::Discrete {
            actions: (0..n).map(|_| rng.random_range(0..k)).collect(),
            n_actions: k,
        }
    };
    let weights = (0..n).map(|_| rng.random_range(0.1..2.0)).collect();
    (net, x, labels, weights)
}

#[test]
fn cross_entropy_gradients_match_finite_differences() {
    for seed in 0..20 {
        let (net, x, labels, w) = random_case(seed, false);
        let e = relative_error(&net, &x, &labels, &w);
        assert!(e < TOL, "seed {seed}: relative error {e:e}");
    }
}

#[test]
fn squared_error_gradients_match_finite_differences() {
    for seed in 100..120 {
        let (net, x, labels, w) = random_case(seed, true);
        let e = relative_error(&net, &x, &labels, &w);
        assert!(e < TOL, "seed {seed}: relative error {e:e}");
    }
}
