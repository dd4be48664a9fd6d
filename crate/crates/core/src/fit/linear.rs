use super::{LabeledSet, Labels};
use crate::error::Result;
use crate::policy::{Dense, LinearPolicy, Task};

const MAX_STEPS: usize = 2000;
const GRAD_TOL: f64 = 1e-6;
const RIDGE: f64 = 1e-8;

/// Linear student. Classification: one-vs-rest logistic regression trained by
/// full-batch gradient descent on the weighted cross-entropy. Regression:
/// weighted least squares via ridge-stabilized normal equations.
///
/// Both fit on standardized features and fold the standardization back into
/// the returned weights, so the policy consumes raw states.
pub fn fit_linear(data: &LabeledSet) -> Result<LinearPolicy> {
    data.validate()?;
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
    let (weights, bias, task) = match &data.labels {
        Labels::Discrete { actions, n_actions } => {
            let mut weights = Vec::with_capacity(*n_actions);
            let mut bias = Vec::with_capacity(*n_actions);
            for class in 0..*n_actions {
                let targets: Vec<f64> = actions
                    .iter()
                    .map(|&a| if a == class { 1.0 } else { 0.0 })
                    .collect();
                let (w, b) = logistic(&z, &targets, &data.weights);
                weights.push(w);
                bias.push(b);
            }
            (weights, bias, Task::Classify)
        }
        Labels::Continuous(targets) => {
            let k = targets[0].len();
            let mut weights = Vec::with_capacity(k);
            let mut bias = Vec::with_capacity(k);
            for out in 0..k {
                let y: Vec<f64> = targets.iter().map(|t| t[out]).collect();
                let (w, b) = least_squares(&z, &y, &data.weights);
                weights.push(w);
                bias.push(b);
            }
            (weights, bias, Task::Regress)
        }
    };
    // w.(x - m)/s + b  ==  (w/s).x + (b - sum w m / s)
    let mut layer = Dense { weights, bias };
    for (row, b) in layer.weights.iter_mut().zip(layer.bias.iter_mut()) {
        for j in 0..row.len() {
            row[j] /= scale[j];
            *b -= row[j] * mean[j];
        }
    }
    Ok(LinearPolicy { layer, task })
}

fn sigmoid(m: f64) -> f64 {
    if m >= 0.0 {
        1.0 / (1.0 + (-m).exp())
    } else {
        let e = m.exp();
        e / (1.0 + e)
    }
}

/// Binary logistic regression on standardized inputs.
fn logistic(z: &[Vec<f64>], y: &[f64], weights: &[f64]) -> (Vec<f64>, f64) {
    let d = z[0].len();
    let total: f64 = weights.iter().sum();
    // step = 1/L with L bounded by a quarter of the trace of E[x x^T] (unit-variance features plus intercept)
    let lr = 4.0 / (d as f64 + 1.0);
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut gw = vec![0.0; d];
    for _ in 0..MAX_STEPS {
        gw.iter_mut().for_each(|g| *g = 0.0);
        let mut gb = 0.0;
        for ((x, t), sw) in z.iter().zip(y).zip(weights) {
            let margin = x.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>() + b;
            let r = sw * (sigmoid(margin) - t);
            for j in 0..d {
                gw[j] += r * x[j];
            }
            gb += r;
        }
        gw.iter_mut().for_each(|g| *g /= total);
        gb /= total;
        let norm = (gw.iter().map(|g| g * g).sum::<f64>() + gb * gb).sqrt();
        if norm < GRAD_TOL {
            break;
        }
        for j in 0..d {
            w[j] -= lr * gw[j];
        }
        b -= lr * gb;
    }
    (w, b)
}

fn least_squares(z: &[Vec<f64>], y: &[f64], weights: &[f64]) -> (Vec<f64>, f64) {
    let d = z[0].len();
    let n = d + 1;
    let mut a = vec![vec![0.0; n]; n];
    let mut rhs = vec![0.0; n];
    for ((x, t), w) in z.iter().zip(y).zip(weights) {
        let row: Vec<f64> = x.iter().copied().chain(std::iter::once(1.0)).collect();
        for i in 0..n {
            for j in 0..n {
                a[i][j] += w * row[i] * row[j];
            }
            rhs[i] += w * row[i] * t;
        }
    }
    for (i, r) in a.iter_mut().enumerate() {
        r[i] += RIDGE;
    }
    let mut beta = solve(a, rhs);
    let b = beta.pop().unwrap_or(0.0);
    (beta, b)
}

/// Gaussian elimination with partial pivoting; singular pivots yield zeros.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        let p = a[col][col];
        if p.abs() < 1e-300 {
            continue;
        }
        for row in col + 1..n {
            let f = a[row][col] / p;
            if f != 0.0 {
                for k in col..n {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| a[i][k] * x[k]).sum();
        x[i] = if a[i][i].abs() < 1e-300 {
            0.0
        } else {
            (b[i] - s) / a[i][i]
        };
    }
    x
}
