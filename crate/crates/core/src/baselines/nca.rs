//! Neighborhood component analysis: maximize the expected leave-one-out
//! accuracy of a stochastic nearest-neighbor rule.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::kernel::sq_dist_matrix;
use crate::linalg::{self, Mat};
use crate::metric::LinearMetric;
use crate::optim::{self, Control, Method, OptimOptions};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NcaConfig {
    pub max_iterations: usize,
    pub grad_tolerance: f64,
    pub optimizer: Method,
    /// Larger training sets are rejected (the objective is quadratic in n).
    pub max_points: usize,
}

impl Default for NcaConfig {
    fn default() -> Self {
        NcaConfig {
            max_iterations: 100,
            grad_tolerance: 1e-8,
            optimizer: Method::ConjugateGradient,
            max_points: 5000,
        }
    }
}

/// Row-stochastic neighbor probabilities `p_ij ∝ exp(−‖L(x_i − x_j)‖²)`,
/// `p_ii = 0`.
pub fn nca_probabilities(train: &Dataset, metric: &LinearMetric) -> Result<Mat> {
    let z = metric.transform_rows(train.features())?;
    Ok(softmax_rows(&sq_dist_matrix(&z)))
}

fn softmax_rows(dist: &Mat) -> Mat {
    let n = dist.rows();
    let mut p = Mat::zeros(n, n);
    for i in 0..n {
        let di = dist.row(i);
        let lo = (0..n)
            .filter(|&k| k != i)
            .map(|k| di[k])
            .fold(f64::INFINITY, f64::min);
        let pi = p.row_mut(i);
        let mut total = 0.0;
        for k in 0..n {
            if k != i {
                let e = lo - di[k];
                // terms this small vanish after normalization; skipping them avoids subnormals
                pi[k] = if e < -690.0 { 0.0 } else { e.exp() };
                total += pi[k];
            }
        }
        for v in pi.iter_mut() {
            *v /= total;
        }
    }
    p
}

/// Expected leave-one-out accuracy `A = (1/n) Σ_i Σ_{j: y_j = y_i} p_ij` and
/// its gradient with respect to the explicit matrix `L`.
pub fn nca_objective(train: &Dataset, metric: &LinearMetric) -> Result<(f64, Mat)> {
    let n = train.len();
    if n < 2 {
        return Err(Error::Data("NCA needs at least two points".into()));
    }
    let y = train.labels();
    let x = train.features();
    let z = metric.transform_rows(x)?;
    let p = softmax_rows(&sq_dist_matrix(&z));
    let same: Vec<f64> = (0..n)
        .map(|i| (0..n).filter(|&j| y[j] == y[i]).map(|j| p[(i, j)]).sum())
        .collect();
    let a = same.iter().sum::<f64>() / n as f64;
    // ∂A/∂L = Σ_ik W_ik L(x_i − x_k)(x_i − x_k)ᵀ
    let scale = 2.0 / n as f64;
    let w = Mat::from_fn(n, n, |i, k| {
        let pik = p[(i, k)];
        let hit = if y[k] == y[i] { pik } else { 0.0 };
        scale * (same[i] * pik - hit)
    });
    Ok((a, linalg::pair_scatter(&w, &z, x, &z, x)))
}

/// Maximize the expected leave-one-out accuracy starting from `init`; the
/// result keeps the shape of `init`.
pub fn nca_fit(train: &Dataset, init: &LinearMetric, config: &NcaConfig) -> Result<LinearMetric> {
    if train.len() > config.max_points {
        return Err(Error::InvalidArgument(format!(
            "NCA is limited to {} points, got {}",
            config.max_points,
            train.len()
        )));
    }
    let objective = |theta: &[f64]| -> Result<(f64, Vec<f64>)> {
        let m = init.with_params(theta)?;
        let (a, g) = nca_objective(train, &m)?;
        let grad = m.project_gradient(&g)?.into_iter().map(|v| -v).collect();
        Ok((-a, grad))
    };
    let opts = OptimOptions {
        method: config.optimizer,
        max_iterations: config.max_iterations,
        grad_tolerance: config.grad_tolerance,
        ..Default::default()
    };
    let out = optim::minimize(objective, init.params().to_vec(), &opts, |_| {
        Control::Continue
    })?;
    log::debug!(
        "nca: A_loo {:.4} after {} iterations, {} evaluations",
        -out.value,
        out.iterations,
        out.evaluations
    );
    init.with_params(&out.x)
}
