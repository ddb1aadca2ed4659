//! Large margin nearest neighbor: pull target neighbors close and push
//! differently labeled impostors beyond a unit margin, by projected
//! subgradient descent on `M`.

use serde::{Deserialize, Serialize};

use super::knn::target_neighbors;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::kernel::sq_dist_matrix;
use crate::linalg::{self, Mat};
use crate::metric::LinearMetric;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LmnnConfig {
    pub mu: f64,
    pub k_targets: usize,
    pub max_iterations: usize,
    /// First step as a fraction of `‖M₀‖_F/‖G₀‖_F`.
    pub initial_step: f64,
    /// Step growth after an accepted step.
    pub step_growth: f64,
    pub armijo_c1: f64,
    pub max_backtracks: usize,
    /// Stop when the relative objective decrease falls below this.
    pub tolerance: f64,
    /// Starting metric; the identity when absent.
    #[serde(skip)]
    pub init: Option<LinearMetric>,
}

impl Default for LmnnConfig {
    fn default() -> Self {
        LmnnConfig {
            mu: 1.0,
            k_targets: 3,
            max_iterations: 100,
            initial_step: 0.1,
            step_growth: 1.2,
            armijo_c1: 1e-4,
            max_backtracks: 30,
            tolerance: 1e-6,
            init: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LmnnFit {
    /// `L = Λ^{1/2} Uᵀ` from the eigendecomposition of `M`.
    pub metric: LinearMetric,
    pub m: Mat,
    /// Objective at the start and after every accepted step.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
}

/// One triple `(i, j, k)`: `j` a target neighbor of `i`, `k` an impostor
/// candidate with a different label, with its optimal slack.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Triple {
    pub i: usize,
    pub j: usize,
    pub k: usize,
    pub slack: f64,
}

/// `L` with `LᵀL = M` for symmetric PSD `M` (negative eigenvalues clamped).
pub fn psd_factor(m: &Mat) -> Mat {
    let (vals, vecs) = linalg::sym_eigen(m);
    let d = m.rows();
    Mat::from_fn(d, d, |a, b| vals[a].max(0.0).sqrt() * vecs[(b, a)])
}

/// Projection onto the PSD cone by eigenvalue clamping.
pub fn project_psd(m: &Mat) -> Mat {
    let l = psd_factor(m);
    l.tr_matmul(&l).expect("square")
}

fn pair_distances(train: &Dataset, m: &Mat) -> Result<Mat> {
    let l = LinearMetric::full(&psd_factor(m))?;
    Ok(sq_dist_matrix(&l.transform_rows(train.features())?))
}

/// Pull term, push term and the triples with their optimal slacks
/// `ξ_ijk = max(0, 1 + d²_ij − d²_ik)`, in (i, target, impostor) order.
fn terms(train: &Dataset, targets: &[Vec<usize>], m: &Mat) -> Result<(f64, f64, Vec<Triple>)> {
    let mut triples = Vec::new();
    let (pull, push) = scan(train, targets, m, |i, j, k, slack| {
        triples.push(Triple { i, j, k, slack })
    })?;
    Ok((pull, push, triples))
}

/// Visit every triple in (i, target, impostor) order; returns pull and push sums.
fn scan(
    train: &Dataset,
    targets: &[Vec<usize>],
    m: &Mat,
    mut visit: impl FnMut(usize, usize, usize, f64),
) -> Result<(f64, f64)> {
    let dist = pair_distances(train, m)?;
    let y = train.labels();
    let n = train.len();
    let (mut pull, mut push) = (0.0, 0.0);
    for i in 0..n {
        let di = dist.row(i);
        for &j in &targets[i] {
            pull += di[j];
            let margin = 1.0 + di[j];
            for k in (0..n).filter(|&k| y[k] != y[i]) {
                let slack = (margin - di[k]).max(0.0);
                push += slack;
                visit(i, j, k, slack);
            }
        }
    }
    Ok((pull, push))
}

/// Objective and, with `grad`, a subgradient.
fn evaluate(
    train: &Dataset,
    targets: &[Vec<usize>],
    m: &Mat,
    mu: f64,
    grad: bool,
) -> Result<(f64, Option<Mat>)> {
    if !grad {
        let (pull, push) = scan(train, targets, m, |_, _, _, _| {})?;
        return Ok((pull + mu * push, None));
    }
    let n = train.len();
    let mut w = Mat::zeros(n, n);
    for (i, t) in targets.iter().enumerate() {
        for &j in t {
            w[(i, j)] += 1.0;
        }
    }
    let (pull, push) = scan(train, targets, m, |i, j, k, slack| {
        if slack > 0.0 {
            w[(i, j)] += mu;
            w[(i, k)] -= mu;
        }
    })?;
    let x = train.features();
    let g = linalg::pair_scatter(&w, x, x, x, x);
    let d = g.rows();
    Ok((
        pull + mu * push,
        Some(Mat::from_fn(d, d, |a, b| 0.5 * (g[(a, b)] + g[(b, a)]))),
    ))
}

/// `Σ_{j⇝i} d²_M(x_i, x_j) + μ Σ_{j⇝i, y_k ≠ y_i} [1 + d²_M(x_i, x_j) − d²_M(x_i, x_k)]₊`.
pub fn lmnn_objective(train: &Dataset, targets: &[Vec<usize>], m: &Mat, mu: f64) -> Result<f64> {
    Ok(evaluate(train, targets, m, mu, false)?.0)
}

/// All triples with their optimal slack values at `M`.
pub fn lmnn_slacks(train: &Dataset, targets: &[Vec<usize>], m: &Mat) -> Result<Vec<Triple>> {
    Ok(terms(train, targets, m)?.2)
}

/// Constrained form `Σ d²_ij + μ Σ ξ_ijk` subject to
/// `d²_ik − d²_ij ≥ 1 − ξ_ijk`, `ξ ≥ 0`; `None` when `xi` is infeasible.
/// `xi` follows the order of [`lmnn_slacks`].
pub fn lmnn_sdp_objective(
    train: &Dataset,
    targets: &[Vec<usize>],
    m: &Mat,
    mu: f64,
    xi: &[f64],
) -> Result<Option<f64>> {
    let (pull, _, triples) = terms(train, targets, m)?;
    if triples.len() != xi.len() {
        return Err(Error::DimensionMismatch {
            expected: triples.len(),
            got: xi.len(),
        });
    }
    let dist = pair_distances(train, m)?;
    let mut push = 0.0;
    for (t, &x) in triples.iter().zip(xi) {
        let lhs = dist[(t.i, t.k)] - dist[(t.i, t.j)];
        if x < 0.0 || lhs + x < 1.0 - 1e-12 * (1.0 + lhs.abs()) {
            return Ok(None);
        }
        push += x;
    }
    Ok(Some(pull + mu * push))
}

pub fn lmnn_fit(train: &Dataset, config: &LmnnConfig) -> Result<LmnnFit> {
    if !(config.mu >= 0.0) {
        return Err(Error::InvalidArgument("mu must be nonnegative".into()));
    }
    let targets = target_neighbors(train, config.k_targets)?;
    let d = train.dim();
    let mut m = match &config.init {
        Some(l) => l.to_m(),
        None => Mat::identity(d),
    };
    let (mut f, g0) = evaluate(train, &targets, &m, config.mu, true)?;
    let mut g = g0.expect("gradient requested");
    let mut trace = vec![f];
    let gnorm = g.frobenius_sq().sqrt();
    if gnorm == 0.0 {
        return finish(m, trace, 0);
    }
    let mut t = config.initial_step * m.frobenius_sq().sqrt().max(1.0) / gnorm;
    let mut iterations = 0;
    while iterations < config.max_iterations {
        let mut accepted = None;
        for _ in 0..=config.max_backtracks {
            let trial = project_psd(&m.sub(&g.scale(t))?);
            let step = m.sub(&trial)?;
            let decrease = linalg::dot(g.as_slice(), step.as_slice());
            let (ft, _) = evaluate(train, &targets, &trial, config.mu, false)?;
            if decrease > 0.0 && ft <= f - config.armijo_c1 * decrease {
                accepted = Some((trial, ft));
                break;
            }
            t *= 0.5;
        }
        let Some((trial, ft)) = accepted else {
            break;
        };
        iterations += 1;
        let rel = (f - ft) / f.abs().max(1e-300);
        m = trial;
        f = ft;
        trace.push(f);
        if rel < config.tolerance {
            break;
        }
        g = evaluate(train, &targets, &m, config.mu, true)?
            .1
            .expect("gradient requested");
        t *= config.step_growth;
    }
    finish(m, trace, iterations)
}

fn finish(m: Mat, objective_trace: Vec<f64>, iterations: usize) -> Result<LmnnFit> {
    Ok(LmnnFit {
        metric: LinearMetric::full(&psd_factor(&m))?,
        m,
        objective_trace,
        iterations,
    })
}
