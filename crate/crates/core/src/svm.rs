//! Hard-margin kernel SVM on the ridged kernel `K + I/C`, which is the
//! L2-slack soft-margin SVM in disguise.
//!
//! The solver is an active-set Newton method. With `β_j = α_j y_j`, a margin
//! set `S` determines the Newton point by the bordered system
//!
//! ```text
//! (K_SS + I/C) β_S + b·1 = y_S,   1ᵀβ_S = 0
//! ```
//!
//! Starting from `β = 0` (every point inside the margin) the iteration moves to
//! the Newton point of the current set, with an exact line search on the
//! primal objective `½βᵀKβ + (C/2)Σ max(0, 1 − y_i f_i)²` as a safeguard, and
//! recomputes `S = {i : y_i f_i < 1}` until the set is a fixed point.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{check_dim, Error, Result};
use crate::kernel::{self, KernelMatrix};
use crate::linalg::{self, Cholesky, Mat};
use crate::metric::LinearMetric;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// Accepted violation of the margin equations.
    pub tolerance: f64,
    /// Newton rounds before giving up.
    pub max_iterations: usize,
    /// `α_i` above this counts as a support vector.
    pub support_threshold: f64,
    /// Diagonal shift used when a factorization fails.
    pub jitter: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tolerance: 1e-8,
            max_iterations: 100,
            support_threshold: 1e-10,
            jitter: 1e-10,
        }
    }
}

/// `sign` with `sign(0) = +1`.
#[inline]
pub fn sign(h: f64) -> f64 {
    if h >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

// hysteresis on the margin test so points sitting on the margin do not flicker
const MARGIN_EPS: f64 = 1e-12;

/// Raw solver output on a precomputed kernel.
#[derive(Clone, Debug, PartialEq)]
pub struct DualSolution {
    /// Dual coefficients, one per training point.
    pub alpha: Vec<f64>,
    pub bias: f64,
    /// Indices with `α_i > support_threshold`, ascending.
    pub support: Vec<usize>,
    pub iterations: usize,
}

impl DualSolution {
    /// `Σ_j α_j y_j k_j + b` for a row of kernel values against the training points.
    pub fn decision_from_row(&self, labels: &[f64], krow: &[f64]) -> f64 {
        self.support
            .iter()
            .map(|&j| self.alpha[j] * labels[j] * krow[j])
            .sum::<f64>()
            + self.bias
    }

    /// Dual objective `Σα − ½ αᵀ(Y(K + I/C)Y)α`.
    pub fn dual_objective(&self, kernel: &Mat, labels: &[f64], c: f64) -> f64 {
        let mut quad = 0.0;
        for &i in &self.support {
            let mut s = 0.0;
            for &j in &self.support {
                s += kernel[(i, j)] * self.alpha[j] * labels[j];
            }
            quad += self.alpha[i] * labels[i] * s + self.alpha[i] * self.alpha[i] / c;
        }
        self.alpha.iter().sum::<f64>() - 0.5 * quad
    }

    /// Largest KKT violation: margin equation residual on the support set,
    /// margin shortfall off it, negativity of α, and `|Σ α_i y_i|`.
    pub fn max_kkt_violation(&self, kernel: &Mat, labels: &[f64], c: f64) -> f64 {
        let n = labels.len();
        let mut worst = self
            .alpha
            .iter()
            .zip(labels)
            .map(|(a, y)| a * y)
            .sum::<f64>()
            .abs();
        for i in 0..n {
            let f = self.decision_from_row(labels, kernel.row(i));
            let ridged = y_margin(labels[i], f + self.alpha[i] * labels[i] / c);
            let v = if self.alpha[i] > 0.0 {
                (ridged - 1.0).abs()
            } else {
                (1.0 - ridged).max(0.0)
            };
            worst = worst.max(v).max(-self.alpha[i]);
        }
        worst
    }
}

#[inline]
fn y_margin(y: f64, f: f64) -> f64 {
    y * f
}

/// Cholesky factor of `K_SS + I/C` together with the two solves the bordered
/// system needs.
#[derive(Clone, Debug)]
pub struct BorderedFactor {
    set: Vec<usize>,
    chol: Cholesky,
    // (K_SS + I/C)⁻¹ 1
    inv_ones: Vec<f64>,
    ones_inv_ones: f64,
}

impl BorderedFactor {
    pub fn new(kernel: &Mat, set: &[usize], c: f64, jitter: f64) -> Result<Self> {
        let s = set.len();
        let mut a = vec![0.0; s * s];
        for (p, &i) in set.iter().enumerate() {
            let krow = kernel.row(i);
            // lower triangle is all the factorization reads
            for (q, &j) in set.iter().enumerate().take(p + 1) {
                a[p * s + q] = krow[j];
            }
            a[p * s + p] += 1.0 / c;
        }
        let chol = Cholesky::factor_with_jitter(&a, s, jitter)?;
        let inv_ones = chol.solve(&vec![1.0; s]);
        let ones_inv_ones: f64 = inv_ones.iter().sum();
        if !(ones_inv_ones.abs() > 0.0) || !ones_inv_ones.is_finite() {
            return Err(Error::SingularSystem);
        }
        Ok(BorderedFactor {
            set: set.to_vec(),
            chol,
            inv_ones,
            ones_inv_ones,
        })
    }

    pub fn set(&self) -> &[usize] {
        &self.set
    }

    /// Newton point `(β_S, b)` for right-hand side `y_S`.
    pub fn newton_point(&self, labels: &[f64]) -> (Vec<f64>, f64) {
        let ys: Vec<f64> = self.set.iter().map(|&i| labels[i]).collect();
        let v1 = self.chol.solve(&ys);
        let b = v1.iter().sum::<f64>() / self.ones_inv_ones;
        let beta = v1
            .iter()
            .zip(&self.inv_ones)
            .map(|(a, o)| a - b * o)
            .collect();
        (beta, b)
    }

    /// Solve `H (u_a, u_b) = (g_a, g_b)` with `H = [[Y(K_SS+I/C)Y, y], [yᵀ, 0]]`.
    pub fn solve_h(&self, labels: &[f64], g_a: &[f64], g_b: f64) -> (Vec<f64>, f64) {
        let yg: Vec<f64> = self
            .set
            .iter()
            .zip(g_a)
            .map(|(&i, g)| labels[i] * g)
            .collect();
        let t = self.chol.solve(&yg);
        let u_b = (t.iter().sum::<f64>() - g_b) / self.ones_inv_ones;
        let u_a = self
            .set
            .iter()
            .zip(t.iter().zip(&self.inv_ones))
            .map(|(&i, (ti, oi))| labels[i] * (ti - u_b * oi))
            .collect();
        (u_a, u_b)
    }
}

/// Train on a precomputed (un-ridged) square kernel.
///
/// `warm` seeds the first margin set (e.g. the support set of a nearby
/// problem); otherwise all points start in the margin set.
pub fn solve_dual(
    kernel: &Mat,
    labels: &[f64],
    c: f64,
    opts: &SolverOptions,
    warm: Option<&[usize]>,
) -> Result<DualSolution> {
    let n = labels.len();
    check_dim(n, kernel.rows())?;
    check_dim(n, kernel.cols())?;
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "C must be positive and finite, got {c}"
        )));
    }
    if n == 0 {
        return Err(Error::Data("empty training set".into()));
    }

    let mut set: Vec<usize> = match warm {
        Some(w) if !w.is_empty() => {
            let mut w = w.to_vec();
            w.retain(|&i| i < n);
            w.sort_unstable();
            w.dedup();
            w
        }
        _ => (0..n).collect(),
    };
    let mut beta = vec![0.0; n];
    let mut b = 0.0;
    let mut out = vec![0.0; n];
    let mut last_violation = f64::INFINITY;

    for iter in 1..=opts.max_iterations {
        let factor = BorderedFactor::new(kernel, &set, c, opts.jitter)?;
        let (beta_s, b_new) = factor.newton_point(labels);
        let mut beta_new = vec![0.0; n];
        for (&i, v) in set.iter().zip(&beta_s) {
            beta_new[i] = *v;
        }
        let mut out_new = vec![b_new; n];
        for (k, o) in out_new.iter_mut().enumerate() {
            let krow = kernel.row(k);
            *o += set
                .iter()
                .zip(&beta_s)
                .map(|(&j, v)| krow[j] * v)
                .sum::<f64>();
        }

        let newton_set = margin_set(labels, &out_new);
        if newton_set == set {
            // the Newton point satisfies its own margin conditions: optimal
            return Ok(finish(&beta_new, b_new, &set, labels, opts, iter));
        }

        let mut t = line_search(&beta, b, &out, &beta_new, b_new, &out_new, labels, c);
        if t > 1.0 - 1e-9 {
            t = 1.0;
        }
        let new_set = if t >= 1.0 {
            beta = beta_new;
            b = b_new;
            out = out_new;
            newton_set
        } else {
            for k in 0..n {
                beta[k] += t * (beta_new[k] - beta[k]);
                out[k] += t * (out_new[k] - out[k]);
            }
            b += t * (b_new - b);
            let moved = margin_set(labels, &out);
            // an unchanged set would reproduce the same Newton point
            if moved == set {
                newton_set
            } else {
                moved
            }
        };
        last_violation = (0..n)
            .filter(|i| set.binary_search(i).is_err())
            .map(|i| 1.0 - y_margin(labels[i], out[i]))
            .fold(0.0, f64::max);
        if new_set.is_empty() {
            // only possible when every point already clears the margin at β = 0,
            // which a two-class problem cannot do
            return Err(Error::SolverNotConverged {
                iterations: iter,
                support_size: 0,
                max_violation: last_violation,
            });
        }
        set = new_set;
    }
    Err(Error::SolverNotConverged {
        iterations: opts.max_iterations,
        support_size: set.len(),
        max_violation: last_violation,
    })
}

fn margin_set(labels: &[f64], out: &[f64]) -> Vec<usize> {
    (0..labels.len())
        .filter(|&i| y_margin(labels[i], out[i]) < 1.0 - MARGIN_EPS)
        .collect()
}

fn finish(
    beta: &[f64],
    b: f64,
    set: &[usize],
    labels: &[f64],
    opts: &SolverOptions,
    iterations: usize,
) -> DualSolution {
    let n = labels.len();
    let mut alpha = vec![0.0; n];
    let mut support = Vec::with_capacity(set.len());
    for &i in set {
        let a = beta[i] * labels[i];
        if a > opts.support_threshold {
            alpha[i] = a;
            support.push(i);
        }
    }
    DualSolution {
        alpha,
        bias: b,
        support,
        iterations,
    }
}

/// Exact minimizer over `t ∈ [0, 1]` of the primal objective along the
/// segment between two iterates. The objective is convex and piecewise
/// quadratic in `t`; its derivative is bisected.
#[allow(clippy::too_many_arguments)]
fn line_search(
    beta: &[f64],
    b: f64,
    out: &[f64],
    beta_new: &[f64],
    b_new: f64,
    out_new: &[f64],
    labels: &[f64],
    c: f64,
) -> f64 {
    let n = labels.len();
    let db = b_new - b;
    // with Kβ = f − b·1: βᵀKΔβ and ΔβᵀKΔβ from outputs alone
    let mut cross = 0.0;
    let mut curv = 0.0;
    let mut d_out = vec![0.0; n];
    for k in 0..n {
        let dbeta = beta_new[k] - beta[k];
        d_out[k] = out_new[k] - out[k];
        cross += dbeta * (out[k] - b);
        curv += dbeta * (d_out[k] - db);
    }
    let slope = |t: f64| -> f64 {
        let mut g = cross + t * curv;
        for k in 0..n {
            let y = labels[k];
            let viol = 1.0 - y * (out[k] + t * d_out[k]);
            if viol > 0.0 {
                g -= c * y * d_out[k] * viol;
            }
        }
        g
    };
    if slope(1.0) <= 0.0 {
        return 1.0;
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..64 {
        let mid = 0.5 * (lo + hi);
        if slope(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    lo
}

/// A trained classifier.
#[derive(Clone, Debug)]
pub struct SvmModel {
    alpha: Vec<f64>,
    bias: f64,
    support_idx: Vec<usize>,
    metric: LinearMetric,
    c_value: f64,
    train: Arc<Dataset>,
    iterations: usize,
    // L x_j for support vectors, and α_j y_j
    sv_z: Mat,
    sv_coef: Vec<f64>,
}

impl SvmModel {
    pub fn fit(
        train: Arc<Dataset>,
        metric: &LinearMetric,
        c: f64,
        opts: &SolverOptions,
    ) -> Result<Self> {
        Self::fit_warm(train, metric, c, opts, None)
    }

    pub fn fit_warm(
        train: Arc<Dataset>,
        metric: &LinearMetric,
        c: f64,
        opts: &SolverOptions,
        warm: Option<&[usize]>,
    ) -> Result<Self> {
        if !train.has_both_classes() {
            return Err(Error::Data("training set needs both classes".into()));
        }
        let z = metric.transform_rows(train.features())?;
        let k = kernel::gram_from_transformed(&z);
        let sol = solve_dual(k.values(), train.labels(), c, opts, warm)?;
        Ok(Self::from_solution_transformed(
            train,
            metric.clone(),
            c,
            sol,
            &z,
        ))
    }

    /// Wrap a solver result; `SvmModel` recomputes the transformed support rows.
    pub fn from_solution(
        train: Arc<Dataset>,
        metric: LinearMetric,
        c: f64,
        sol: DualSolution,
    ) -> Result<Self> {
        check_dim(train.len(), sol.alpha.len())?;
        let z = metric.transform_rows(train.features())?;
        Ok(Self::from_solution_transformed(train, metric, c, sol, &z))
    }

    fn from_solution_transformed(
        train: Arc<Dataset>,
        metric: LinearMetric,
        c: f64,
        sol: DualSolution,
        z: &Mat,
    ) -> Self {
        let sv_z = z.select_rows(&sol.support);
        let sv_coef = sol
            .support
            .iter()
            .map(|&j| sol.alpha[j] * train.labels()[j])
            .collect();
        SvmModel {
            alpha: sol.alpha,
            bias: sol.bias,
            support_idx: sol.support,
            metric,
            c_value: c,
            train,
            iterations: sol.iterations,
            sv_z,
            sv_coef,
        }
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn support_idx(&self) -> &[usize] {
        &self.support_idx
    }

    pub fn metric(&self) -> &LinearMetric {
        &self.metric
    }

    pub fn c_value(&self) -> f64 {
        self.c_value
    }

    pub fn train(&self) -> &Arc<Dataset> {
        &self.train
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// Transformed support vectors `L x_j`.
    pub fn support_transformed(&self) -> &Mat {
        &self.sv_z
    }

    /// Decision value `h(x)` before the sign, on the un-ridged kernel.
    pub fn decision_function(&self, x: &[f64]) -> Result<f64> {
        let z = self.metric.transform(x)?;
        Ok(self.decision_transformed(&z))
    }

    /// Decision value at an already transformed point `z = L x`.
    pub fn decision_transformed(&self, z: &[f64]) -> f64 {
        let mut h = self.bias;
        for (p, coef) in self.sv_coef.iter().enumerate() {
            h += coef * (-linalg::sq_dist(self.sv_z.row(p), z)).exp();
        }
        h
    }

    pub fn decision_batch(&self, x: &Mat) -> Result<Vec<f64>> {
        let z = self.metric.transform_rows(x)?;
        Ok((0..z.rows())
            .map(|i| self.decision_transformed(z.row(i)))
            .collect())
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        Ok(sign(self.decision_function(x)?))
    }

    /// Decision value at training point `i` on the ridged kernel; equals
    /// `y_i` exactly (up to solver tolerance) for support vectors.
    pub fn training_decision_ridged(&self, i: usize) -> f64 {
        let z = self
            .metric
            .transform(self.train.row(i))
            .expect("training row has metric dimension");
        self.decision_transformed(&z) + self.alpha[i] * self.train.labels()[i] / self.c_value
    }

    /// Fraction of sign mismatches on `eval`.
    pub fn error_rate(&self, eval: &Dataset) -> Result<f64> {
        if eval.is_empty() {
            return Err(Error::Data("empty evaluation set".into()));
        }
        let h = self.decision_batch(eval.features())?;
        Ok(error_rate_from_decisions(&h, eval.labels()))
    }

    /// Ridged training kernel restricted to the support set.
    fn support_kernel(&self) -> Mat {
        let s = self.support_idx.len();
        let mut k = Mat::zeros(s, s);
        for p in 0..s {
            for q in 0..s {
                k[(p, q)] = (-linalg::sq_dist(self.sv_z.row(p), self.sv_z.row(q))).exp();
            }
            k[(p, p)] += 1.0 / self.c_value;
        }
        k
    }

    /// `H = [[K̄, y], [yᵀ, 0]]` over the support vectors with
    /// `K̄_pq = y_p y_q (K + I/C)_pq`.
    pub fn bordered_system(&self) -> BorderedSystem {
        let s = self.support_idx.len();
        let y: Vec<f64> = self
            .support_idx
            .iter()
            .map(|&i| self.train.labels()[i])
            .collect();
        let k = self.support_kernel();
        let mut h = Mat::zeros(s + 1, s + 1);
        for p in 0..s {
            for q in 0..s {
                h[(p, q)] = y[p] * y[q] * k[(p, q)];
            }
            h[(p, s)] = y[p];
            h[(s, p)] = y[p];
        }
        let mut rhs = vec![1.0; s + 1];
        rhs[s] = 0.0;
        BorderedSystem {
            h,
            rhs,
            support: self.support_idx.clone(),
        }
    }

    /// Dual objective of the fitted solution.
    pub fn dual_objective(&self) -> f64 {
        let s = self.support_idx.len();
        let k = self.support_kernel();
        let mut quad = 0.0;
        for p in 0..s {
            for q in 0..s {
                quad += self.sv_coef[p] * self.sv_coef[q] * k[(p, q)];
            }
        }
        self.alpha.iter().sum::<f64>() - 0.5 * quad
    }

    pub fn to_json(&self, train_digest: &str) -> ModelJson {
        ModelJson {
            alpha: self.alpha.clone(),
            b: self.bias,
            support_idx: self.support_idx.clone(),
            c: self.c_value,
            metric: self.metric.clone(),
            train_digest: train_digest.to_string(),
            extra: None,
        }
    }

    /// Rebuild from JSON given the training rows the model was fitted on.
    pub fn from_json(json: &ModelJson, train: Arc<Dataset>) -> Result<Self> {
        check_dim(train.len(), json.alpha.len())?;
        if json.support_idx.iter().any(|&i| i >= train.len()) {
            return Err(Error::Data("support index out of range".into()));
        }
        let sol = DualSolution {
            alpha: json.alpha.clone(),
            bias: json.b,
            support: json.support_idx.clone(),
            iterations: 0,
        };
        Self::from_solution(train, json.metric.clone(), json.c, sol)
    }
}

pub fn error_rate_from_decisions(h: &[f64], labels: &[f64]) -> f64 {
    let wrong = h
        .iter()
        .zip(labels)
        .filter(|(h, y)| sign(**h) != **y)
        .count();
    wrong as f64 / labels.len() as f64
}

/// The bordered linear system characterizing the solution on its support set.
#[derive(Clone, Debug)]
pub struct BorderedSystem {
    pub h: Mat,
    pub rhs: Vec<f64>,
    pub support: Vec<usize>,
}

impl BorderedSystem {
    /// `(α_S, b)` from a dense LU solve of `H`.
    pub fn solve(&self) -> Result<Vec<f64>> {
        use faer::linalg::solvers::Solve;
        let n = self.rhs.len();
        let rhs = faer::Mat::from_fn(n, 1, |i, _| self.rhs[i]);
        let x = self.h.to_faer().partial_piv_lu().solve(&rhs);
        linalg::clear_upper_state();
        let out: Vec<f64> = (0..n).map(|i| x[(i, 0)]).collect();
        if out.iter().all(|v| v.is_finite()) {
            Ok(out)
        } else {
            Err(Error::SingularSystem)
        }
    }

    /// 1-norm condition number `‖H‖₁‖H⁻¹‖₁`.
    pub fn condition_estimate(&self) -> f64 {
        use faer::linalg::solvers::DenseSolveCore;
        let h = self.h.to_faer();
        let norm1 = |m: faer::MatRef<'_, f64>| {
            (0..m.ncols())
                .map(|j| (0..m.nrows()).map(|i| m[(i, j)].abs()).sum::<f64>())
                .fold(0.0, f64::max)
        };
        let inv = h.partial_piv_lu().inverse();
        linalg::clear_upper_state();
        let c = norm1(h.as_ref()) * norm1(inv.as_ref());
        if c.is_finite() {
            c
        } else {
            f64::INFINITY
        }
    }
}

/// Model file layout.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelJson {
    pub alpha: Vec<f64>,
    pub b: f64,
    pub support_idx: Vec<usize>,
    #[serde(rename = "C")]
    pub c: f64,
    pub metric: LinearMetric,
    pub train_digest: String,
    /// Provenance needed to rebuild the training rows (source file, row
    /// indices, feature scaling).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extra: Option<serde_json::Value>,
}

/// Convenience: gram matrix of `train` under `metric`.
pub fn training_kernel(train: &Dataset, metric: &LinearMetric) -> Result<KernelMatrix> {
    kernel::gram(metric, train.features())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::MetricShape;

    fn toy() -> Arc<Dataset> {
        Arc::new(Dataset::from_rows(&[[-1.0], [1.0]], &[-1.0, 1.0]).unwrap())
    }

    pub(crate) fn random_problem(n: usize, d: usize, seed: u64) -> Dataset {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.gen_range(-1.5..1.5)).collect())
            .collect();
        let mut labels: Vec<f64> = rows
            .iter()
            .map(|r| sign(r[0] + 0.5 * r.get(1).copied().unwrap_or(0.0) + rng.gen_range(-0.6..0.6)))
            .collect();
        labels[0] = 1.0;
        labels[1] = -1.0;
        Dataset::from_rows(&rows, &labels).unwrap()
    }

    #[test]
    fn two_point_toy_is_symmetric() {
        let m = LinearMetric::identity(1).unwrap();
        for c in [1e12, 10.0, 1.0, 0.1] {
            let model = SvmModel::fit(toy(), &m, c, &SolverOptions::default()).unwrap();
            let a = model.alpha();
            assert!((a[0] - a[1]).abs() < 1e-12, "C={c}: {a:?}");
            assert!(model.bias().abs() < 1e-12);
            assert_eq!((a[1] - a[0]).abs() < 1e-15, true);
            let s: f64 = a
                .iter()
                .zip(model.train().labels())
                .map(|(a, y)| a * y)
                .sum();
            assert!(s.abs() < 1e-15);
        }
    }

    #[test]
    fn support_vectors_sit_on_ridged_margin() {
        let m = LinearMetric::identity(1).unwrap();
        let model = SvmModel::fit(toy(), &m, 1e12, &SolverOptions::default()).unwrap();
        for &i in model.support_idx() {
            let h = model.training_decision_ridged(i);
            assert!((h - model.train().labels()[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn far_point_decays_to_bias() {
        let ds = Arc::new(random_problem(12, 2, 3));
        let m = LinearMetric::identity(2).unwrap();
        let model = SvmModel::fit(ds, &m, 1.0, &SolverOptions::default()).unwrap();
        let h = model.decision_function(&[100.0, -100.0]).unwrap();
        assert!((h - model.bias()).abs() < 1e-12);
    }

    #[test]
    fn kkt_and_dual_constraint_on_random_problems() {
        for seed in 0..10 {
            let ds = Arc::new(random_problem(25, 2, seed));
            let m = LinearMetric::spherical(2, 0.9).unwrap();
            let k = training_kernel(&ds, &m).unwrap();
            for c in [0.1, 1.0, 100.0] {
                let sol = solve_dual(k.values(), ds.labels(), c, &SolverOptions::default(), None)
                    .unwrap();
                let viol = sol.max_kkt_violation(k.values(), ds.labels(), c);
                assert!(viol < 1e-8, "seed {seed} C {c}: {viol}");
            }
        }
    }

    #[test]
    fn warm_start_reaches_same_solution() {
        let ds = random_problem(30, 3, 11);
        let m = LinearMetric::spherical(3, 0.7).unwrap();
        let k = training_kernel(&ds, &m).unwrap();
        let opts = SolverOptions::default();
        let cold = solve_dual(k.values(), ds.labels(), 5.0, &opts, None).unwrap();
        let prev = solve_dual(k.values(), ds.labels(), 1.0, &opts, None).unwrap();
        let warm = solve_dual(k.values(), ds.labels(), 5.0, &opts, Some(&prev.support)).unwrap();
        assert_eq!(cold.support, warm.support);
        for (a, b) in cold.alpha.iter().zip(&warm.alpha) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn bordered_system_reproduces_alpha_and_bias() {
        for seed in 0..5 {
            let ds = Arc::new(random_problem(20, 2, 100 + seed));
            let m =
                LinearMetric::full(&Mat::from_rows(&[[0.9, 0.2], [-0.1, 0.6]]).unwrap()).unwrap();
            let model = SvmModel::fit(ds, &m, 3.0, &SolverOptions::default()).unwrap();
            let sys = model.bordered_system();
            let s = model.support_idx().len();
            assert_eq!(sys.h.rows(), s + 1);
            for p in 0..=s {
                for q in 0..=s {
                    assert_eq!(sys.h[(p, q)], sys.h[(q, p)]);
                }
            }
            let theta = sys.solve().unwrap();
            for (p, &i) in model.support_idx().iter().enumerate() {
                assert!((theta[p] - model.alpha()[i]).abs() < 1e-8);
            }
            assert!((theta[s] - model.bias()).abs() < 1e-8);
            assert!(sys.condition_estimate().is_finite());
        }
    }

    #[test]
    fn two_sv_bordered_sign_pattern() {
        let m = LinearMetric::identity(1).unwrap();
        let model = SvmModel::fit(toy(), &m, 1e12, &SolverOptions::default()).unwrap();
        let h = model.bordered_system().h;
        let k12 = (-4.0f64).exp();
        assert!((h[(0, 1)] + k12).abs() < 1e-15);
        assert!((h[(0, 0)] - 1.0).abs() < 1e-11);
        assert_eq!((h[(0, 2)], h[(1, 2)], h[(2, 2)]), (-1.0, 1.0, 0.0));
    }

    #[test]
    fn heavy_ridge_puts_everything_on_the_margin() {
        let ds = Arc::new(random_problem(15, 2, 5));
        let m = LinearMetric::identity(2).unwrap();
        let model = SvmModel::fit(ds, &m, 1e-3, &SolverOptions::default()).unwrap();
        assert_eq!(model.support_idx().len(), 15);
    }

    #[test]
    fn separable_training_error_zero_and_flip_complement() {
        let rows: Vec<[f64; 2]> = (0..16)
            .map(|i| {
                [
                    if i % 2 == 0 { 2.0 } else { -2.0 } + 0.1 * i as f64,
                    (i as f64).sin(),
                ]
            })
            .collect();
        let labels: Vec<f64> = (0..16)
            .map(|i| if i % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        let ds = Arc::new(Dataset::from_rows(&rows, &labels).unwrap());
        let m = LinearMetric::spherical(2, 0.5).unwrap();
        let model = SvmModel::fit(ds.clone(), &m, 1e6, &SolverOptions::default()).unwrap();
        assert_eq!(model.error_rate(&ds).unwrap(), 0.0);
        assert_eq!(model.error_rate(&ds.flipped()).unwrap(), 1.0);

        let noisy = Arc::new(random_problem(30, 2, 9));
        let model = SvmModel::fit(noisy.clone(), &m, 1.0, &SolverOptions::default()).unwrap();
        let e = model.error_rate(&noisy).unwrap();
        let ef = model.error_rate(&noisy.flipped()).unwrap();
        assert!((e + ef - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_decision_predicts_positive() {
        assert_eq!(sign(0.0), 1.0);
        assert_eq!(sign(-0.0), 1.0);
        assert_eq!(sign(-1e-300), -1.0);
    }

    #[test]
    fn deterministic_bitwise() {
        let ds = Arc::new(random_problem(40, 3, 21));
        let m = LinearMetric::init_default(MetricShape::Full, 3, None, Default::default()).unwrap();
        let a = SvmModel::fit(ds.clone(), &m, 2.0, &SolverOptions::default()).unwrap();
        let b = SvmModel::fit(ds, &m, 2.0, &SolverOptions::default()).unwrap();
        assert_eq!(a.alpha(), b.alpha());
        assert_eq!(a.bias().to_bits(), b.bias().to_bits());
    }

    #[test]
    fn one_class_training_set_is_rejected() {
        let ds = Arc::new(Dataset::from_rows(&[[0.0], [1.0]], &[1.0, 1.0]).unwrap());
        let m = LinearMetric::identity(1).unwrap();
        assert!(SvmModel::fit(ds, &m, 1.0, &SolverOptions::default()).is_err());
    }

    #[test]
    fn non_convergence_is_reported() {
        let ds = Arc::new(random_problem(30, 2, 4));
        let m = LinearMetric::identity(2).unwrap();
        let opts = SolverOptions {
            max_iterations: 1,
            ..Default::default()
        };
        assert!(matches!(
            SvmModel::fit(ds, &m, 100.0, &opts),
            Err(Error::SolverNotConverged { .. })
        ));
    }

    #[test]
    fn model_json_round_trip_predicts_identically() {
        let ds = Arc::new(random_problem(20, 2, 8));
        let m = LinearMetric::diagonal(vec![0.8, 1.1]).unwrap();
        let model = SvmModel::fit(ds.clone(), &m, 2.0, &SolverOptions::default()).unwrap();
        let json = serde_json::to_string(&model.to_json("abc")).unwrap();
        assert!(json.contains("\"C\":2.0") && json.contains("\"train_digest\":\"abc\""));
        let back: ModelJson = serde_json::from_str(&json).unwrap();
        let re = SvmModel::from_json(&back, ds.clone()).unwrap();
        for i in 0..ds.len() {
            assert_eq!(
                model.decision_function(ds.row(i)).unwrap(),
                re.decision_function(ds.row(i)).unwrap()
            );
        }
    }
}
