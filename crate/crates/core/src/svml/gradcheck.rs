//! Central finite differences of the full objective (SVM refit per
//! perturbation) against the analytic gradient.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::objective::{evaluate, smooth_objective};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::metric::{InitScale, LinearMetric, MetricShape};
use crate::svm::{SolverOptions, SvmModel};

#[derive(Clone, Debug)]
pub struct GradCheckProblem {
    pub train: Arc<Dataset>,
    pub val: Dataset,
    pub metric: LinearMetric,
    pub reference: LinearMetric,
    pub c: f64,
    pub a: f64,
    pub lambda: f64,
    pub learn_c: bool,
    pub solver: SolverOptions,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    /// Parameter gradient followed by `d/dlogC` when C is learned.
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    pub max_rel_error: f64,
    /// Every perturbed refit kept the support set of the base point.
    pub support_stable: bool,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.support_stable && self.max_rel_error < tol
    }
}

/// `|a − f| / max(|a|, |f|, 1e−6·max_k |f_k|)`; the floor keeps entries that
/// are zero up to rounding from dominating.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let scale = numeric.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = 1e-6 * scale;
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, f)| {
            let den = a.abs().max(f.abs()).max(floor);
            if den == 0.0 {
                0.0
            } else {
                (a - f).abs() / den
            }
        })
        .fold(0.0, f64::max)
}

fn objective_at(p: &GradCheckProblem, theta: &[f64]) -> Result<(f64, SvmModel)> {
    let np = p.metric.params().len();
    let metric = p.metric.with_params(&theta[..np])?;
    let c = if p.learn_c { theta[np].exp() } else { p.c };
    let model = SvmModel::fit(p.train.clone(), &metric, c, &p.solver)?;
    let v = smooth_objective(&model, &p.val, p.a, p.lambda, &p.reference)?;
    Ok((v.total(), model))
}

/// Compare analytic and numeric gradients at the problem's point. With
/// `corrupt` the indirect path enters with the wrong sign (negative control).
pub fn check_gradient(p: &GradCheckProblem, step: f64, corrupt: bool) -> Result<GradCheckReport> {
    let mut theta = p.metric.params().to_vec();
    if p.learn_c {
        theta.push(p.c.ln());
    }
    let (_, base) = objective_at(p, &theta)?;
    let (_, grad) = evaluate(&base, &p.val, p.a, p.lambda, &p.reference, corrupt)?;
    let mut analytic = grad.d_params;
    if p.learn_c {
        analytic.push(grad.d_log_c);
    }
    let mut numeric = Vec::with_capacity(theta.len());
    let mut stable = true;
    for k in 0..theta.len() {
        let mut plus = theta.clone();
        plus[k] += step;
        let mut minus = theta.clone();
        minus[k] -= step;
        let (fp, mp) = objective_at(p, &plus)?;
        let (fm, mm) = objective_at(p, &minus)?;
        stable &= mp.support_idx() == base.support_idx() && mm.support_idx() == base.support_idx();
        numeric.push((fp - fm) / (2.0 * step));
    }
    Ok(GradCheckReport {
        max_rel_error: relative_error(&analytic, &numeric),
        analytic,
        numeric,
        support_stable: stable,
    })
}

/// A random problem: `n` training and `n_val` validation points in `d`
/// dimensions with a nonlinear labelling, a perturbed starting metric of the
/// given shape and a random `C`.
pub fn random_problem(
    seed: u64,
    shape: MetricShape,
    n: usize,
    n_val: usize,
    d: usize,
    a: f64,
    learn_c: bool,
) -> Result<GradCheckProblem> {
    shape.validate(d)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |count: usize, rng: &mut ChaCha8Rng| -> Result<Dataset> {
        let rows: Vec<Vec<f64>> = (0..count)
            .map(|_| (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect();
        let mut labels: Vec<f64> = rows
            .iter()
            .map(|r| {
                let s = r[0] * r[0] - 1.0 + 0.7 * r[d - 1] + rng.gen_range(-0.8..0.8);
                if s >= 0.0 {
                    1.0
                } else {
                    -1.0
                }
            })
            .collect();
        labels[0] = 1.0;
        labels[1] = -1.0;
        Dataset::from_rows(&rows, &labels)
    };
    let train = draw(n, &mut rng)?;
    let val = draw(n_val, &mut rng)?;
    let reference =
        LinearMetric::init_default(shape, d, Some(train.features()), InitScale::InvSqrtD)?;
    let params: Vec<f64> = reference
        .params()
        .iter()
        .map(|p| p + rng.gen_range(-0.25..0.25) * (1.0 / d as f64).sqrt())
        .collect();
    let metric = reference.with_params(&params)?;
    Ok(GradCheckProblem {
        train: Arc::new(train),
        val,
        metric,
        reference,
        c: rng.gen_range(0.5..5.0),
        a,
        lambda: 0.5,
        learn_c,
        solver: SolverOptions::default(),
    })
}

/// Draw problems from consecutive seeds until one is support-stable at the
/// chosen step, and return it with its report.
pub fn stable_check(
    seed: u64,
    shape: MetricShape,
    a: f64,
    learn_c: bool,
    corrupt: bool,
) -> Result<(GradCheckProblem, GradCheckReport)> {
    for attempt in 0..50 {
        let p = random_problem(seed.wrapping_add(attempt), shape, 30, 15, 3, a, learn_c)?;
        let r = check_gradient(&p, 1e-5, corrupt)?;
        if r.support_stable {
            return Ok((p, r));
        }
    }
    Err(Error::Optimization(
        "no support-stable problem within 50 draws".into(),
    ))
}
