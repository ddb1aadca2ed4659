//! Support vector metric learning: gradient descent on the smoothed
//! validation loss over `L` and `log C`, with early stopping on a hold-out set.

mod gradcheck;
mod objective;

use std::cell::RefCell;
use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use gradcheck::{
    check_gradient, random_problem, relative_error, stable_check, GradCheckProblem, GradCheckReport,
};
pub use objective::{
    gradient, objective_and_gradient, sigmoid_derivative, sigmoid_loss, smooth_objective, Gradient,
    ObjectiveValue,
};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::metric::{InitScale, LinearMetric, MetricShape};
use crate::optim::{self, Control, Method, OptimOptions};
use crate::svm::{SolverOptions, SvmModel};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FiniteDiffMode {
    #[default]
    Off,
    /// Compare the analytic gradient with central differences at the start.
    Check,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmlConfig {
    pub steepness_a: f64,
    /// `None` picks 100 below 1000 examples and 10 otherwise.
    pub lambda: Option<f64>,
    pub learn_c: bool,
    pub shape: MetricShape,
    /// Starting metric `L₀`; defaults to `I/√d` (PCA directions for rectangular).
    pub initial_metric: Option<LinearMetric>,
    pub init_scale: InitScale,
    pub initial_c: f64,
    pub optimizer: Method,
    pub max_outer_iterations: usize,
    pub early_stop_patience: usize,
    pub finite_diff_mode: FiniteDiffMode,
    pub initial_step: f64,
    pub solver: SolverOptions,
}

impl Default for SvmlConfig {
    fn default() -> Self {
        SvmlConfig {
            steepness_a: 5.0,
            lambda: None,
            learn_c: true,
            shape: MetricShape::Full,
            initial_metric: None,
            init_scale: InitScale::InvSqrtD,
            initial_c: 1.0,
            optimizer: Method::ConjugateGradient,
            max_outer_iterations: 200,
            early_stop_patience: 5,
            finite_diff_mode: FiniteDiffMode::Off,
            initial_step: 0.1,
            solver: SolverOptions::default(),
        }
    }
}

/// Regularization weight used when none is configured.
pub fn default_lambda(n: usize) -> f64 {
    if n < 1000 {
        100.0
    } else {
        10.0
    }
}

impl SvmlConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.steepness_a > 0.0) {
            return Err(Error::InvalidArgument(
                "steepness a must be positive".into(),
            ));
        }
        if let Some(l) = self.lambda {
            if !(l >= 0.0) {
                return Err(Error::InvalidArgument("lambda must be nonnegative".into()));
            }
        }
        if self.early_stop_patience == 0 {
            return Err(Error::InvalidArgument("patience must be at least 1".into()));
        }
        if !(self.initial_c > 0.0) {
            return Err(Error::InvalidArgument("initial C must be positive".into()));
        }
        Ok(())
    }

    /// The starting metric for data of dimension `d`, using `train` for PCA
    /// directions when the shape is rectangular.
    pub fn start_metric(&self, d: usize, train: &Dataset) -> Result<LinearMetric> {
        match &self.initial_metric {
            Some(m) => {
                if m.shape() != self.shape || m.dim() != d {
                    return Err(Error::InvalidArgument(format!(
                        "initial metric is {}/{} but the run needs {}/{d}",
                        m.shape(),
                        m.dim(),
                        self.shape
                    )));
                }
                Ok(m.clone())
            }
            None => {
                LinearMetric::init_default(self.shape, d, Some(train.features()), self.init_scale)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub loss: f64,
    pub val_error: f64,
    pub holdout_error: f64,
    pub grad_norm: f64,
    #[serde(rename = "C")]
    pub c: f64,
    pub step: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SvmlTrace {
    pub rows: Vec<TraceRow>,
    /// Iteration whose hold-out error was best.
    pub best_iteration: usize,
    /// Largest analytic/numeric gradient disagreement, when checked.
    pub gradcheck_max_rel_error: Option<f64>,
}

impl SvmlTrace {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "iteration",
            "loss",
            "val_error",
            "holdout_error",
            "grad_norm",
            "C",
            "step",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.iteration.to_string(),
                r.loss.to_string(),
                r.val_error.to_string(),
                r.holdout_error.to_string(),
                r.grad_norm.to_string(),
                r.c.to_string(),
                r.step.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("trace", e))?;
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SvmlFit {
    pub metric: LinearMetric,
    pub c: f64,
    pub model: SvmModel,
    pub trace: SvmlTrace,
}

struct Cached {
    model: SvmModel,
    value: ObjectiveValue,
}

/// Learn `L` (and `C`) on `train` against `val`, stopping on `holdout`.
pub fn fit_svml(
    train: Arc<Dataset>,
    val: &Dataset,
    holdout: &Dataset,
    config: &SvmlConfig,
) -> Result<SvmlFit> {
    config.validate()?;
    if !train.has_both_classes() {
        return Err(Error::Data("training set needs both classes".into()));
    }
    if val.is_empty() || holdout.is_empty() {
        return Err(Error::Data(
            "validation and hold-out sets must be nonempty".into(),
        ));
    }
    let d = train.dim();
    let l0 = config.start_metric(d, &train)?;
    let lambda = config
        .lambda
        .unwrap_or_else(|| default_lambda(train.len() + val.len() + holdout.len()));
    let a = config.steepness_a;
    let np = l0.params().len();

    let mut trace = SvmlTrace::default();
    if config.finite_diff_mode == FiniteDiffMode::Check {
        let problem = GradCheckProblem {
            train: train.clone(),
            val: val.clone(),
            metric: l0.clone(),
            reference: l0.clone(),
            c: config.initial_c,
            a,
            lambda,
            learn_c: config.learn_c,
            solver: config.solver.clone(),
        };
        let report = check_gradient(&problem, 1e-5, false)?;
        if report.max_rel_error >= 1e-4 {
            log::warn!(
                "gradient check: max relative error {:.3e}",
                report.max_rel_error
            );
        }
        trace.gradcheck_max_rel_error = Some(report.max_rel_error);
    }

    let unpack = |theta: &[f64]| -> Result<(LinearMetric, f64)> {
        let metric = l0.with_params(&theta[..np])?;
        let c = if config.learn_c {
            theta[np].exp()
        } else {
            config.initial_c
        };
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::Optimization(format!("C left the valid range: {c}")));
        }
        Ok((metric, c))
    };

    let last: RefCell<Option<Cached>> = RefCell::new(None);
    let objective = |theta: &[f64]| -> Result<(f64, Vec<f64>)> {
        let (metric, c) = unpack(theta)?;
        let warm = last
            .borrow()
            .as_ref()
            .map(|m| m.model.support_idx().to_vec());
        let model = SvmModel::fit_warm(train.clone(), &metric, c, &config.solver, warm.as_deref())?;
        let (value, grad) = objective_and_gradient(&model, val, a, lambda, &l0)?;
        let mut g = grad.d_params;
        if config.learn_c {
            g.push(grad.d_log_c);
        }
        let total = value.total();
        *last.borrow_mut() = Some(Cached { model, value });
        Ok((total, g))
    };

    let mut best: Option<(f64, Vec<f64>, usize)> = None;
    let mut stale = 0usize;
    let mut failure: Option<Error> = None;
    let callback = |step: &optim::Step| -> Control {
        let cache = last.borrow();
        let cached = cache.as_ref().expect("accepted iterate was evaluated");
        let holdout_error = match cached.model.error_rate(holdout) {
            Ok(e) => e,
            Err(e) => {
                failure = Some(e);
                return Control::Stop;
            }
        };
        trace.rows.push(TraceRow {
            iteration: step.iteration,
            loss: step.value,
            val_error: cached.value.val_error,
            holdout_error,
            grad_norm: step.grad_norm,
            c: cached.model.c_value(),
            step: step.step,
        });
        // a tie moves the best iterate forward along the trajectory
        let improved = best.as_ref().is_none_or(|(e, _, _)| holdout_error <= *e);
        if improved {
            best = Some((holdout_error, step.x.to_vec(), step.iteration));
            stale = 0;
        } else {
            stale += 1;
        }
        if stale >= config.early_stop_patience {
            Control::Stop
        } else {
            Control::Continue
        }
    };

    let mut theta0 = l0.params().to_vec();
    if config.learn_c {
        theta0.push(config.initial_c.ln());
    }
    let opts = OptimOptions {
        method: config.optimizer,
        max_iterations: config.max_outer_iterations,
        initial_step: config.initial_step,
        ..Default::default()
    };
    let outcome = optim::minimize(objective, theta0, &opts, callback)?;
    if let Some(e) = failure {
        return Err(e);
    }
    log::debug!(
        "svml stopped after {} iterations ({:?}), {} evaluations",
        outcome.iterations,
        outcome.reason,
        outcome.evaluations
    );
    let (_, best_theta, best_iteration) = best.expect("iteration 0 is always recorded");
    trace.best_iteration = best_iteration;
    let (metric, c) = unpack(&best_theta)?;
    let model = SvmModel::fit(train, &metric, c, &config.solver)?;
    Ok(SvmlFit {
        metric,
        c,
        model,
        trace,
    })
}
