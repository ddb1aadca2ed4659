//! Unconstrained minimization with Armijo backtracking: Polak-Ribière+
//! nonlinear conjugate gradient or plain gradient descent.
//!
//! Objective evaluations may fail (e.g. an inner solver does not converge);
//! a failed trial point is treated as a step that was too long.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    #[default]
    #[serde(alias = "ncg", alias = "cg")]
    ConjugateGradient,
    #[serde(alias = "gd")]
    GradientDescent,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ncg" | "cg" | "conjugate-gradient" => Ok(Method::ConjugateGradient),
            "gd" | "gradient-descent" => Ok(Method::GradientDescent),
            _ => Err(Error::InvalidArgument(format!("unknown optimizer '{s}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimOptions {
    pub method: Method,
    pub max_iterations: usize,
    /// Length of the first trial step in parameter space (for gradient
    /// descent: the raw step multiplier used at every iteration).
    pub initial_step: f64,
    /// Sufficient-decrease constant.
    pub armijo_c1: f64,
    pub shrink: f64,
    pub max_backtracks: usize,
    /// Step doublings tried after an immediately accepted conjugate step.
    pub max_expansions: usize,
    pub grad_tolerance: f64,
    /// Consecutive failed evaluations tolerated before giving up.
    pub max_failures: usize,
}

impl Default for OptimOptions {
    fn default() -> Self {
        OptimOptions {
            method: Method::ConjugateGradient,
            max_iterations: 200,
            initial_step: 0.1,
            armijo_c1: 1e-4,
            shrink: 0.5,
            max_backtracks: 30,
            max_expansions: 5,
            grad_tolerance: 1e-10,
            max_failures: 10,
        }
    }
}

/// State after an accepted step (iteration 0 is the starting point).
#[derive(Clone, Debug)]
pub struct Step<'a> {
    pub iteration: usize,
    pub x: &'a [f64],
    pub value: f64,
    pub grad: &'a [f64],
    pub grad_norm: f64,
    /// Step length `t‖d‖` actually taken (0 at iteration 0).
    pub step: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Callback,
    GradientTolerance,
    MaxIterations,
    /// No step along the steepest descent direction passed the line search.
    LineSearch,
}

#[derive(Clone, Debug)]
pub struct Outcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad: Vec<f64>,
    pub iterations: usize,
    pub evaluations: usize,
    pub reason: StopReason,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dotp(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimize `f` from `x0`. `f` returns value and gradient; `callback` sees
/// every accepted iterate and may stop the run.
pub fn minimize<F, C>(
    mut f: F,
    x0: Vec<f64>,
    opts: &OptimOptions,
    mut callback: C,
) -> Result<Outcome>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
    C: FnMut(&Step) -> Control,
{
    let mut x = x0;
    let (mut fx, mut g) = f(&x)?;
    if !fx.is_finite() {
        return Err(Error::Optimization("objective not finite at start".into()));
    }
    let mut evaluations = 1;
    let mut done = |it: usize, x: &[f64], fx: f64, g: &[f64], step: f64| {
        callback(&Step {
            iteration: it,
            x,
            value: fx,
            grad: g,
            grad_norm: norm(g),
            step,
        })
    };
    let finish = |x, value, grad, iterations, evaluations, reason| Outcome {
        x,
        value,
        grad,
        iterations,
        evaluations,
        reason,
    };
    if done(0, &x, fx, &g, 0.0) == Control::Stop {
        return Ok(finish(x, fx, g, 0, evaluations, StopReason::Callback));
    }

    let mut d: Vec<f64> = g.iter().map(|v| -v).collect();
    let mut prev_t: Option<f64> = None;
    let mut prev_slope = 0.0;
    let mut failures = 0usize;

    for it in 1..=opts.max_iterations {
        if norm(&g) <= opts.grad_tolerance {
            return Ok(finish(
                x,
                fx,
                g,
                it - 1,
                evaluations,
                StopReason::GradientTolerance,
            ));
        }
        let mut slope = dotp(&g, &d);
        if !(slope < 0.0) {
            d = g.iter().map(|v| -v).collect();
            slope = dotp(&g, &d);
        }
        let dn = norm(&d);
        let mut t = match (opts.method, prev_t) {
            (Method::GradientDescent, _) => opts.initial_step,
            (_, None) => opts.initial_step / dn,
            (_, Some(pt)) => (pt * (prev_slope / slope)).min(pt * 10.0),
        };

        let mut accepted: Option<(Vec<f64>, f64, Vec<f64>)> = None;
        let mut restarted = false;
        let mut tries = 0;
        while accepted.is_none() {
            let xt: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + t * b).collect();
            evaluations += 1;
            let mut next_t = t * opts.shrink;
            match f(&xt) {
                Ok((ft, gt)) if ft.is_finite() => {
                    failures = 0;
                    if ft <= fx + opts.armijo_c1 * t * slope {
                        accepted = Some((xt, ft, gt));
                        continue;
                    }
                    // minimizer of the quadratic through f(0), f'(0), f(t)
                    let q = -slope * t * t / (2.0 * (ft - fx - slope * t));
                    if q.is_finite() {
                        next_t = q.clamp(0.1 * t, opts.shrink * t);
                    }
                }
                Ok(_) | Err(_) => {
                    failures += 1;
                    if failures >= opts.max_failures {
                        return Err(Error::Optimization(format!(
                            "{failures} consecutive failed evaluations"
                        )));
                    }
                }
            }
            t = next_t;
            tries += 1;
            if tries >= opts.max_backtracks {
                if restarted || opts.method == Method::GradientDescent {
                    return Ok(finish(
                        x,
                        fx,
                        g,
                        it - 1,
                        evaluations,
                        StopReason::LineSearch,
                    ));
                }
                // conjugate direction failed: fall back to steepest descent once
                restarted = true;
                tries = 0;
                d = g.iter().map(|v| -v).collect();
                slope = dotp(&g, &d);
                t = opts.initial_step / norm(&d);
            }
        }
        // expand while the accepted point is still descending steeply
        if opts.method == Method::ConjugateGradient && tries == 0 {
            for _ in 0..opts.max_expansions {
                let (_, fa, ga) = accepted.as_ref().expect("accepted above");
                if dotp(ga, &d) >= 0.5 * slope {
                    break;
                }
                let t2 = 2.0 * t;
                let xt: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + t2 * b).collect();
                evaluations += 1;
                match f(&xt) {
                    Ok((ft, gt))
                        if ft.is_finite() && ft < *fa && ft <= fx + opts.armijo_c1 * t2 * slope =>
                    {
                        failures = 0;
                        t = t2;
                        accepted = Some((xt, ft, gt));
                    }
                    _ => break,
                }
            }
        }
        let (xn, fnew, gn) = accepted.expect("loop exits with a step");
        debug_assert!(fnew <= fx);
        let step_len = t * norm(&d);

        if opts.method == Method::ConjugateGradient {
            let gg = dotp(&g, &g);
            let beta = if gg > 0.0 {
                ((dotp(&gn, &gn) - dotp(&gn, &g)) / gg).max(0.0)
            } else {
                0.0
            };
            d = gn.iter().zip(&d).map(|(gi, di)| -gi + beta * di).collect();
        } else {
            d = gn.iter().map(|v| -v).collect();
        }
        prev_t = Some(t);
        prev_slope = slope;
        x = xn;
        fx = fnew;
        g = gn;
        if done(it, &x, fx, &g, step_len) == Control::Stop {
            return Ok(finish(x, fx, g, it, evaluations, StopReason::Callback));
        }
    }
    let its = opts.max_iterations;
    Ok(finish(
        x,
        fx,
        g,
        its,
        evaluations,
        StopReason::MaxIterations,
    ))
}
