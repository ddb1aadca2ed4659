//! Information-theoretic metric learning: LogDet-regularized distance
//! constraints solved by cyclic Bregman projections.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{self, Cholesky, Mat};
use crate::metric::{InitScale, LinearMetric};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ItmlConfig {
    /// Upper bound for similar pairs; default the 5th percentile of `d²_{M₀}`.
    pub u: Option<f64>,
    /// Lower bound for dissimilar pairs; default the 95th percentile.
    pub l: Option<f64>,
    pub gamma: f64,
    pub max_sweeps: usize,
    /// Relative change of the dual variables (ℓ₁) below which a sweep counts as converged.
    pub tolerance: f64,
    /// Number of sampled constraint pairs; default `20·n`.
    pub pair_budget: Option<usize>,
    /// `M₀ = L₀ᵀL₀`; default `I/d`.
    #[serde(skip)]
    pub m0: Option<LinearMetric>,
    pub seed: u64,
}

impl Default for ItmlConfig {
    fn default() -> Self {
        ItmlConfig {
            u: None,
            l: None,
            gamma: 1.0,
            max_sweeps: 100,
            tolerance: 1e-3,
            pair_budget: None,
            m0: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ItmlConstraint {
    pub i: usize,
    pub j: usize,
    pub similar: bool,
    /// Slack-adjusted bound at the end of the run (`u`/`l` when γ → ∞).
    pub bound: f64,
}

#[derive(Clone, Debug)]
pub struct ItmlFit {
    /// Cholesky factor of `M` as a full `L`.
    pub metric: LinearMetric,
    pub m: Mat,
    pub u: f64,
    pub l: f64,
    pub constraints: Vec<ItmlConstraint>,
    pub sweeps: usize,
    pub converged: bool,
    /// Largest relative violation of a constraint against its slack bound.
    pub max_violation: f64,
}

fn quad(m: &Mat, v: &[f64]) -> f64 {
    linalg::dot(v, &m.matvec(v))
}

/// Value at fraction `q` of the sorted sample (nearest rank).
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let k = (q * (sorted.len() - 1) as f64).round() as usize;
    sorted[k]
}

/// `tr(M M₀⁻¹) − log det(M M₀⁻¹) − d`.
pub fn logdet_divergence(m: &Mat, m0: &Mat) -> Result<f64> {
    let d = m.rows();
    let c0 = Cholesky::factor(m0.as_slice(), d)?;
    let c = Cholesky::factor(m.as_slice(), d)?;
    let mut tr = 0.0;
    for j in 0..d {
        let col: Vec<f64> = (0..d).map(|i| m[(i, j)]).collect();
        tr += c0.solve(&col)[j];
    }
    Ok(tr - (c.log_det() - c0.log_det()) - d as f64)
}

fn violation(m: &Mat, x: &Mat, c: &ItmlConstraint) -> f64 {
    let v: Vec<f64> = x
        .row(c.i)
        .iter()
        .zip(x.row(c.j))
        .map(|(a, b)| a - b)
        .collect();
    let p = quad(m, &v);
    let excess = if c.similar { p - c.bound } else { c.bound - p };
    excess.max(0.0) / c.bound
}

pub fn itml_fit(train: &Dataset, config: &ItmlConfig) -> Result<ItmlFit> {
    let n = train.len();
    let d = train.dim();
    if n < 2 {
        return Err(Error::Data("ITML needs at least two points".into()));
    }
    if !(config.gamma > 0.0) {
        return Err(Error::InvalidArgument("gamma must be positive".into()));
    }
    let m0 = match &config.m0 {
        Some(l0) => l0.to_m(),
        None => LinearMetric::init_default(
            crate::metric::MetricShape::Full,
            d,
            None,
            InitScale::InvSqrtD,
        )?
        .to_m(),
    };
    Cholesky::factor(m0.as_slice(), d)
        .map_err(|_| Error::InvalidArgument("M0 must be positive definite".into()))?;
    let x = train.features();
    let y = train.labels();
    let diff = |i: usize, j: usize| -> Vec<f64> {
        x.row(i).iter().zip(x.row(j)).map(|(a, b)| a - b).collect()
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let draw_pair = |rng: &mut ChaCha8Rng| loop {
        let i = rng.gen_range(0..n);
        let j = rng.gen_range(0..n);
        if i != j {
            break (i, j);
        }
    };
    let (u, l) = match (config.u, config.l) {
        (Some(u), Some(l)) => (u, l),
        (cu, cl) => {
            let mut sample: Vec<f64> = (0..10 * n)
                .map(|_| {
                    let (i, j) = draw_pair(&mut rng);
                    quad(&m0, &diff(i, j))
                })
                .collect();
            sample.sort_by(f64::total_cmp);
            (
                cu.unwrap_or(percentile(&sample, 0.05)),
                cl.unwrap_or(percentile(&sample, 0.95)),
            )
        }
    };
    if !(u > 0.0 && l > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "bounds must be positive (u = {u}, l = {l})"
        )));
    }
    let budget = config.pair_budget.unwrap_or(20 * n);
    let mut constraints: Vec<ItmlConstraint> = (0..budget)
        .map(|_| {
            let (i, j) = draw_pair(&mut rng);
            let similar = y[i] == y[j];
            ItmlConstraint {
                i,
                j,
                similar,
                bound: if similar { u } else { l },
            }
        })
        .collect();

    let mut m = m0;
    let mut lambda = vec![0.0f64; constraints.len()];
    let mut converged = constraints.is_empty();
    let mut sweeps = 0;
    let gamma = config.gamma;
    while !converged && sweeps < config.max_sweeps {
        let before: Vec<f64> = lambda.clone();
        for (c, lam) in constraints.iter_mut().zip(lambda.iter_mut()) {
            let v = diff(c.i, c.j);
            let mv = m.matvec(&v);
            let p = linalg::dot(&v, &mv);
            if !(p > 1e-300) {
                continue;
            }
            let delta = if c.similar { 1.0 } else { -1.0 };
            // after the projection the pair sits exactly on its new bound
            let alpha = lam.min(delta * gamma / (gamma + 1.0) * (1.0 / p - 1.0 / c.bound));
            let beta = delta * alpha / (1.0 - delta * alpha * p);
            c.bound = 1.0 / (1.0 / c.bound + delta * alpha / gamma);
            *lam -= alpha;
            for a in 0..d {
                let s = beta * mv[a];
                linalg::axpy(s, &mv, m.row_mut(a));
            }
        }
        sweeps += 1;
        let total: f64 = before.iter().map(|v| v.abs()).sum();
        let change: f64 = before.iter().zip(&lambda).map(|(a, b)| (a - b).abs()).sum();
        converged = change <= config.tolerance * total;
    }
    // exact symmetry before factoring
    let m = Mat::from_fn(d, d, |i, j| 0.5 * (m[(i, j)] + m[(j, i)]));
    let max_violation = constraints
        .iter()
        .map(|c| violation(&m, x, c))
        .fold(0.0, f64::max);
    if !converged {
        log::warn!("itml: not converged after {sweeps} sweeps (max violation {max_violation:.2e})");
    }
    let chol = Cholesky::factor(m.as_slice(), d)?;
    let metric = LinearMetric::full(&chol.factor_matrix().transpose())?;
    Ok(ItmlFit {
        metric,
        m,
        u,
        l,
        constraints,
        sweeps,
        converged,
        max_violation,
    })
}
