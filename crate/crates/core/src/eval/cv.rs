//! Grid search over kernel width and `C` by k-fold cross validation.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{split_labels, Dataset, SplitPlan, SPLIT_RETRY_CAP};
use crate::error::{Error, Result};
use crate::kernel::{sq_dist_matrix, KernelMatrix};
use crate::linalg::Mat;
use crate::metric::LinearMetric;
use crate::svm::{error_rate_from_decisions, solve_dual, SolverOptions};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridConfig {
    /// Kernel widths as multiples of the dimension: `σ² = m·d`.
    pub sigma_sq_multipliers: Vec<f64>,
    pub c_candidates: Vec<f64>,
    /// 1 means a single random 80/20 split.
    pub folds: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            sigma_sq_multipliers: vec![4.0, 2.0, 1.0, 0.5, 0.25],
            c_candidates: vec![0.1, 1.0, 10.0, 100.0],
            folds: 5,
        }
    }
}

impl GridConfig {
    pub fn with_folds(folds: usize) -> Self {
        GridConfig {
            folds,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sigma_sq_multipliers.is_empty() || self.c_candidates.is_empty() {
            return Err(Error::InvalidArgument("grid must be nonempty".into()));
        }
        if self.folds == 0 {
            return Err(Error::InvalidArgument("folds must be at least 1".into()));
        }
        if self
            .sigma_sq_multipliers
            .iter()
            .chain(&self.c_candidates)
            .any(|v| !(*v > 0.0))
        {
            return Err(Error::InvalidArgument(
                "grid values must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Candidate `σ²` values for dimension `d`.
    pub fn sigma_sq_values(&self, d: usize) -> Vec<f64> {
        self.sigma_sq_multipliers
            .iter()
            .map(|m| m * d as f64)
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvCell {
    pub sigma_sq: f64,
    #[serde(rename = "C")]
    pub c: f64,
    pub error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CvSelection {
    pub sigma_sq: f64,
    pub c: f64,
    pub cv_error: f64,
    /// `base` rescaled to the selected width.
    pub metric: LinearMetric,
    pub cells: Vec<CvCell>,
}

/// Width scaling applied to a base metric normalized so that `L = I/√d` is
/// the `σ² = d` Euclidean kernel: `L_σ = L·√(d/σ²)`.
pub fn width_factor(sigma_sq: f64, d: usize) -> f64 {
    (d as f64 / sigma_sq).sqrt()
}

/// Validation folds as (fit indices, held-out indices) pairs over `0..n`.
/// Every fit part has both classes and every held-out part is nonempty.
pub fn make_folds(
    labels: &[f64],
    folds: usize,
    seed: u64,
) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    let n = labels.len();
    if folds == 1 {
        let p = split_labels(labels, &SplitPlan::new(seed, 0.8))?;
        return Ok(vec![(p.train, p.test)]);
    }
    if folds > n {
        return Err(Error::InvalidArgument(format!(
            "{folds} folds for {n} examples"
        )));
    }
    for attempt in 0..SPLIT_RETRY_CAP as u64 {
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed.wrapping_add(attempt)));
        let out: Vec<(Vec<usize>, Vec<usize>)> = (0..folds)
            .map(|f| {
                let (lo, hi) = (f * n / folds, (f + 1) * n / folds);
                let mut held: Vec<usize> = perm[lo..hi].to_vec();
                let mut fit: Vec<usize> = perm[..lo].iter().chain(&perm[hi..]).copied().collect();
                held.sort_unstable();
                fit.sort_unstable();
                (fit, held)
            })
            .collect();
        let ok = out.iter().all(|(fit, held)| {
            !held.is_empty()
                && fit.iter().any(|&i| labels[i] > 0.0)
                && fit.iter().any(|&i| labels[i] < 0.0)
        });
        if ok {
            return Ok(out);
        }
    }
    Err(Error::SplitRetries {
        attempts: SPLIT_RETRY_CAP,
    })
}

fn sub_matrix(m: &Mat, rows: &[usize], cols: &[usize]) -> Mat {
    let mut out = Mat::zeros(rows.len(), cols.len());
    for (a, &i) in rows.iter().enumerate() {
        let src = m.row(i);
        for (o, &j) in out.row_mut(a).iter_mut().zip(cols) {
            *o = src[j];
        }
    }
    out
}

/// Exhaustive grid search on `train` with kernel `exp(−‖L_σ(x − x')‖²)`.
///
/// Ties go to the larger `σ²`, then the smaller `C`. A cell whose fit fails
/// on any fold scores 1.0.
pub fn cv_select(
    train: &Dataset,
    base: &LinearMetric,
    grid: &GridConfig,
    seed: u64,
    solver: &SolverOptions,
) -> Result<CvSelection> {
    grid.validate()?;
    if !train.has_both_classes() {
        return Err(Error::Data("training set needs both classes".into()));
    }
    let d = train.dim();
    let z = base.transform_rows(train.features())?;
    let dist = sq_dist_matrix(&z);
    let folds = make_folds(train.labels(), grid.folds, seed)?;
    let y = train.labels();

    let mut widths = grid.sigma_sq_values(d);
    widths.sort_by(|a, b| b.total_cmp(a));
    let mut cs = grid.c_candidates.clone();
    cs.sort_by(|a, b| a.total_cmp(b));

    let nc = cs.len();
    let mut wrong = vec![vec![0usize; nc]; widths.len()];
    let mut failed = vec![vec![false; nc]; widths.len()];
    let mut total = 0usize;
    for (fit, held) in &folds {
        let y_fit: Vec<f64> = fit.iter().map(|&i| y[i]).collect();
        let y_held: Vec<f64> = held.iter().map(|&i| y[i]).collect();
        let d_fit = sub_matrix(&dist, fit, fit);
        let d_cross = sub_matrix(&dist, held, fit);
        total += held.len();
        for (wi, &s2) in widths.iter().enumerate() {
            // ‖L_σ(x − x')‖² = ‖L(x − x')‖²·d/σ²
            let scale = d as f64 / s2;
            let k_fit = KernelMatrix::from_sq_dists(&d_fit, scale).into_values();
            let k_cross = KernelMatrix::from_sq_dists(&d_cross, scale).into_values();
            let mut warm: Option<Vec<usize>> = None;
            for (ci, &c) in cs.iter().enumerate() {
                match solve_dual(&k_fit, &y_fit, c, solver, warm.as_deref()) {
                    Ok(sol) => {
                        let h: Vec<f64> = (0..held.len())
                            .map(|r| sol.decision_from_row(&y_fit, k_cross.row(r)))
                            .collect();
                        let e = error_rate_from_decisions(&h, &y_held);
                        wrong[wi][ci] += (e * held.len() as f64).round() as usize;
                        warm = Some(sol.support);
                    }
                    Err(e) => {
                        log::warn!("cv cell sigma^2={s2} C={c} failed: {e}");
                        failed[wi][ci] = true;
                    }
                }
            }
        }
    }

    let mut cells = Vec::with_capacity(widths.len() * nc);
    let mut best: Option<(usize, usize, f64)> = None;
    for (wi, &s2) in widths.iter().enumerate() {
        for (ci, &c) in cs.iter().enumerate() {
            let err = if failed[wi][ci] {
                1.0
            } else {
                wrong[wi][ci] as f64 / total as f64
            };
            cells.push(CvCell {
                sigma_sq: s2,
                c,
                error: err,
            });
            if best.is_none_or(|(_, _, e)| err < e) {
                best = Some((wi, ci, err));
            }
        }
    }
    let (wi, ci, cv_error) = best.expect("grid is nonempty");
    let sigma_sq = widths[wi];
    Ok(CvSelection {
        sigma_sq,
        c: cs[ci],
        cv_error,
        metric: base.scaled(width_factor(sigma_sq, d)),
        cells,
    })
}
