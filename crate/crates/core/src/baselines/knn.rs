//! k-nearest-neighbor rule and target-neighbor selection.

use crate::dataset::Dataset;
use crate::error::{check_dim, Error, Result};
use crate::linalg::{self, Mat};
use crate::metric::LinearMetric;

/// Indices of the `k` smallest entries of `dist` among `candidates`,
/// ordered by (distance, index).
pub(crate) fn k_smallest(
    dist: &[f64],
    candidates: impl Iterator<Item = usize>,
    k: usize,
) -> Vec<usize> {
    let mut c: Vec<usize> = candidates.collect();
    c.sort_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(a.cmp(&b)));
    c.truncate(k);
    c
}

fn vote(labels: &[f64], idx: &[usize]) -> f64 {
    let s: f64 = idx.iter().map(|&i| labels[i]).sum();
    if s >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

fn check_k(train: &Dataset, k: usize) -> Result<()> {
    if train.is_empty() {
        return Err(Error::Data("empty training set".into()));
    }
    if k == 0 || k > train.len() {
        return Err(Error::InvalidArgument(format!(
            "k = {k} with {} training points",
            train.len()
        )));
    }
    Ok(())
}

/// Majority label among the `k` nearest training points under `metric`.
/// A tied vote goes to +1; equidistant neighbors are taken by lowest index.
pub fn knn_predict(train: &Dataset, metric: &LinearMetric, k: usize, x: &[f64]) -> Result<f64> {
    check_k(train, k)?;
    check_dim(train.dim(), x.len())?;
    let z = metric.transform_rows(train.features())?;
    let zx = metric.transform(x)?;
    let dist: Vec<f64> = (0..z.rows())
        .map(|i| linalg::sq_dist(z.row(i), &zx))
        .collect();
    Ok(vote(train.labels(), &k_smallest(&dist, 0..dist.len(), k)))
}

/// Predictions for every row of `x`.
pub fn knn_predict_batch(
    train: &Dataset,
    metric: &LinearMetric,
    k: usize,
    x: &Mat,
) -> Result<Vec<f64>> {
    check_k(train, k)?;
    let z = metric.transform_rows(train.features())?;
    let zx = metric.transform_rows(x)?;
    let mut dist = vec![0.0; z.rows()];
    Ok((0..zx.rows())
        .map(|r| {
            for (i, d) in dist.iter_mut().enumerate() {
                *d = linalg::sq_dist(z.row(i), zx.row(r));
            }
            vote(train.labels(), &k_smallest(&dist, 0..dist.len(), k))
        })
        .collect())
}

/// Fraction of `test` misclassified by the k-NN rule.
pub fn knn_error(train: &Dataset, metric: &LinearMetric, k: usize, test: &Dataset) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::Data("empty evaluation set".into()));
    }
    let pred = knn_predict_batch(train, metric, k, test.features())?;
    let wrong = pred
        .iter()
        .zip(test.labels())
        .filter(|(p, y)| p != y)
        .count();
    Ok(wrong as f64 / test.len() as f64)
}

/// For each point, its `k` nearest same-class points under the Euclidean
/// metric of the features as given (ties by lowest index).
pub fn target_neighbors(train: &Dataset, k: usize) -> Result<Vec<Vec<usize>>> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be positive".into()));
    }
    let y = train.labels();
    for class in [1.0, -1.0] {
        let size = y.iter().filter(|&&v| v == class).count();
        if size <= k {
            return Err(Error::Data(format!(
                "class {class:+} has {size} members, needs more than {k} for target neighbors"
            )));
        }
    }
    let x = train.features();
    let n = train.len();
    let mut dist = vec![0.0; n];
    Ok((0..n)
        .map(|i| {
            for (j, d) in dist.iter_mut().enumerate() {
                *d = linalg::sq_dist(x.row(i), x.row(j));
            }
            k_smallest(&dist, (0..n).filter(|&j| j != i && y[j] == y[i]), k)
        })
        .collect())
}
