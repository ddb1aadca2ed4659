//! RBF kernel under a learned metric: `k_L(x, x') = exp(−‖L(x − x')‖²)`.

use crate::error::{check_dim, Error, Result};
use crate::linalg::{sq_dist, Mat};
use crate::metric::LinearMetric;

#[derive(Clone, Debug, PartialEq)]
pub struct KernelMatrix {
    values: Mat,
    ridge_c: Option<f64>,
}

impl KernelMatrix {
    pub fn new(values: Mat) -> Self {
        KernelMatrix {
            values,
            ridge_c: None,
        }
    }

    pub fn values(&self) -> &Mat {
        &self.values
    }

    pub fn into_values(self) -> Mat {
        self.values
    }

    pub fn ridge_c(&self) -> Option<f64> {
        self.ridge_c
    }

    pub fn rows(&self) -> usize {
        self.values.rows()
    }

    pub fn cols(&self) -> usize {
        self.values.cols()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[(i, j)]
    }

    /// `K + (1/C)·I`; the matrix must be square and not yet ridged.
    pub fn add_ridge(mut self, c: f64) -> Result<Self> {
        if !(c > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "C must be positive, got {c}"
            )));
        }
        if self.ridge_c.is_some() {
            return Err(Error::InvalidArgument(
                "kernel matrix already ridged".into(),
            ));
        }
        check_dim(self.values.rows(), self.values.cols())?;
        for i in 0..self.values.rows() {
            self.values[(i, i)] += 1.0 / c;
        }
        self.ridge_c = Some(c);
        Ok(self)
    }

    /// `exp(−scale·D)` entrywise for a matrix of squared distances.
    pub fn from_sq_dists(dists: &Mat, scale: f64) -> Self {
        let data = dists
            .as_slice()
            .iter()
            .map(|&v| (-scale * v).exp())
            .collect();
        KernelMatrix::new(Mat::from_vec(dists.rows(), dists.cols(), data).expect("same shape"))
    }
}

pub fn k_value(metric: &LinearMetric, xi: &[f64], xj: &[f64]) -> Result<f64> {
    Ok((-metric.distance_sq(xi, xj)?).exp())
}

/// Kernel between every row of `a` and every row of `b`.
pub fn kernel_matrix(metric: &LinearMetric, a: &Mat, b: &Mat) -> Result<KernelMatrix> {
    let za = metric.transform_rows(a)?;
    let zb = metric.transform_rows(b)?;
    Ok(cross_from_transformed(&za, &zb))
}

/// Square kernel of `a` with itself; the upper triangle is mirrored so the
/// result is exactly symmetric.
pub fn gram(metric: &LinearMetric, a: &Mat) -> Result<KernelMatrix> {
    let z = metric.transform_rows(a)?;
    Ok(gram_from_transformed(&z))
}

pub fn gram_from_transformed(z: &Mat) -> KernelMatrix {
    KernelMatrix::from_sq_dists(&sq_dist_matrix(z), 1.0)
}

pub fn cross_from_transformed(za: &Mat, zb: &Mat) -> KernelMatrix {
    let mut v = Mat::zeros(za.rows(), zb.rows());
    for i in 0..za.rows() {
        let zi = za.row(i);
        for (j, out) in v.row_mut(i).iter_mut().enumerate() {
            *out = (-sq_dist(zi, zb.row(j))).exp();
        }
    }
    KernelMatrix::new(v)
}

/// Symmetric matrix of pairwise squared Euclidean distances between rows.
pub fn sq_dist_matrix(z: &Mat) -> Mat {
    let n = z.rows();
    let mut d = Mat::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = sq_dist(z.row(i), z.row(j));
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::sym_eigen;
    use crate::metric::MetricShape;

    fn pts(n: usize, d: usize, seed: u64) -> Mat {
        Mat::from_fn(n, d, |i, j| {
            (((i * 31 + j * 17) as f64 + seed as f64 * 0.37) * 0.61).sin() * 2.0
        })
    }

    #[test]
    fn value_examples() {
        let m = LinearMetric::identity(2).unwrap();
        assert_eq!(k_value(&m, &[1.0, 2.0], &[1.0, 2.0]).unwrap(), 1.0);
        let x = [2f64.ln().sqrt(), 0.0];
        assert!((k_value(&m, &x, &[0.0, 0.0]).unwrap() - 0.5).abs() < 1e-15);
        // σ² = d heuristic: L = I/√d gives exp(−‖x−x'‖²/d)
        let d = 4;
        let h = LinearMetric::spherical(d, 1.0 / (d as f64).sqrt()).unwrap();
        let (a, b) = ([1.0, 0.0, 2.0, 1.0], [0.0, 1.0, 1.0, -1.0]);
        let want = (-sq_dist(&a, &b) / d as f64).exp();
        assert!((k_value(&h, &a, &b).unwrap() - want).abs() < 1e-15);
    }

    #[test]
    fn gram_is_symmetric_with_unit_diagonal() {
        let m = LinearMetric::identity(2).unwrap();
        let k = gram(&m, &pts(3, 2, 0)).unwrap();
        for i in 0..3 {
            assert_eq!(k.get(i, i), 1.0);
            for j in 0..3 {
                assert_eq!(k.get(i, j), k.get(j, i));
                assert!(k.get(i, j) > 0.0 && k.get(i, j) <= 1.0);
            }
        }
    }

    #[test]
    fn matrix_matches_scalar_oracle() {
        let l = Mat::from_rows(&[[0.7, -0.2], [0.1, 1.3]]).unwrap();
        let m = LinearMetric::full(&l).unwrap();
        let (a, b) = (pts(5, 2, 1), pts(4, 2, 2));
        let k = kernel_matrix(&m, &a, &b).unwrap();
        assert_eq!((k.rows(), k.cols()), (5, 4));
        for i in 0..5 {
            for j in 0..4 {
                let o = k_value(&m, a.row(i), b.row(j)).unwrap();
                assert!((k.get(i, j) - o).abs() < 1e-15);
            }
        }
        let g = gram(&m, &a).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                assert!((g.get(i, j) - k_value(&m, a.row(i), a.row(j)).unwrap()).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn ridge_examples() {
        let m = LinearMetric::identity(2).unwrap();
        let k = gram(&m, &pts(4, 2, 3)).unwrap();
        let r = k.clone().add_ridge(10.0).unwrap();
        for i in 0..4 {
            assert!((r.get(i, i) - 1.1).abs() < 1e-15);
            for j in 0..4 {
                if i != j {
                    assert_eq!(r.get(i, j), k.get(i, j));
                }
            }
        }
        assert_eq!(r.ridge_c(), Some(10.0));
        assert!(r.clone().add_ridge(1.0).is_err());
        assert!(k.clone().add_ridge(0.0).is_err());
        let hard = k.clone().add_ridge(1e12).unwrap();
        for i in 0..4 {
            assert!((hard.get(i, i) - 1.0).abs() < 1.5e-12);
        }
        let cross = kernel_matrix(&m, &pts(3, 2, 0), &pts(2, 2, 1)).unwrap();
        assert!(cross.add_ridge(1.0).is_err());
    }

    #[test]
    fn ridge_shifts_spectrum() {
        let m = LinearMetric::spherical(3, 0.8).unwrap();
        let k = gram(&m, &pts(6, 3, 4)).unwrap();
        let (before, _) = sym_eigen(k.values());
        let (after, _) = sym_eigen(k.clone().add_ridge(4.0).unwrap().values());
        for (b, a) in before.iter().zip(&after) {
            assert!((a - b - 0.25).abs() < 1e-12);
        }
        assert!(before.iter().all(|&v| v >= -1e-10));
        assert!(after.iter().all(|&v| v >= 0.25 - 1e-10));
    }

    #[test]
    fn isotropic_kernel_is_rotation_invariant() {
        let m = LinearMetric::init_default(MetricShape::Spherical, 2, None, Default::default())
            .unwrap();
        let (a, b) = ([1.0, 2.0], [-0.5, 0.3]);
        let t: f64 = 0.83;
        let rot = |v: [f64; 2]| {
            [
                t.cos() * v[0] - t.sin() * v[1],
                t.sin() * v[0] + t.cos() * v[1],
            ]
        };
        let k1 = k_value(&m, &a, &b).unwrap();
        let k2 = k_value(&m, &rot(a), &rot(b)).unwrap();
        assert!((k1 - k2).abs() < 1e-14);
    }
}
