//! Smoothed validation loss and its gradient through the SVM solution.

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::metric::LinearMetric;
use crate::svm::{sign, BorderedFactor, SvmModel};

/// Mirrored sigmoid `s_a(z) = 1/(1 + e^{az})`.
pub fn sigmoid_loss(z: f64, a: f64) -> f64 {
    let t = a * z;
    if t >= 0.0 {
        let e = (-t).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + t.exp())
    }
}

/// `s_a'(z) = −a·s_a(z)·(1 − s_a(z))`.
pub fn sigmoid_derivative(z: f64, a: f64) -> f64 {
    let s = sigmoid_loss(z, a);
    -a * s * (1.0 - s)
}

/// Terms of the smoothed objective at a fitted model.
#[derive(Clone, Debug, PartialEq)]
pub struct ObjectiveValue {
    /// `(1/|V|) Σ s_a(y h)`.
    pub data: f64,
    /// `λ‖L − L₀‖²_F`.
    pub regularizer: f64,
    /// 0-1 error on the validation set.
    pub val_error: f64,
}

impl ObjectiveValue {
    pub fn total(&self) -> f64 {
        self.data + self.regularizer
    }
}

/// `(1/|V|) Σ s_a(y h(x)) + λ‖L − L₀‖²_F` for `model` on `val`.
pub fn smooth_objective(
    model: &SvmModel,
    val: &Dataset,
    a: f64,
    lambda: f64,
    reference: &LinearMetric,
) -> Result<ObjectiveValue> {
    if val.is_empty() {
        return Err(Error::Data("empty validation set".into()));
    }
    let h = model.decision_batch(val.features())?;
    Ok(value_from_decisions(
        &h,
        val.labels(),
        a,
        lambda * model.metric().frobenius_gap(reference)?,
    ))
}

fn value_from_decisions(h: &[f64], y: &[f64], a: f64, regularizer: f64) -> ObjectiveValue {
    let m = y.len() as f64;
    let data = h
        .iter()
        .zip(y)
        .map(|(h, y)| sigmoid_loss(y * h, a))
        .sum::<f64>()
        / m;
    let wrong = h.iter().zip(y).filter(|(h, y)| sign(**h) != **y).count();
    ObjectiveValue {
        data,
        regularizer,
        val_error: wrong as f64 / m,
    }
}

/// Gradient of the smoothed objective.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradient {
    /// With respect to the explicit `r×d` matrix `L`.
    pub d_matrix: Mat,
    /// Projected onto the metric's free parameters.
    pub d_params: Vec<f64>,
    pub d_log_c: f64,
}

/// Objective value and gradient together; they share the decision values.
pub fn objective_and_gradient(
    model: &SvmModel,
    val: &Dataset,
    a: f64,
    lambda: f64,
    reference: &LinearMetric,
) -> Result<(ObjectiveValue, Gradient)> {
    evaluate(model, val, a, lambda, reference, false)
}

pub fn gradient(
    model: &SvmModel,
    val: &Dataset,
    a: f64,
    lambda: f64,
    reference: &LinearMetric,
) -> Result<Gradient> {
    Ok(objective_and_gradient(model, val, a, lambda, reference)?.1)
}

pub(crate) fn evaluate(
    model: &SvmModel,
    val: &Dataset,
    a: f64,
    lambda: f64,
    reference: &LinearMetric,
    corrupt: bool,
) -> Result<(ObjectiveValue, Gradient)> {
    if val.is_empty() {
        return Err(Error::Data("empty validation set".into()));
    }
    let metric = model.metric();
    let train = model.train();
    let support = model.support_idx();
    if support.is_empty() {
        return Err(Error::Data("model has no support vectors".into()));
    }
    let y_t = train.labels();
    let c = model.c_value();
    let s = support.len();
    let m = val.len();

    let z_s = model.support_transformed();
    let x_s = train.features().select_rows(support);
    let z_v = metric.transform_rows(val.features())?;
    let x_v = val.features();
    let coef: Vec<f64> = support.iter().map(|&j| model.alpha()[j] * y_t[j]).collect();

    // cross kernel S×V and decision values
    let mut k_sv = Mat::zeros(s, m);
    for p in 0..s {
        let zp = z_s.row(p);
        for (v, out) in k_sv.row_mut(p).iter_mut().enumerate() {
            *out = (-linalg::sq_dist(zp, z_v.row(v))).exp();
        }
    }
    let mut h = vec![model.bias(); m];
    for p in 0..s {
        linalg::axpy(coef[p], k_sv.row(p), &mut h);
    }
    let gap = metric.frobenius_gap(reference)?;
    let value = value_from_decisions(&h, val.labels(), a, lambda * gap);

    let w: Vec<f64> = h
        .iter()
        .zip(val.labels())
        .map(|(h, y)| sigmoid_derivative(y * h, a) * y / m as f64)
        .collect();

    // direct path: −2 Σ_{p,v} w_v c_p k_pv (z_p − z_v)(x_p − x_v)ᵀ
    let mut w_dir = Mat::zeros(s, m);
    for p in 0..s {
        let kp = k_sv.row(p);
        for (v, out) in w_dir.row_mut(p).iter_mut().enumerate() {
            *out = -2.0 * w[v] * coef[p] * kp[v];
        }
    }
    let mut d_matrix = linalg::pair_scatter(&w_dir, z_s, &x_s, &z_v, x_v);

    // indirect path through (α_S, b) = H⁻¹(1, 0)
    let mut g_a = vec![0.0; s];
    for (p, &j) in support.iter().enumerate() {
        g_a[p] = y_t[j] * linalg::dot(k_sv.row(p), &w);
    }
    let g_b: f64 = w.iter().sum();
    let kernel_ss = support_gram(z_s);
    let factor = BorderedFactor::new(&kernel_ss, &(0..s).collect::<Vec<_>>(), c, 1e-10)?;
    let y_s: Vec<f64> = support.iter().map(|&j| y_t[j]).collect();
    let (u_a, _u_b) = factor.solve_h(&y_s, &g_a, g_b);
    if u_a.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularSystem);
    }
    let sgn = if corrupt { -1.0 } else { 1.0 };
    // −uᵀ(∂H)θ with ∂K_pq = −2 K_pq (z_p − z_q)(x_p − x_q)ᵀ
    let mut w_ind = Mat::zeros(s, s);
    for p in 0..s {
        let up = u_a[p] * y_s[p];
        let kp = kernel_ss.row(p);
        for (q, out) in w_ind.row_mut(p).iter_mut().enumerate() {
            *out = sgn * 2.0 * up * coef[q] * kp[q];
        }
    }
    let ind = linalg::pair_scatter(&w_ind, z_s, &x_s, z_s, &x_s);
    for (o, v) in d_matrix.as_mut_slice().iter_mut().zip(ind.as_slice()) {
        *o += v;
    }
    let alpha_s: Vec<f64> = support.iter().map(|&j| model.alpha()[j]).collect();
    let d_log_c = linalg::dot(&u_a, &alpha_s) / c;

    let mut d_params = metric.project_gradient(&d_matrix)?;
    if lambda > 0.0 {
        let reg: Vec<f64> = metric
            .params()
            .iter()
            .zip(reference.params())
            .map(|(l, l0)| 2.0 * lambda * (l - l0))
            .collect();
        let scale = match metric.shape() {
            crate::metric::MetricShape::Spherical => metric.dim() as f64,
            _ => 1.0,
        };
        for (g, r) in d_params.iter_mut().zip(&reg) {
            *g += scale * r;
        }
        let full_reg = metric
            .to_matrix()
            .sub(&reference.to_matrix())?
            .scale(2.0 * lambda);
        for (o, v) in d_matrix.as_mut_slice().iter_mut().zip(full_reg.as_slice()) {
            *o += v;
        }
    }
    Ok((
        value,
        Gradient {
            d_matrix,
            d_params,
            d_log_c,
        },
    ))
}

fn support_gram(z: &Mat) -> Mat {
    let s = z.rows();
    let mut k = Mat::zeros(s, s);
    for p in 0..s {
        k[(p, p)] = 1.0;
        for q in 0..p {
            let v = (-linalg::sq_dist(z.row(p), z.row(q))).exp();
            k[(p, q)] = v;
            k[(q, p)] = v;
        }
    }
    k
}
