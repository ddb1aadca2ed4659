//! Independent reference implementations and the checks that compare the
//! library against them. Each check returns a one-line summary or the first
//! discrepancy.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use svmllab::baselines::{
    itml_fit, lmnn_fit, lmnn_objective, lmnn_sdp_objective, lmnn_slacks, nca_objective,
    target_neighbors, ItmlConfig, LmnnConfig,
};
use svmllab::kernel::gram;
use svmllab::linalg::{sym_eigen, Cholesky};
use svmllab::metric::{LinearMetric, MetricShape};
use svmllab::{Dataset, Mat, SolverOptions, SvmModel};

use super::{random_dataset, random_metric};

/// Euclidean projection onto `{α ≥ 0, Σ y_i α_i = 0}`: `α = max(0, v − τy)`
/// with `τ` found by bisection (the constraint residual is monotone in `τ`).
fn project(v: &[f64], y: &[f64]) -> Vec<f64> {
    let residual = |t: f64| -> f64 {
        v.iter()
            .zip(y)
            .map(|(vi, yi)| yi * (vi - t * yi).max(0.0))
            .sum()
    };
    let span = v.iter().fold(1.0f64, |m, x| m.max(x.abs())) + 1.0;
    let (mut lo, mut hi) = (-span, span);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if residual(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t = 0.5 * (lo + hi);
    v.iter()
        .zip(y)
        .map(|(vi, yi)| (vi - t * yi).max(0.0))
        .collect()
}

struct DualOracle {
    alpha: Vec<f64>,
    bias: f64,
    objective: f64,
}

/// Accelerated projected gradient ascent on `Σα − ½αᵀQα`, `Q = Y(K + I/C)Y`,
/// until the projected step moves less than `tol`.
fn dual_oracle(k: &Mat, y: &[f64], c: f64, tol: f64) -> DualOracle {
    let n = y.len();
    let q = Mat::from_fn(n, n, |i, j| {
        y[i] * y[j] * (k[(i, j)] + if i == j { 1.0 / c } else { 0.0 })
    });
    let (vals, _) = sym_eigen(&q);
    let step = 1.0 / vals[0];
    let grad = |a: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| 1.0 - (0..n).map(|j| q[(i, j)] * a[j]).sum::<f64>())
            .collect()
    };
    let mut x = vec![0.0; n];
    let mut z = x.clone();
    let mut t = 1.0f64;
    for _ in 0..2_000_000 {
        let g = grad(&z);
        let v: Vec<f64> = z.iter().zip(&g).map(|(zi, gi)| zi + step * gi).collect();
        let next = project(&v, y);
        let moved = next
            .iter()
            .zip(&x)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        z = next
            .iter()
            .zip(&x)
            .map(|(a, b)| a + (t - 1.0) / t_next * (a - b))
            .collect();
        x = next;
        t = t_next;
        if moved < tol {
            // confirm with a plain projected step from the iterate itself
            let g = grad(&x);
            let v: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi + step * gi).collect();
            let p = project(&v, y);
            if p.iter()
                .zip(&x)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
                < tol
            {
                break;
            }
            z = x.clone();
            t = 1.0;
        }
    }
    let objective = x.iter().sum::<f64>()
        - 0.5
            * (0..n)
                .map(|i| x[i] * (0..n).map(|j| q[(i, j)] * x[j]).sum::<f64>())
                .sum::<f64>();
    // b from the margin equations on the support set
    let support: Vec<usize> = (0..n).filter(|&i| x[i] > 1e-7).collect();
    let bias = support
        .iter()
        .map(|&i| {
            let f: f64 = (0..n)
                .map(|j| x[j] * y[j] * (k[(i, j)] + if i == j { 1.0 / c } else { 0.0 }))
                .sum();
            y[i] - f
        })
        .sum::<f64>()
        / support.len() as f64;
    DualOracle {
        alpha: x,
        bias,
        objective,
    }
}

pub fn dual_oracle_check() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut worst_dual, mut worst_h, mut worst_kkt) = (0.0f64, 0.0f64, 0.0f64);
    for instance in 0..20 {
        let n = rng.gen_range(4..=15);
        let d = rng.gen_range(1..=4);
        let train = Arc::new(random_dataset(&mut rng, n, d));
        let probe = random_dataset(&mut rng, 10, d);
        let shape = [
            MetricShape::Full,
            MetricShape::Diagonal,
            MetricShape::Spherical,
        ][instance % 3];
        let metric = random_metric(&mut rng, shape, d);
        let c = [0.1, 1.0, 10.0, 100.0][rng.gen_range(0..4)];

        let model = SvmModel::fit(train.clone(), &metric, c, &SolverOptions::default()).unwrap();
        let k = gram(&metric, train.features()).unwrap().into_values();
        let y = train.labels();
        let oracle = dual_oracle(&k, y, c, 1e-12);

        worst_dual = worst_dual.max((model.dual_objective() - oracle.objective).abs());
        ensure!(
            (model.dual_objective() - oracle.objective).abs() < 1e-6,
            "instance {instance}: dual {} vs oracle {}",
            model.dual_objective(),
            oracle.objective
        );
        let h = model.decision_batch(probe.features()).unwrap();
        let cross = svmllab::kernel::kernel_matrix(&metric, probe.features(), train.features())
            .unwrap()
            .into_values();
        for (r, hr) in h.iter().enumerate() {
            let want: f64 = (0..n)
                .map(|j| oracle.alpha[j] * y[j] * cross[(r, j)])
                .sum::<f64>()
                + oracle.bias;
            worst_h = worst_h.max((hr - want).abs());
            ensure!(
                (hr - want).abs() < 1e-6,
                "instance {instance} probe {r}: {hr} vs {want}"
            );
        }
        for i in 0..n {
            let ridged = y[i] * model.training_decision_ridged(i);
            if model.support_idx().contains(&i) {
                worst_kkt = worst_kkt.max((ridged - 1.0).abs());
                ensure!(
                    (ridged - 1.0).abs() < 1e-8,
                    "instance {instance}: support margin {ridged}"
                );
            } else {
                ensure!(
                    ridged > 1.0 - 1e-8,
                    "instance {instance}: non-support margin {ridged}"
                );
            }
        }
    }
    Ok(format!(
        "20 instances, max |dual gap| {worst_dual:.1e}, max |h gap| {worst_h:.1e}, max margin residual {worst_kkt:.1e}"
    ))
}

/// `½‖w‖² + (C/2) Σ max(0, 1 − y_i(wᵀφ_i + b))²` over explicit features
/// `φ_i` (rows of the Cholesky factor of `K`), minimized by accelerated
/// gradient descent with restarts.
fn primal_oracle(phi: &Mat, y: &[f64], c: f64) -> (Vec<f64>, f64) {
    let (n, p) = (phi.rows(), phi.cols());
    let value_grad = |w: &[f64]| -> (f64, Vec<f64>) {
        let b = w[p];
        let mut g = w[..p].to_vec();
        g.push(0.0);
        let mut f = 0.5 * w[..p].iter().map(|v| v * v).sum::<f64>();
        for i in 0..n {
            let out: f64 = phi.row(i).iter().zip(w).map(|(a, b)| a * b).sum::<f64>() + b;
            let slack = 1.0 - y[i] * out;
            if slack > 0.0 {
                f += 0.5 * c * slack * slack;
                for (gk, a) in g.iter_mut().zip(phi.row(i)) {
                    *gk -= c * slack * y[i] * a;
                }
                g[p] -= c * slack * y[i];
            }
        }
        (f, g)
    };
    let row_sq: f64 = (0..n)
        .map(|i| 1.0 + phi.row(i).iter().map(|v| v * v).sum::<f64>())
        .sum();
    let step = 1.0 / (1.0 + c * row_sq);
    let mut x = vec![0.0; p + 1];
    let mut z = x.clone();
    let mut t = 1.0f64;
    let (mut fx, _) = value_grad(&x);
    for _ in 0..3_000_000 {
        let (_, g) = value_grad(&z);
        let next: Vec<f64> = z.iter().zip(&g).map(|(a, b)| a - step * b).collect();
        let (fn_, gn) = value_grad(&next);
        if fn_ > fx {
            // restart the momentum
            z = x.clone();
            t = 1.0;
            continue;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        z = next
            .iter()
            .zip(&x)
            .map(|(a, b)| a + (t - 1.0) / t_next * (a - b))
            .collect();
        x = next;
        fx = fn_;
        t = t_next;
        if gn.iter().map(|v| v * v).sum::<f64>().sqrt() < 1e-12 {
            break;
        }
    }
    let b = x[p];
    x.truncate(p);
    (x, b)
}

pub fn ridge_primal_check() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut worst = 0.0f64;
    for instance in 0..9 {
        let n = rng.gen_range(6..=20);
        let d = rng.gen_range(1..=3);
        let c = [0.1, 1.0, 10.0][instance % 3];
        let train = Arc::new(random_dataset(&mut rng, n, d));
        let metric = random_metric(&mut rng, MetricShape::Full, d);
        let model = SvmModel::fit(train.clone(), &metric, c, &SolverOptions::default()).unwrap();

        let k = gram(&metric, train.features()).unwrap().into_values();
        // explicit feature map from K = GGᵀ, with a tiny shift for rank-deficient K
        let chol = Cholesky::factor_shifted(k.as_slice(), n, 1e-13).unwrap();
        let phi = chol.factor_matrix();
        let (w, b) = primal_oracle(&phi, train.labels(), c);
        for i in 0..n {
            let want: f64 = phi.row(i).iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + b;
            let got = model.decision_function(train.row(i)).unwrap();
            worst = worst.max((got - want).abs());
            ensure!(
                (got - want).abs() < 1e-6,
                "instance {instance} C={c} point {i}: {got} vs {want}"
            );
        }
    }
    Ok(format!(
        "9 instances, C in {{0.1, 1, 10}}, max |h gap| {worst:.1e}"
    ))
}

/// `A_loo` by direct enumeration of every (i, j) pair.
fn nca_enumerated(train: &Dataset, metric: &LinearMetric) -> f64 {
    let n = train.len();
    let y = train.labels();
    let mut total = 0.0;
    for i in 0..n {
        let w: Vec<f64> = (0..n)
            .map(|k| {
                if k == i {
                    0.0
                } else {
                    (-metric.distance_sq(train.row(i), train.row(k)).unwrap()).exp()
                }
            })
            .collect();
        let z: f64 = w.iter().sum();
        total += (0..n)
            .filter(|&j| y[j] == y[i])
            .map(|j| w[j] / z)
            .sum::<f64>();
    }
    total / n as f64
}

pub fn nca_check() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut worst_a, mut worst_g) = (0.0f64, 0.0f64);
    for _ in 0..10 {
        let n = rng.gen_range(3..=10);
        let d = rng.gen_range(1..=3);
        let train = random_dataset(&mut rng, n, d);
        let metric = random_metric(&mut rng, MetricShape::Full, d);
        let (a, g) = nca_objective(&train, &metric).unwrap();
        let want = nca_enumerated(&train, &metric);
        worst_a = worst_a.max((a - want).abs() / want.abs().max(1e-12));
        ensure!(
            (a - want).abs() <= 1e-5 * want.abs().max(1e-12),
            "{a} vs {want}"
        );
        let h = 1e-6;
        let scale = g.as_slice().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for k in 0..metric.params().len() {
            let mut p = metric.params().to_vec();
            p[k] += h;
            let up = nca_enumerated(&train, &metric.with_params(&p).unwrap());
            p[k] -= 2.0 * h;
            let dn = nca_enumerated(&train, &metric.with_params(&p).unwrap());
            let fd = (up - dn) / (2.0 * h);
            let an = g.as_slice()[k];
            let den = fd.abs().max(an.abs()).max(1e-6 * scale).max(1e-12);
            worst_g = worst_g.max((fd - an).abs() / den);
            ensure!(
                (fd - an).abs() / den < 1e-5,
                "entry {k}: fd {fd} vs analytic {an}"
            );
        }
    }
    Ok(format!(
        "A_loo rel. error {worst_a:.1e}, gradient rel. error {worst_g:.1e}"
    ))
}

pub fn itml_check() -> Result<String, String> {
    let mut worst = 0.0f64;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let train = random_dataset(&mut rng, 20, 3);
    for gamma in [1.0, 0.1] {
        let cfg = ItmlConfig {
            gamma,
            tolerance: 1e-12,
            max_sweeps: 200_000,
            seed: 3,
            ..Default::default()
        };
        let fit = itml_fit(&train, &cfg).unwrap();
        worst = worst.max(fit.max_violation);
        ensure!(
            fit.max_violation < 1e-6,
            "gamma {gamma}: violation {}",
            fit.max_violation
        );
        for con in &fit.constraints {
            let v: Vec<f64> = train
                .row(con.i)
                .iter()
                .zip(train.row(con.j))
                .map(|(a, b)| a - b)
                .collect();
            let d: f64 = (0..3)
                .map(|a| (0..3).map(|b| v[a] * fit.m[(a, b)] * v[b]).sum::<f64>())
                .sum();
            let excess = if con.similar {
                d - con.bound
            } else {
                con.bound - d
            };
            ensure!(
                excess <= 1e-6 * con.bound.max(1.0),
                "gamma {gamma}: {con:?} at distance {d}"
            );
        }
        let (vals, _) = sym_eigen(&fit.m);
        ensure!(*vals.last().unwrap() > 0.0, "M is not PD: {vals:?}");
    }
    Ok(format!(
        "max constraint violation {worst:.1e}, M positive definite"
    ))
}

/// Every iterate is recovered by rerunning with a shorter iteration cap.
pub fn lmnn_check() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let train = random_dataset(&mut rng, 24, 3);
    let base = LmnnConfig {
        max_iterations: 30,
        ..Default::default()
    };
    let fit = lmnn_fit(&train, &base).unwrap();
    for w in fit.objective_trace.windows(2) {
        ensure!(w[1] <= w[0], "objective increased: {} -> {}", w[0], w[1]);
    }
    let targets = target_neighbors(&train, base.k_targets).unwrap();
    let mut iterates = vec![Mat::identity(3)];
    for t in 1..=fit.iterations {
        let cfg = LmnnConfig {
            max_iterations: t,
            ..base.clone()
        };
        iterates.push(lmnn_fit(&train, &cfg).unwrap().m);
    }
    let mut lowest = f64::INFINITY;
    for (t, m) in iterates.iter().enumerate() {
        let (vals, _) = sym_eigen(m);
        lowest = lowest.min(*vals.last().unwrap());
        ensure!(
            *vals.last().unwrap() >= -1e-12,
            "iterate {t} has eigenvalue {}",
            vals.last().unwrap()
        );
        let hinge = lmnn_objective(&train, &targets, m, base.mu).unwrap();
        let slacks = lmnn_slacks(&train, &targets, m).unwrap();
        let xi: Vec<f64> = slacks.iter().map(|t| t.slack).collect();
        let sdp = lmnn_sdp_objective(&train, &targets, m, base.mu, &xi).unwrap();
        ensure!(
            sdp == Some(hinge),
            "iterate {t}: hinge form {hinge} vs slack form {sdp:?}"
        );
    }
    Ok(format!(
        "{} iterates, smallest eigenvalue {lowest:.1e}, objective {:.4} -> {:.4}",
        iterates.len(),
        fit.objective_trace[0],
        fit.objective_trace.last().unwrap()
    ))
}
