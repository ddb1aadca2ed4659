#![allow(dead_code)]

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

pub mod oracle;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use svmllab::metric::{InitScale, LinearMetric, MetricShape};
use svmllab::Dataset;

/// `n` points in `[-2, 2]^d` with a noisy nonlinear labelling; the first
/// two points are forced to opposite classes.
pub fn random_dataset(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Dataset {
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect())
        .collect();
    let mut labels: Vec<f64> = rows
        .iter()
        .map(|r| {
            let s = r[0] * r[0] - 1.0 + 0.5 * r[d - 1] + rng.gen_range(-0.5..0.5);
            if s >= 0.0 {
                1.0
            } else {
                -1.0
            }
        })
        .collect();
    labels[0] = 1.0;
    labels[1] = -1.0;
    Dataset::from_rows(&rows, &labels).unwrap()
}

/// The default `I/√d` metric of `shape` with every parameter perturbed.
pub fn random_metric(rng: &mut ChaCha8Rng, shape: MetricShape, d: usize) -> LinearMetric {
    let base = LinearMetric::init_default(shape, d, None, InitScale::InvSqrtD).unwrap();
    let p: Vec<f64> = base
        .params()
        .iter()
        .map(|v| v + rng.gen_range(-0.3..0.3) / (d as f64).sqrt())
        .collect();
    base.with_params(&p).unwrap()
}
