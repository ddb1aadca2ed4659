//! Metric learning for RBF-kernel SVMs by descent on a smoothed validation loss.

pub mod baselines;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod kernel;
pub mod linalg;
pub mod metric;
pub mod optim;
pub mod svm;
pub mod svml;

pub use dataset::Dataset;
pub use error::{Error, Result};
pub use linalg::Mat;
pub use metric::{LinearMetric, MetricShape};
pub use svm::{SolverOptions, SvmModel};
