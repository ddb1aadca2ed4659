//! Reference metric learners and the k-nearest-neighbor rule.

pub mod itml;
pub mod knn;
pub mod lmnn;
pub mod nca;

pub use itml::{itml_fit, ItmlConfig, ItmlFit};
pub use knn::{knn_error, knn_predict, knn_predict_batch, target_neighbors};
pub use lmnn::{
    lmnn_fit, lmnn_objective, lmnn_sdp_objective, lmnn_slacks, LmnnConfig, LmnnFit, Triple,
};
pub use nca::{nca_fit, nca_objective, nca_probabilities, NcaConfig};
