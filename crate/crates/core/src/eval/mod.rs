//! Cross-validation, benchmarking, reports and decision-surface export.

pub mod benchmark;
pub mod cv;
pub mod report;
pub mod surface;

pub use benchmark::{
    aggregate, benchmark_partition, fit_method, fit_svml_pipeline, normalize_to_grid,
    prepare_repeat, read_journal, run_benchmark, run_cell, training_partition, BenchmarkConfig,
    CellResult, JournalEntry, MethodId, ResultRow, Trained, DEFAULT_SEED,
};
pub use cv::{cv_select, make_folds, width_factor, CvCell, CvSelection, GridConfig};
pub use report::{render_table, TableFormat};
pub use surface::{surface_grid, SurfaceGrid};
