//! Experiment plumbing: dataset ingestion and export, canvas generation,
//! the four-way attack matrix, statistics, and report emission.

pub mod canvas;
pub mod dataset;
pub mod matrix;
pub mod report;
pub mod stats;
pub mod synth;

pub use canvas::{generate_irregular, generate_regular, Pattern};
pub use dataset::{load_dataset, save_idx, save_png_tree, Dataset, DatasetFormat};
pub use matrix::{
    default_canvases, run_matrix, AttemptRecord, CanvasSpec, ExperimentConfig, Head, MatrixOutput,
    Probe, ProbeKind,
};
pub use report::{
    emit_report, load_attempts_csv, summarize, write_attempts_csv, CellReport, ExperimentReport,
    FailureCounts, HeadComparison, ATTEMPTS_CSV, REPORT_MD, SUMMARY_CSV,
};
pub use stats::{compute_stats, paired_ttest, student_t_two_sided_p, CellStats, PairedTTest};
pub use synth::generate_synthetic_dataset;
