//! Sparse recovery with Orthogonal Matching Pursuit with Thresholding (OMPT).
//!
//! OMPT accepts the first atom whose correlation with the residual clears
//! `t |r|`, instead of scanning the whole dictionary for the maximum as OMP
//! does. The crate also provides the coherence and restricted-isometry
//! quantities that certify when a threshold `t` provably works, a brute-force
//! `l0` oracle for small instances, and a reproducible benchmark harness.

pub mod cli;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod metrics;
pub mod oracle;
pub mod solvers;
pub mod subsets;
pub mod thresholds;

pub use error::{Error, Result};
pub use experiments::{
    build_gaussian_dictionary, build_identity_fourier_dictionary, convergence_check, export_report,
    generate_sparse_signal, run_trials, ConvergenceInstance, ConvergenceReport, Measurement,
    OmptStopping, ReportFormat, TrialConfig, TrialReport, TrialRow, ValueDistribution,
};
pub use linalg::{normalize_columns, Dictionary, SparseSignal, SupportSet};
pub use metrics::{coherence_report, CoherenceReport};
pub use oracle::{sparsest_solution, verify_spark_condition, OracleSolution};
pub use solvers::{
    omp, ompt, recover_sparse, RecoveryResult, ScanOrder, SolverOptions, StopReason, Strategy,
};
pub use thresholds::{
    corollary_interval, corollary_intervals, error_bound, iteration_bound, max_noise_level,
    noiseless_interval, noisy_interval, CorollaryCondition, IntervalSource, ThresholdInterval,
};
