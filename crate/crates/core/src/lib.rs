//! Failure-aware harness for method comparison studies.
//!
//! * [`table`]: typed success/failure cells and the method×dataset grid.
//! * [`aggregate`]: unconditional/conditional aggregates, imputation,
//!   failure proportions, rankings and coverage.
//! * [`pipeline`]: fallback pipelines with first-success semantics.
//! * [`engine`]: deterministic seeded grid execution with failure capture.
//! * [`study_or`]: odds-ratio estimation study with sampling zeros.
//! * [`study_ci`]: coverage study of naive vs. corrected resampling CIs.
//! * [`report`]: three-fold reports, failure summaries, rank divergence, SVG.

pub mod aggregate;
pub mod engine;
pub mod pipeline;
pub mod report;
pub mod study_ci;
pub mod study_or;
pub mod table;

pub use table::fixtures;
pub use table::{
    build_table, did, joint_success_set, mid, success_set, DatasetId, Failure, FailureKind,
    MethodId, ResultTable, RunOutcome, TableError,
};

/// Harness version embedded in every report.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
