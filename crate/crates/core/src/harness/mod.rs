//! Experiment orchestration: validation suites, evaluation, the baseline
//! audit and multi-seed studies with CSV and SVG output.

mod audit;
mod eval;
pub mod plot;
mod study;
mod suite;

pub use audit::{audit_random_init, AuditReport};
pub use eval::{evaluate, run_episode, EvalReport};
pub use study::{
    mean_sd, parse_ratio, run_cells, run_study, summarize, train_in_box, train_on_pool, write_study_outputs, CellRun,
    DistSpec, EnvKind, RunConfig, StudyReport, StudySetup, SummaryRow,
};
pub use suite::{build_validation_suite, ValidationSuite};
