//! Experiment harness: stream and workload generation, experiment runners
//! producing CSV and summary JSON, Monte Carlo privacy audits and the
//! runtime validation suite.
//!
//! Every trial derives its randomness from `(seed, trial)`, so results do
//! not depend on how trials are scheduled across threads.

pub mod audit;
pub mod experiment;
pub mod stream;
pub mod validate;
pub mod workload;

pub use audit::{atg_audit, dp_audit, laplace_audit, AuditOptions, AuditReport, Binning, Side};
pub use experiment::{
    audit_csv, compose_report, fmt_num, run_audit, run_ermg_experiment, run_improver_experiment, run_pmwg,
    run_scheduler, run_sparse, AuditExperiment, AuditTarget, ComposeReport, ErmgExperiment, ExperimentOutput,
    ImproverExperiment, MechanismKind, Overrides, PmwgExperiment, SchedulerExperiment, SparseExperiment, Summary,
    ValueEvent,
};
pub use stream::{generate_stream, StreamSpec};
pub use validate::{validate_all, CheckResult};
pub use workload::{adaptive_distinguisher, query_class, workload_events, WorkloadKind, WorkloadSpec};
