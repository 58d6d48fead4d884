//! Recognition-memory designs, 2AFC sessions and run aggregation.

pub mod aggregate;
pub mod design;
pub mod session;

pub use aggregate::{aggregate_runs, mean_sem, write_aggregates, Aggregate, AGGREGATE_HEADER};
pub use design::{
    build_brady, build_konkle, build_paired, check_relations, Condition, Design, Experiment, TestTrial, KONKLE_LEVELS,
};
pub use session::{
    decide, exposure_sweep, read_results, run_session, run_trial, run_trials, write_results, ChoiceOutcome, ConditionResult,
    ImageStore, ResultRow, RunResult, SweepOutcome,
};
