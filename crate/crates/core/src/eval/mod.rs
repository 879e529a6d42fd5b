//! Closed-loop execution, the baseline controller and the evaluation matrix.

pub mod baseline;
pub mod matrix;
pub mod mpc;
pub mod report;

pub use baseline::{baseline_plan, BaselinePlan};
pub use matrix::{run_cell, run_matrix, summarize, CellKey, CellRecord, ExperimentResult, MatrixConfig, Method, Scene, Summary};
pub use mpc::{baseline_controller, mpc_execute, NetPolicy, Policy, Prediction, RolloutTrace, Termination, TraceStep};
pub use report::{summary_markdown, cells_csv, read_cells_csv, write_report};
