//! Instrumented optimizer simulations.

pub mod optimizer;
pub mod orthogonal;
pub mod problem;
pub mod toy;
pub mod trace;

pub use optimizer::{step_adamw, Hyper, OptimizerConfig, OptimizerKind, OptimizerState};
pub use orthogonal::{orthogonal_forgetting_experiment, ForgettingProbe};
pub use problem::{gradient_check, Quadratic, SimProblem, ZeroGradient};
pub use toy::{DEFAULT_LR as TOY_LR, DEFAULT_REPEAT_BLOCK as TOY_REPEAT_BLOCK, DEFAULT_STEPS as TOY_STEPS, run_toy, toy_contamination_run, toy_optimizer, Continuation, GapPoint, GapSeries, ToyCorpus, ToySettings};
pub use trace::{reconstruct_theta, run_from, run_sim, max_relative_error, SimTrace, StepRecord};
