//! Tabular regularized MDPs.
//!
//! Two routes to the optimal entropy- or KL-regularized policy:
//!
//! * soft value iteration, iterating the log-sum-exp optimality backup
//!   `V(s) = η log Σ_a π̄(a|s) exp((r(s,a) + γ E[V(s')]) / η)` and reading off
//!   the softmax policy, and
//! * soft policy iteration, alternating exact (or iterative) soft policy
//!   evaluation with softmax improvement.
//!
//! [`equivalence`] runs both and measures the distance between their fixed
//! points; [`oracle`] holds independent certificates (KKT residuals,
//! dominance checks, brute-force policy sweeps).
//!
//! Everything is generic over a [`Scalar`] (`f32` or `f64`); the `*F64` and
//! `*F32` aliases below name the concrete instantiations.

// Comparisons like `!(x > 0)` are written that way on purpose so NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod equivalence;
pub mod error;
pub mod linalg;
pub mod mdp;
pub mod operators;
pub mod oracle;
pub mod scalar;
pub mod solvers;
pub mod suite;

pub use equivalence::{
    check_equivalence, run_equivalence, sweep, EquivalenceReport, EquivalenceRun, Sweep, SweepSummary, Verdict,
};
pub use error::{Error, Result};
pub use mdp::{
    random_mdp, random_mdp_with, random_positive_policy, seeded_rng, uniform_policy, validate_mdp, Policy, QFn,
    Regularizer, TabularMdp, ValueFn, Violation,
};
pub use operators::{
    greedy_policy, log_sum_exp, optimal_backup, policy_entropy, policy_kl, policy_value, q_from_v, soft_bellman_backup,
    softmax_policy, BackupResult,
};
pub use oracle::{exhaustive_policy_check, kkt_residual, long_run_reference, proposition1_check};
pub use scalar::Scalar;
pub use solvers::{
    policy_state_values, soft_policy_evaluation, soft_policy_improvement, soft_policy_iteration, soft_value_iteration,
    EvaluationMode, SolveConfig, SolveReport,
};
pub use suite::{generate_suite, RegKind, SuiteInstance, SuiteSpec};

pub type TabularMdpF64 = TabularMdp<f64>;
pub type PolicyF64 = Policy<f64>;
pub type ValueFnF64 = ValueFn<f64>;
pub type QFnF64 = QFn<f64>;
pub type RegularizerF64 = Regularizer<f64>;
pub type SolveConfigF64 = SolveConfig<f64>;
pub type SolveReportF64 = SolveReport<f64>;
pub type EquivalenceReportF64 = EquivalenceReport<f64>;

pub type TabularMdpF32 = TabularMdp<f32>;
pub type PolicyF32 = Policy<f32>;
pub type ValueFnF32 = ValueFn<f32>;
pub type QFnF32 = QFn<f32>;
pub type RegularizerF32 = Regularizer<f32>;
pub type SolveConfigF32 = SolveConfig<f32>;
pub type SolveReportF32 = SolveReport<f32>;
pub type EquivalenceReportF32 = EquivalenceReport<f32>;
