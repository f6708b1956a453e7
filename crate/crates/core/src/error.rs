use thiserror::Error;

use crate::mdp::Violation;

/// Errors raised by constructors, operators, solvers and oracles.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid MDP: {}", join(.0))]
    InvalidMdp(Vec<Violation>),

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("shape mismatch in {what}: expected {expected}, found {found}")]
    ShapeMismatch { what: &'static str, expected: String, found: String },

    #[error("temperature must be strictly positive and finite, got {0}")]
    NonPositiveEta(f64),

    #[error("prior policy has a non-positive entry at [{state}][{action}]")]
    ZeroPriorEntry { state: usize, action: usize },

    #[error("policy has a zero entry at [{state}][{action}] where log-probabilities are required")]
    ZeroPolicyEntry { state: usize, action: usize },

    #[error("log-sum-exp of an empty vector")]
    EmptyInput,

    #[error("non-finite input at index {0}")]
    NonFiniteInput(usize),

    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    #[error("no softmax policy exists for the unregularized objective")]
    UnregularizedSoftmax,

    #[error("operation requires an entropy or KL regularizer")]
    RegularizerRequired,

    #[error("singular linear system at pivot {0}")]
    SingularSystem(usize),

    #[error("policy evaluation did not converge in {iterations} iterations (residual {residual:e})")]
    EvaluationDiverged { iterations: usize, residual: f64 },

    #[error("value iteration did not converge in {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("instance too large for exhaustive check: {states} states x {actions} actions (limit {limit} x {limit})")]
    InstanceTooLarge { states: usize, actions: usize, limit: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

fn join(violations: &[Violation]) -> String {
    violations.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
