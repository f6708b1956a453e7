//! Soft value iteration and soft policy iteration.

use crate::error::{Error, Result};
use crate::linalg::solve_dense;
use crate::mdp::{uniform_policy, Policy, QFn, Regularizer, TabularMdp, ValueFn};
use crate::operators::{
    greedy_policy, optimal_backup_into, policy_value_unchecked, q_from_v_unchecked, regularization_bonus,
    soft_bellman_backup, softmax_policy,
};
use crate::scalar::Scalar;

/// Default sup-norm stopping threshold.
pub const DEFAULT_TOLERANCE: f64 = 1e-10;
/// Default iteration cap.
pub const DEFAULT_MAX_ITERATIONS: usize = 100_000;

/// How soft policy evaluation computes `Q^π`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EvaluationMode {
    /// Repeated soft Bellman backups from `Q = 0` until the sup-norm change
    /// drops below the tolerance.
    Iterative,
    /// Dense solve of `(I - γ P_π) V = r_π + η Δ_π`, then `Q = r + γ P V`.
    #[default]
    ExactLinear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveConfig<T> {
    pub tolerance: T,
    pub max_iterations: usize,
    pub evaluation_mode: EvaluationMode,
    /// Keep the per-iteration residuals in [`SolveReport::trace`].
    pub record_trace: bool,
}

impl<T: Scalar> Default for SolveConfig<T> {
    fn default() -> Self {
        SolveConfig {
            tolerance: T::lit(DEFAULT_TOLERANCE),
            max_iterations: DEFAULT_MAX_ITERATIONS,
            evaluation_mode: EvaluationMode::default(),
            record_trace: false,
        }
    }
}

impl<T: Scalar> SolveConfig<T> {
    pub fn with_tolerance(mut self, tolerance: T) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn with_max_iterations(mut self, max_iterations: usize) -> Self {
        self.max_iterations = max_iterations;
        self
    }

    pub fn with_evaluation_mode(mut self, mode: EvaluationMode) -> Self {
        self.evaluation_mode = mode;
        self
    }

    pub fn with_trace(mut self, record: bool) -> Self {
        self.record_trace = record;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > T::zero() && self.tolerance.is_finite()) {
            return Err(Error::InvalidParameter(format!("tolerance must be positive, got {}", self.tolerance)));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidParameter("max_iterations must be at least 1".into()));
        }
        Ok(())
    }
}

/// Output of either solver route.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport<T> {
    pub fixed_point_v: ValueFn<T>,
    pub fixed_point_q: QFn<T>,
    pub policy: Policy<T>,
    pub iterations: usize,
    /// Last sup-norm change: of `V` for value iteration, of `Q^{π_k}` for
    /// policy iteration.
    pub final_residual: T,
    pub converged: bool,
    pub trace: Option<Vec<T>>,
    /// Policy iteration only: the smallest entry of `Q^{π_{k+1}} - Q^{π_k}`
    /// over all steps. Nonnegative up to rounding when every step improves.
    pub min_q_increment: Option<T>,
}

fn check_inputs<T: Scalar>(mdp: &TabularMdp<T>, reg: &Regularizer<T>, config: &SolveConfig<T>) -> Result<()> {
    let violations = crate::mdp::validate_mdp(mdp);
    if !violations.is_empty() {
        return Err(Error::InvalidMdp(violations));
    }
    reg.check(mdp.num_states, mdp.num_actions)?;
    config.validate()
}

/// Policy attached to a value-iteration fixed point: softmax of `Q̃⋆`, or
/// greedy when unregularized.
fn extract_policy<T: Scalar>(q: &QFn<T>, reg: &Regularizer<T>) -> Result<Policy<T>> {
    match reg {
        Regularizer::None => Ok(greedy_policy(q)),
        _ => softmax_policy(q, reg),
    }
}

/// Iterates the optimal (log-sum-exp) backup from `v0` (zeros by default).
///
/// Stops once the sup-norm change is below the tolerance. Running out of
/// iterations is reported with `converged = false`, not as an error.
pub fn soft_value_iteration<T: Scalar>(
    mdp: &TabularMdp<T>,
    reg: &Regularizer<T>,
    config: &SolveConfig<T>,
    v0: Option<&ValueFn<T>>,
) -> Result<SolveReport<T>> {
    check_inputs(mdp, reg, config)?;
    let mut v = match v0 {
        Some(v0) => {
            v0.check_shape(mdp.num_states)?;
            v0.as_slice().to_vec()
        }
        None => vec![T::zero(); mdp.num_states],
    };
    let mut next = vec![T::zero(); mdp.num_states];
    let mut scratch = vec![T::zero(); mdp.num_actions];
    let mut trace = config.record_trace.then(Vec::new);
    let mut residual = T::infinity();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < config.max_iterations {
        residual = optimal_backup_into(mdp, reg, &v, &mut next, &mut scratch);
        std::mem::swap(&mut v, &mut next);
        iterations += 1;
        if let Some(t) = trace.as_mut() {
            t.push(residual);
        }
        if residual < config.tolerance {
            converged = true;
            break;
        }
    }
    let v = ValueFn::new(v);
    let q = q_from_v_unchecked(mdp, &v);
    let policy = extract_policy(&q, reg)?;
    Ok(SolveReport {
        fixed_point_v: v,
        fixed_point_q: q,
        policy,
        iterations,
        final_residual: residual,
        converged,
        trace,
        min_q_increment: None,
    })
}

/// `Q^π`, the fixed point of the soft Bellman operator for `policy`.
///
/// Zero-probability actions are allowed; they contribute nothing to the
/// state value (`0 log 0 = 0`).
pub fn soft_policy_evaluation<T: Scalar>(
    mdp: &TabularMdp<T>,
    reg: &Regularizer<T>,
    policy: &Policy<T>,
    config: &SolveConfig<T>,
) -> Result<QFn<T>> {
    check_inputs(mdp, reg, config)?;
    policy.check_shape(mdp.num_states, mdp.num_actions)?;
    evaluate(mdp, reg, policy, config)
}

fn evaluate<T: Scalar>(
    mdp: &TabularMdp<T>,
    reg: &Regularizer<T>,
    policy: &Policy<T>,
    config: &SolveConfig<T>,
) -> Result<QFn<T>> {
    match config.evaluation_mode {
        EvaluationMode::ExactLinear => {
            let v = policy_state_values(mdp, reg, policy)?;
            Ok(q_from_v_unchecked(mdp, &v))
        }
        EvaluationMode::Iterative => {
            let mut q = QFn::zeros(mdp.num_states, mdp.num_actions);
            let mut residual = T::infinity();
            for _ in 0..config.max_iterations {
                let next = soft_bellman_backup(mdp, reg, policy, &q)?;
                residual = next.sup_distance(&q);
                q = next;
                if residual < config.tolerance {
                    return Ok(q);
                }
            }
            Err(Error::EvaluationDiverged { iterations: config.max_iterations, residual: residual.as_f64() })
        }
    }
}

/// Exact `V^π` from the dense linear system
/// `(I - γ P_π) V = r_π + η Δ_π`.
pub fn policy_state_values<T: Scalar>(
    mdp: &TabularMdp<T>,
    reg: &Regularizer<T>,
    policy: &Policy<T>,
) -> Result<ValueFn<T>> {
    let n = mdp.num_states;
    let mut a = vec![T::zero(); n * n];
    let mut b = vec![T::zero(); n];
    for s in 0..n {
        let row = policy.row(s);
        let mut r_pi = T::zero();
        for (act, &p) in row.iter().enumerate() {
            if !(p > T::zero()) {
                continue;
            }
            r_pi = r_pi + p * mdp.reward(s, act);
            for (s2, &t) in mdp.transition_row(s, act).iter().enumerate() {
                a[s * n + s2] = a[s * n + s2] - mdp.gamma * p * t;
            }
        }
        a[s * n + s] = a[s * n + s] + T::one();
        b[s] = r_pi + regularization_bonus(reg, policy, s);
    }
    solve_dense(a, b).map(ValueFn::new)
}

/// Improvement step: softmax of `q` (prior-weighted for KL). The
/// unregularized case takes the greedy limit, lowest index on ties.
pub fn soft_policy_improvement<T: Scalar>(q: &QFn<T>, reg: &Regularizer<T>) -> Result<Policy<T>> {
    extract_policy(q, reg)
}

/// Alternates policy evaluation and improvement from `pi0` (uniform by
/// default) until `‖Q^{π_{k+1}} - Q^{π_k}‖_∞` drops below the tolerance.
///
/// The reported value is the soft state value of the final `Q^π` under the
/// final policy.
pub fn soft_policy_iteration<T: Scalar>(
    mdp: &TabularMdp<T>,
    reg: &Regularizer<T>,
    config: &SolveConfig<T>,
    pi0: Option<&Policy<T>>,
) -> Result<SolveReport<T>> {
    check_inputs(mdp, reg, config)?;
    let mut policy = match pi0 {
        Some(p) => {
            p.check_shape(mdp.num_states, mdp.num_actions)?;
            if !matches!(reg, Regularizer::None) {
                if let Some((s, a)) = p.first_zero() {
                    return Err(Error::InvalidPolicy(format!(
                        "initial policy must be strictly positive, zero at [{s}][{a}]"
                    )));
                }
            }
            p.clone()
        }
        None => uniform_policy(mdp),
    };
    let mut q = evaluate(mdp, reg, &policy, config)?;
    let mut trace = config.record_trace.then(Vec::new);
    let mut residual = T::infinity();
    let mut min_increment = T::infinity();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < config.max_iterations {
        let improved = soft_policy_improvement(&q, reg)?;
        let next_q = evaluate(mdp, reg, &improved, config)?;
        residual = next_q.sup_distance(&q);
        min_increment = min_increment.min(next_q.min_difference(&q));
        policy = improved;
        q = next_q;
        iterations += 1;
        if let Some(t) = trace.as_mut() {
            t.push(residual);
        }
        if residual < config.tolerance {
            converged = true;
            break;
        }
    }
    let v = policy_value_unchecked(reg, &policy, &q);
    Ok(SolveReport {
        fixed_point_v: v,
        fixed_point_q: q,
        policy,
        iterations,
        final_residual: residual,
        converged,
        trace,
        min_q_increment: Some(min_increment),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{random_mdp, random_positive_policy, seeded_rng};

    const LN2: f64 = std::f64::consts::LN_2;

    fn self_loop(rewards: Vec<f64>) -> TabularMdp<f64> {
        let na = rewards.len();
        TabularMdp::new(1, na, 0.5, rewards, vec![1.0; na]).unwrap()
    }

    fn uniform_kl(ns: usize, na: usize, eta: f64) -> Regularizer<f64> {
        Regularizer::kl_to_prior(eta, Policy::new(ns, na, vec![1.0 / na as f64; ns * na]).unwrap()).unwrap()
    }

    #[test]
    fn single_action_geometric_series() {
        let mdp = self_loop(vec![1.0]);
        let cfg = SolveConfig::default();
        for reg in [Regularizer::None, Regularizer::entropy(1.0).unwrap(), uniform_kl(1, 1, 1.0)] {
            let vi = soft_value_iteration(&mdp, &reg, &cfg, None).unwrap();
            assert!(vi.converged);
            assert!((vi.fixed_point_v[0] - 2.0).abs() <= 1e-10);
            assert!((vi.fixed_point_q[(0, 0)] - 2.0).abs() <= 1e-10);
            assert_eq!(vi.policy.as_slice(), &[1.0]);

            let spi = soft_policy_iteration(&mdp, &reg, &cfg, None).unwrap();
            assert!(spi.converged);
            assert_eq!(spi.fixed_point_q.as_slice(), &[2.0]);
            assert_eq!(spi.fixed_point_v.as_slice(), &[2.0]);
        }
    }

    #[test]
    fn symmetric_two_action_closed_forms() {
        let mdp = self_loop(vec![0.0, 0.0]);
        let cfg = SolveConfig::default();
        let entropy = Regularizer::entropy(1.0).unwrap();
        let vi = soft_value_iteration(&mdp, &entropy, &cfg, None).unwrap();
        assert!((vi.fixed_point_v[0] - 2.0 * LN2).abs() < 1e-9);
        assert_eq!(vi.policy.as_slice(), &[0.5, 0.5]);

        let vi = soft_value_iteration(&mdp, &uniform_kl(1, 2, 1.0), &cfg, None).unwrap();
        assert!(vi.fixed_point_v[0].abs() < 1e-9);
        assert_eq!(vi.policy.as_slice(), &[0.5, 0.5]);

        let spi = soft_policy_iteration(&mdp, &entropy, &cfg, None).unwrap();
        assert_eq!(spi.policy.as_slice(), &[0.5, 0.5]);
        for &q in spi.fixed_point_q.as_slice() {
            assert!((q - LN2).abs() < 1e-12);
        }
        assert!((spi.fixed_point_v[0] - 2.0 * LN2).abs() < 1e-12);
    }

    #[test]
    fn value_iteration_matches_tight_reference() {
        let mdp = random_mdp(17, 5, 3, 0.9, (-1.0, 1.0)).unwrap();
        let reg = Regularizer::entropy(0.5).unwrap();
        let report = soft_value_iteration(&mdp, &reg, &SolveConfig::default(), None).unwrap();
        // Oracle: 10x the iteration budget at 10x tighter tolerance.
        let tight = SolveConfig::default().with_tolerance(1e-11).with_max_iterations(10 * DEFAULT_MAX_ITERATIONS);
        let reference = soft_value_iteration(&mdp, &reg, &tight, None).unwrap();
        assert!(reference.converged);
        assert!(report.fixed_point_v.sup_distance(&reference.fixed_point_v) < 1e-8);
    }

    #[test]
    fn value_iteration_residuals_contract() {
        let mdp = random_mdp(3, 6, 4, 0.9, (-1.0, 1.0)).unwrap();
        let reg = Regularizer::entropy(0.3).unwrap();
        let cfg = SolveConfig::default().with_trace(true);
        let report = soft_value_iteration(&mdp, &reg, &cfg, None).unwrap();
        let trace = report.trace.unwrap();
        assert_eq!(trace.len(), report.iterations);
        for w in trace.windows(2) {
            assert!(w[1] <= 0.9 * w[0] + 1e-12, "{} > 0.9 * {}", w[1], w[0]);
        }
        assert!(report.final_residual <= cfg.tolerance);
    }

    #[test]
    fn non_convergence_is_reported() {
        let mdp = random_mdp(3, 4, 2, 0.9, (-1.0, 1.0)).unwrap();
        let reg = Regularizer::entropy(1.0).unwrap();
        let cfg = SolveConfig::default().with_max_iterations(3);
        let vi = soft_value_iteration(&mdp, &reg, &cfg, None).unwrap();
        assert!(!vi.converged);
        assert_eq!(vi.iterations, 3);
        let spi = soft_policy_iteration(&mdp, &reg, &SolveConfig::default().with_max_iterations(1), None).unwrap();
        assert!(!spi.converged);
        assert_eq!(spi.iterations, 1);
    }

    #[test]
    fn evaluation_examples() {
        let mdp = self_loop(vec![0.0, 0.0]);
        let entropy = Regularizer::entropy(1.0).unwrap();
        let pi = Policy::from_rows(vec![vec![0.5, 0.5]]).unwrap();
        for mode in [EvaluationMode::ExactLinear, EvaluationMode::Iterative] {
            let cfg = SolveConfig::default().with_evaluation_mode(mode);
            let q = soft_policy_evaluation(&mdp, &entropy, &pi, &cfg).unwrap();
            for &x in q.as_slice() {
                assert!((x - LN2).abs() < 1e-9);
            }
        }
        let mdp = self_loop(vec![1.0]);
        let pi = Policy::from_rows(vec![vec![1.0]]).unwrap();
        let q = soft_policy_evaluation(&mdp, &Regularizer::None, &pi, &SolveConfig::default()).unwrap();
        assert_eq!(q.as_slice(), &[2.0]);
    }

    #[test]
    fn evaluation_modes_agree() {
        let mut rng = seeded_rng(5);
        for seed in 0..10 {
            let mdp = random_mdp(seed, 6, 3, 0.9, (-1.0, 1.0)).unwrap();
            let pi = random_positive_policy(&mut rng, 6, 3);
            for reg in [
                Regularizer::entropy(0.7).unwrap(),
                Regularizer::kl_to_prior(0.7, random_positive_policy(&mut rng, 6, 3)).unwrap(),
            ] {
                let exact = soft_policy_evaluation(&mdp, &reg, &pi, &SolveConfig::default()).unwrap();
                let cfg = SolveConfig::default().with_evaluation_mode(EvaluationMode::Iterative);
                let iterative = soft_policy_evaluation(&mdp, &reg, &pi, &cfg).unwrap();
                assert!(exact.sup_distance(&iterative) < 1e-8);
            }
        }
    }

    #[test]
    fn iterative_evaluation_reports_divergence() {
        let mdp = random_mdp(1, 3, 2, 0.9, (-1.0, 1.0)).unwrap();
        let pi = crate::mdp::uniform_policy(&mdp);
        let cfg = SolveConfig::default().with_evaluation_mode(EvaluationMode::Iterative).with_max_iterations(2);
        assert!(matches!(
            soft_policy_evaluation(&mdp, &Regularizer::entropy(1.0).unwrap(), &pi, &cfg),
            Err(Error::EvaluationDiverged { iterations: 2, .. })
        ));
    }

    #[test]
    fn improvement_examples() {
        let q = QFn::<f64>::from_rows(vec![vec![1.0, 0.0]]).unwrap();
        let pi = soft_policy_improvement(&q, &Regularizer::entropy(1.0).unwrap()).unwrap();
        assert!((pi.prob(0, 0) - 0.731_058_578_630_004_9).abs() < 1e-15);

        let flat = QFn::<f64>::from_rows(vec![vec![4.0; 3], vec![-2.0; 3]]).unwrap();
        let pi = soft_policy_improvement(&flat, &Regularizer::entropy(0.1).unwrap()).unwrap();
        assert!(pi.as_slice().iter().all(|&p| (p - 1.0 / 3.0).abs() < 1e-15));
        let prior = Policy::from_rows(vec![vec![0.2, 0.3, 0.5], vec![0.6, 0.3, 0.1]]).unwrap();
        let pi = soft_policy_improvement(&flat, &Regularizer::kl_to_prior(0.1, prior.clone()).unwrap()).unwrap();
        for (p, q) in pi.as_slice().iter().zip(prior.as_slice()) {
            assert!((p - q).abs() < 1e-15);
        }
    }

    #[test]
    fn improvement_dominates_on_random_instances() {
        let mut rng = seeded_rng(12);
        for seed in 0..10 {
            let mdp = random_mdp(100 + seed, 5, 3, 0.85, (-1.0, 1.0)).unwrap();
            let reg = Regularizer::entropy(0.4).unwrap();
            let pi = random_positive_policy(&mut rng, 5, 3);
            let cfg = SolveConfig::default();
            let q = soft_policy_evaluation(&mdp, &reg, &pi, &cfg).unwrap();
            let improved = soft_policy_improvement(&q, &reg).unwrap();
            let q2 = soft_policy_evaluation(&mdp, &reg, &improved, &cfg).unwrap();
            assert!(q2.min_difference(&q) >= -1e-9);
        }
    }

    #[test]
    fn point_mass_initial_policy_rejected_when_regularized() {
        let mdp = self_loop(vec![0.0, 0.0]);
        let pi0 = Policy::from_rows(vec![vec![1.0, 0.0]]).unwrap();
        let err = soft_policy_iteration(&mdp, &Regularizer::entropy(1.0).unwrap(), &SolveConfig::default(), Some(&pi0));
        assert!(matches!(err, Err(Error::InvalidPolicy(_))));
        let ok = soft_policy_iteration(&mdp, &Regularizer::None, &SolveConfig::default(), Some(&pi0));
        assert!(ok.is_ok());
    }

    #[test]
    fn unregularized_routes_agree() {
        let mdp = random_mdp(44, 7, 4, 0.9, (-1.0, 1.0)).unwrap();
        let cfg = SolveConfig::default();
        let vi = soft_value_iteration(&mdp, &Regularizer::None, &cfg, None).unwrap();
        let pi = soft_policy_iteration(&mdp, &Regularizer::None, &cfg, None).unwrap();
        assert!(pi.converged);
        assert!(vi.fixed_point_v.sup_distance(&pi.fixed_point_v) < 1e-8);
        assert_eq!(vi.policy, pi.policy);
    }

    #[test]
    fn invalid_config_rejected() {
        let mdp = self_loop(vec![1.0]);
        let reg = Regularizer::entropy(1.0).unwrap();
        let bad = SolveConfig::default().with_tolerance(0.0);
        assert!(soft_value_iteration(&mdp, &reg, &bad, None).is_err());
        let bad = SolveConfig::default().with_max_iterations(0);
        assert!(soft_policy_iteration(&mdp, &reg, &bad, None).is_err());
        assert!(soft_value_iteration(&mdp, &reg, &SolveConfig::default(), Some(&ValueFn::zeros(3))).is_err());
    }

    #[test]
    fn single_precision_routes_agree() {
        let mdp = random_mdp::<f32>(8, 4, 3, 0.8, (-1.0, 1.0)).unwrap();
        let reg = Regularizer::entropy(0.5f32).unwrap();
        let cfg = SolveConfig::<f32>::default().with_tolerance(1e-5);
        let vi = soft_value_iteration(&mdp, &reg, &cfg, None).unwrap();
        let spi = soft_policy_iteration(&mdp, &reg, &cfg, None).unwrap();
        assert!(vi.converged && spi.converged);
        assert!(vi.fixed_point_q.sup_distance(&spi.fixed_point_q) < 1e-3);
    }
}
