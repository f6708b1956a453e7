//! Runs both solver routes on one instance and measures how far apart their
//! fixed points are.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mdp::{Policy, Regularizer, TabularMdp};
use crate::scalar::Scalar;
use crate::solvers::{soft_policy_iteration, soft_value_iteration, SolveConfig, SolveReport};

/// Default pass threshold on the Q and policy gaps.
pub const DEFAULT_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    /// Both routes converged but a gap exceeded the threshold.
    GapExceeded,
    /// At least one route hit its iteration cap.
    NotConverged {
        value_iteration: bool,
        policy_iteration: bool,
    },
}

impl Verdict {
    pub fn is_pass(self) -> bool {
        self == Verdict::Pass
    }

    pub fn label(self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::GapExceeded => "fail",
            Verdict::NotConverged { .. } => "not_converged",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquivalenceReport<T> {
    /// `‖Q^{π⋆} - Q̃⋆‖_∞`.
    pub q_gap: T,
    /// `‖V^{π⋆} - Ṽ⋆‖_∞`.
    pub v_gap: T,
    /// `max_s TV(π⋆(·|s), π̃⋆(·|s))`.
    pub policy_gap: T,
    /// `max_s V^{π⋆}(s) - Ṽ⋆(s)`; at most rounding-level positive when the
    /// policy-iteration value is dominated by the optimal value.
    pub spi_value_excess: T,
    /// Smallest step change of `Q^{π_k}` along the policy-iteration path.
    pub spi_min_q_increment: T,
    pub vi_iterations: usize,
    pub spi_iterations: usize,
    pub vi_residual: T,
    pub spi_residual: T,
    pub threshold: T,
    pub verdict: Verdict,
}

/// Both solver reports alongside the comparison.
#[derive(Debug, Clone)]
pub struct EquivalenceRun<T> {
    pub report: EquivalenceReport<T>,
    pub value_iteration: SolveReport<T>,
    pub policy_iteration: SolveReport<T>,
}

/// Largest per-state total-variation distance `½ Σ_a |p - q|`.
pub fn max_total_variation<T: Scalar>(p: &Policy<T>, q: &Policy<T>) -> T {
    p.rows().zip(q.rows()).fold(T::zero(), |m, (a, b)| {
        let l1 = a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + (x - y).abs());
        m.max(l1 / T::lit(2.0))
    })
}

fn check_threshold<T: Scalar>(threshold: T) -> Result<()> {
    if threshold >= T::zero() && threshold.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("threshold must be nonnegative, got {threshold}")))
    }
}

/// Solves with soft value iteration and soft policy iteration from their
/// default starting points and compares the results.
pub fn run_equivalence<T: Scalar>(
    mdp: &TabularMdp<T>,
    reg: &Regularizer<T>,
    config: &SolveConfig<T>,
    threshold: T,
) -> Result<EquivalenceRun<T>> {
    if matches!(reg, Regularizer::None) {
        return Err(Error::RegularizerRequired);
    }
    check_threshold(threshold)?;
    let vi = soft_value_iteration(mdp, reg, config, None)?;
    let spi = soft_policy_iteration(mdp, reg, config, None)?;
    Ok(EquivalenceRun { report: compare(&vi, &spi, threshold), value_iteration: vi, policy_iteration: spi })
}

/// Gap report between a value-iteration and a policy-iteration result.
pub fn compare<T: Scalar>(vi: &SolveReport<T>, spi: &SolveReport<T>, threshold: T) -> EquivalenceReport<T> {
    let q_gap = vi.fixed_point_q.sup_distance(&spi.fixed_point_q);
    let v_gap = vi.fixed_point_v.sup_distance(&spi.fixed_point_v);
    let policy_gap = max_total_variation(&vi.policy, &spi.policy);
    let spi_value_excess = spi
        .fixed_point_v
        .as_slice()
        .iter()
        .zip(vi.fixed_point_v.as_slice())
        .fold(T::neg_infinity(), |m, (&a, &b)| m.max(a - b));
    let verdict = if !(vi.converged && spi.converged) {
        Verdict::NotConverged { value_iteration: !vi.converged, policy_iteration: !spi.converged }
    } else if q_gap <= threshold && policy_gap <= threshold {
        Verdict::Pass
    } else {
        Verdict::GapExceeded
    };
    EquivalenceReport {
        q_gap,
        v_gap,
        policy_gap,
        spi_value_excess,
        spi_min_q_increment: spi.min_q_increment.unwrap_or(T::infinity()),
        vi_iterations: vi.iterations,
        spi_iterations: spi.iterations,
        vi_residual: vi.final_residual,
        spi_residual: spi.final_residual,
        threshold,
        verdict,
    }
}

pub fn check_equivalence<T: Scalar>(
    mdp: &TabularMdp<T>,
    reg: &Regularizer<T>,
    config: &SolveConfig<T>,
    threshold: T,
) -> Result<EquivalenceReport<T>> {
    run_equivalence(mdp, reg, config, threshold).map(|run| run.report)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationStats {
    pub min: usize,
    pub max: usize,
    pub mean: f64,
}

impl IterationStats {
    fn from_counts(counts: impl Iterator<Item = usize>) -> Option<Self> {
        let counts: Vec<usize> = counts.collect();
        let (&min, &max) = (counts.iter().min()?, counts.iter().max()?);
        let mean = counts.iter().sum::<usize>() as f64 / counts.len() as f64;
        Some(IterationStats { min, max, mean })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSummary<T> {
    pub instances: usize,
    pub passed: usize,
    pub gap_exceeded: usize,
    pub not_converged: usize,
    pub errors: usize,
    pub max_q_gap: T,
    pub max_v_gap: T,
    pub max_policy_gap: T,
    pub vi_iterations: Option<IterationStats>,
    pub spi_iterations: Option<IterationStats>,
}

impl<T> SweepSummary<T> {
    pub fn all_passed(&self) -> bool {
        self.passed == self.instances
    }
}

#[derive(Debug, Clone)]
pub struct Sweep<T> {
    /// One entry per input instance, in input order.
    pub reports: Vec<Result<EquivalenceReport<T>>>,
    pub summary: SweepSummary<T>,
}

/// [`check_equivalence`] over every instance. Instances run in parallel on
/// the current rayon pool; reports keep input order and an error in one
/// instance does not affect the others.
pub fn sweep<T: Scalar>(
    instances: &[(TabularMdp<T>, Regularizer<T>)],
    config: &SolveConfig<T>,
    threshold: T,
) -> Result<Sweep<T>> {
    if instances.is_empty() {
        return Err(Error::InvalidParameter("sweep needs at least one instance".into()));
    }
    check_threshold(threshold)?;
    config.validate()?;
    let reports: Vec<_> =
        instances.par_iter().map(|(mdp, reg)| check_equivalence(mdp, reg, config, threshold)).collect();
    let summary = summarize(&reports);
    Ok(Sweep { reports, summary })
}

pub fn summarize<T: Scalar>(reports: &[Result<EquivalenceReport<T>>]) -> SweepSummary<T> {
    let ok = || reports.iter().filter_map(|r| r.as_ref().ok());
    let max_of = |f: fn(&EquivalenceReport<T>) -> T| ok().map(f).fold(T::zero(), T::max);
    SweepSummary {
        instances: reports.len(),
        passed: ok().filter(|r| r.verdict.is_pass()).count(),
        gap_exceeded: ok().filter(|r| r.verdict == Verdict::GapExceeded).count(),
        not_converged: ok().filter(|r| matches!(r.verdict, Verdict::NotConverged { .. })).count(),
        errors: reports.iter().filter(|r| r.is_err()).count(),
        max_q_gap: max_of(|r| r.q_gap),
        max_v_gap: max_of(|r| r.v_gap),
        max_policy_gap: max_of(|r| r.policy_gap),
        vi_iterations: IterationStats::from_counts(ok().map(|r| r.vi_iterations)),
        spi_iterations: IterationStats::from_counts(ok().map(|r| r.spi_iterations)),
    }
}
