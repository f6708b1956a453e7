//! Independent verifiers for solver outputs.
//!
//! None of these reuse the solver loops: KKT residuals come from the
//! Lagrangian stationarity condition, dominance checks from brute force.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mdp::{Policy, QFn, Regularizer, TabularMdp, ValueFn};
use crate::operators::{lse, q_from_v_unchecked};
use crate::scalar::Scalar;
use crate::solvers::{policy_state_values, soft_value_iteration, SolveConfig, DEFAULT_MAX_ITERATIONS};

/// Slack allowed in the Q ≤ Q̃⋆ dominance test.
pub const DOMINANCE_SLACK: f64 = 1e-12;
/// Slack allowed when grid policies are compared against `Q⋆`.
pub const EXHAUSTIVE_SLACK: f64 = 1e-8;
/// Largest state and action count accepted by [`exhaustive_policy_check`].
pub const EXHAUSTIVE_LIMIT: usize = 3;

/// Stationarity residuals of the per-state Lagrangian
/// `Σ_a π(a|s) x(s,a) + η Δ(s) - λ(s)(Σ_a π(a|s) - 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KktResidual<T> {
    /// `x(s,a) - η log π(a|s) - η - λ(s)`; `log(π/π̄)` for KL.
    pub residuals: QFn<T>,
    /// Normalizing multiplier `λ(s) = η log Σ_a [π̄] exp(x(s,a)/η) - η`.
    pub multipliers: ValueFn<T>,
}

impl<T: Scalar> KktResidual<T> {
    pub fn max_abs_residual(&self) -> T {
        self.residuals.as_slice().iter().fold(T::zero(), |m, r| m.max(r.abs()))
    }

    /// `max_s |λ(s) - (v(s) - η)|`. Zero at the optimum, since the
    /// multiplier equals the log-sum-exp value minus `η`.
    pub fn multiplier_identity_gap(&self, v: &ValueFn<T>, eta: T) -> T {
        self.multipliers.as_slice().iter().zip(v.as_slice()).fold(T::zero(), |m, (&l, &v)| m.max((l - (v - eta)).abs()))
    }
}

/// Evaluates the first-order optimality conditions for `policy` against the
/// one-step lookahead `x(s,a) = r(s,a) + γ E[v(s')]`.
pub fn kkt_residual<T: Scalar>(
    mdp: &TabularMdp<T>,
    reg: &Regularizer<T>,
    v: &ValueFn<T>,
    policy: &Policy<T>,
) -> Result<KktResidual<T>> {
    let (ns, na) = (mdp.num_states, mdp.num_actions);
    v.check_shape(ns)?;
    policy.check_shape(ns, na)?;
    reg.check(ns, na)?;
    let (eta, prior) = match reg {
        Regularizer::None => return Err(Error::RegularizerRequired),
        Regularizer::Entropy { eta } => (*eta, None),
        Regularizer::KlToPrior { eta, prior } => (*eta, Some(prior)),
    };
    if let Some((state, action)) = policy.first_zero() {
        return Err(Error::ZeroPolicyEntry { state, action });
    }
    let x = q_from_v_unchecked(mdp, v);
    let mut residuals = Vec::with_capacity(ns * na);
    let mut multipliers = Vec::with_capacity(ns);
    for s in 0..ns {
        let lambda = lse(x.row(s), eta, prior.map(|p| p.row(s))) - eta;
        for a in 0..na {
            let log_ratio = match prior {
                None => policy.prob(s, a).ln(),
                Some(p) => (policy.prob(s, a) / p.prob(s, a)).ln(),
            };
            residuals.push(x[(s, a)] - eta * log_ratio - eta - lambda);
        }
        multipliers.push(lambda);
    }
    Ok(KktResidual { residuals: QFn::new(ns, na, residuals)?, multipliers: ValueFn::new(multipliers) })
}

/// A dominated value function whose backup exceeded `Q̃⋆`.
#[derive(Debug, Clone, PartialEq)]
pub struct DominanceViolation<T> {
    pub trial: usize,
    pub state: usize,
    pub action: usize,
    pub q: T,
    pub q_star: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DominanceReport<T> {
    pub trials: usize,
    /// Largest `Q(s,a) - Q̃⋆(s,a)` seen; nonpositive when the property holds.
    pub max_excess: T,
    pub violations: Vec<DominanceViolation<T>>,
}

impl<T: Scalar> DominanceReport<T> {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Monotonicity of the one-step lookahead: draws `trials` value functions
/// `V ≤ v_star` and checks `r + γ P V ≤ r + γ P v_star` elementwise.
///
/// Trial 0 uses `V = v_star` exactly. Each trial draws from its own ChaCha8
/// stream `(seed, trial)`, so results do not depend on evaluation order.
pub fn proposition1_check<T: Scalar>(
    mdp: &TabularMdp<T>,
    v_star: &ValueFn<T>,
    trials: usize,
    seed: u64,
) -> Result<DominanceReport<T>> {
    v_star.check_shape(mdp.num_states)?;
    let q_star = q_from_v_unchecked(mdp, v_star);
    let slack = T::lit(DOMINANCE_SLACK);
    let mut max_excess = T::neg_infinity();
    let mut violations = Vec::new();
    for trial in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(trial as u64);
        let v = dominated_draw(&mut rng, v_star, trial == 0);
        let q = q_from_v_unchecked(mdp, &v);
        for s in 0..mdp.num_states {
            for a in 0..mdp.num_actions {
                let excess = q[(s, a)] - q_star[(s, a)];
                max_excess = max_excess.max(excess);
                if excess > slack {
                    violations.push(DominanceViolation {
                        trial,
                        state: s,
                        action: a,
                        q: q[(s, a)],
                        q_star: q_star[(s, a)],
                    });
                }
            }
        }
    }
    Ok(DominanceReport { trials, max_excess, violations })
}

/// `v_star - noise` with nonnegative noise: a log-uniform scale in
/// `[1e-6, 10]` times exponential draws, with about a third of the states
/// left untouched.
fn dominated_draw<T: Scalar>(rng: &mut ChaCha8Rng, v_star: &ValueFn<T>, exact: bool) -> ValueFn<T> {
    if exact {
        return v_star.clone();
    }
    let scale = 10f64.powf(rng.random_range(-6.0..1.0));
    let v = v_star
        .as_slice()
        .iter()
        .map(|&x| {
            if rng.random::<f64>() < 1.0 / 3.0 {
                x
            } else {
                let noise = -(1.0 - rng.random::<f64>()).ln() * scale;
                x - T::lit(noise)
            }
        })
        .collect();
    ValueFn::new(v)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExhaustiveReport<T> {
    pub policies_checked: usize,
    /// Largest `Q^π(s,a) - q_star(s,a)` over every swept policy.
    pub max_excess: T,
    /// Smallest `‖Q^π - q_star‖_∞` over the sweep.
    pub closest_gap: T,
    /// Policies exceeding `q_star` by more than the slack.
    pub violations: usize,
}

impl<T: Scalar> ExhaustiveReport<T> {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Interior simplex grid: every composition of `resolution + 1` into
/// `num_actions` positive parts, scaled to probabilities. Each coordinate is
/// at least `1/(resolution + 1)`.
pub fn simplex_grid<T: Scalar>(num_actions: usize, resolution: usize) -> Vec<Vec<T>> {
    fn rec(remaining: usize, slots: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if slots == 1 {
            prefix.push(remaining);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for k in 1..=remaining - (slots - 1) {
            prefix.push(k);
            rec(remaining - k, slots - 1, prefix, out);
            prefix.pop();
        }
    }
    let total = resolution + 1;
    if num_actions == 0 || total < num_actions {
        return Vec::new();
    }
    let mut parts = Vec::new();
    rec(total, num_actions, &mut Vec::new(), &mut parts);
    let denom = T::count(total);
    parts.into_iter().map(|c| c.into_iter().map(|k| T::count(k) / denom).collect()).collect()
}

/// Brute-force optimality check on tiny instances: evaluates every policy in
/// the product of per-state interior simplex grids and checks
/// `Q^π ≤ q_star + 1e-8`. Unregularized instances additionally sweep all
/// deterministic policies, which contain an optimum.
pub fn exhaustive_policy_check<T: Scalar>(
    mdp: &TabularMdp<T>,
    reg: &Regularizer<T>,
    q_star: &QFn<T>,
    grid_resolution: usize,
) -> Result<ExhaustiveReport<T>> {
    let (ns, na) = (mdp.num_states, mdp.num_actions);
    if ns > EXHAUSTIVE_LIMIT || na > EXHAUSTIVE_LIMIT {
        return Err(Error::InstanceTooLarge { states: ns, actions: na, limit: EXHAUSTIVE_LIMIT });
    }
    if grid_resolution < 5 {
        return Err(Error::InvalidParameter(format!("grid_resolution must be at least 5, got {grid_resolution}")));
    }
    q_star.check_shape(ns, na)?;
    reg.check(ns, na)?;

    let mut rows = simplex_grid::<T>(na, grid_resolution);
    if matches!(reg, Regularizer::None) {
        for a in 0..na {
            let mut vertex = vec![T::zero(); na];
            vertex[a] = T::one();
            rows.push(vertex);
        }
    }

    let slack = T::lit(EXHAUSTIVE_SLACK);
    let mut report = ExhaustiveReport {
        policies_checked: 0,
        max_excess: T::neg_infinity(),
        closest_gap: T::infinity(),
        violations: 0,
    };
    let mut index = vec![0usize; ns];
    let mut probs = vec![T::zero(); ns * na];
    loop {
        for (s, &i) in index.iter().enumerate() {
            probs[s * na..(s + 1) * na].copy_from_slice(&rows[i]);
        }
        let policy = Policy::from_normalized(ns, na, probs.clone());
        let v = policy_state_values(mdp, reg, &policy)?;
        let q = q_from_v_unchecked(mdp, &v);
        let excess = q.as_slice().iter().zip(q_star.as_slice()).fold(T::neg_infinity(), |m, (&x, &y)| m.max(x - y));
        report.max_excess = report.max_excess.max(excess);
        report.closest_gap = report.closest_gap.min(q.sup_distance(q_star));
        if excess > slack {
            report.violations += 1;
        }
        report.policies_checked += 1;

        // Mixed-radix increment over states.
        let mut s = 0;
        while s < ns {
            index[s] += 1;
            if index[s] < rows.len() {
                break;
            }
            index[s] = 0;
            s += 1;
        }
        if s == ns {
            break;
        }
    }
    Ok(report)
}

/// Tight reference solution: value iteration at tolerance `1e-13` (raised
/// to a few ulps of the value scale when that is coarser) and ten times the
/// default iteration cap.
pub fn long_run_reference<T: Scalar>(mdp: &TabularMdp<T>, reg: &Regularizer<T>) -> Result<ValueFn<T>> {
    let tolerance = reference_tolerance(mdp, reg);
    let config = SolveConfig::default().with_tolerance(tolerance).with_max_iterations(10 * DEFAULT_MAX_ITERATIONS);
    let report = soft_value_iteration(mdp, reg, &config, None)?;
    if !report.converged {
        return Err(Error::NotConverged { iterations: report.iterations, residual: report.final_residual.as_f64() });
    }
    Ok(report.fixed_point_v)
}

/// `max(1e-13, 32 ε B)` where `B` bounds `|V⋆|`: the largest per-step
/// reward plus regularization magnitude over `1 - γ`.
pub fn reference_tolerance<T: Scalar>(mdp: &TabularMdp<T>, reg: &Regularizer<T>) -> T {
    let r_max = mdp.rewards.iter().fold(T::zero(), |m, r| m.max(r.abs()));
    let reg_max = match reg {
        Regularizer::None => T::zero(),
        Regularizer::Entropy { eta } => *eta * T::count(mdp.num_actions).ln(),
        Regularizer::KlToPrior { eta, prior } => {
            let min_prior = prior.as_slice().iter().fold(T::one(), |m, &p| m.min(p));
            -*eta * min_prior.ln()
        }
    };
    let bound = (r_max + reg_max) / (T::one() - mdp.gamma);
    T::lit(1e-13).max(T::lit(32.0) * T::epsilon() * bound.max(T::one()))
}
