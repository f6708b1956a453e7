//! Regularized Bellman operators.
//!
//! Every exponential-family computation subtracts the row maximum before
//! exponentiating. Sums over actions and next states run in ascending index
//! order so results are bitwise reproducible.

use crate::error::{Error, Result};
use crate::mdp::{Policy, QFn, Regularizer, TabularMdp, ValueFn};
use crate::scalar::{sup_distance, Scalar};

/// One application of a value operator.
#[derive(Debug, Clone, PartialEq)]
pub struct BackupResult<T> {
    pub value: ValueFn<T>,
    /// `max_s |value(s) - input(s)|`.
    pub residual: T,
}

/// `η log Σ_a w_a exp(x_a / η)`, with `w_a = 1` when `weights` is `None`.
///
/// Weights must be a strictly positive probability vector of the same
/// length as `values`.
pub fn log_sum_exp<T: Scalar>(values: &[T], eta: T, weights: Option<&[T]>) -> Result<T> {
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    if let Some(i) = values.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFiniteInput(i));
    }
    if !(eta > T::zero() && eta.is_finite()) {
        return Err(Error::NonPositiveEta(eta.as_f64()));
    }
    if let Some(w) = weights {
        if w.len() != values.len() {
            return Err(Error::InvalidWeights(format!("{} weights for {} values", w.len(), values.len())));
        }
        if let Some(i) = w.iter().position(|&x| !(x > T::zero() && x <= T::one())) {
            return Err(Error::InvalidWeights(format!("weight {} at index {i} not in (0,1]", w[i])));
        }
        let sum: T = w.iter().copied().sum();
        if !((sum - T::one()).abs() <= T::row_sum_tolerance(w.len())) {
            return Err(Error::InvalidWeights(format!("weights sum to {sum}")));
        }
    }
    Ok(lse(values, eta, weights))
}

/// Unchecked log-sum-exp; inputs are assumed valid.
#[inline]
pub(crate) fn lse<T: Scalar>(values: &[T], eta: T, weights: Option<&[T]>) -> T {
    let max = values.iter().copied().fold(T::neg_infinity(), T::max);
    let acc = match weights {
        None => values.iter().fold(T::zero(), |acc, &x| acc + ((x - max) / eta).exp()),
        Some(w) => values.iter().zip(w).fold(T::zero(), |acc, (&x, &w)| acc + w * ((x - max) / eta).exp()),
    };
    max + eta * acc.ln()
}

/// `π log π` with the `0 log 0 = 0` convention.
#[inline]
fn plogp<T: Scalar>(p: T) -> T {
    if p > T::zero() {
        p * p.ln()
    } else {
        T::zero()
    }
}

/// Entropy `-Σ_a π(a|s) log π(a|s)` of one policy row.
pub fn policy_entropy<T: Scalar>(policy: &Policy<T>, state: usize) -> T {
    row_entropy(policy.row(state))
}

#[inline]
pub(crate) fn row_entropy<T: Scalar>(row: &[T]) -> T {
    -row.iter().fold(T::zero(), |acc, &p| acc + plogp(p))
}

/// `KL(π(·|s) ‖ π̄(·|s))`. The prior row must be strictly positive.
pub fn policy_kl<T: Scalar>(policy: &Policy<T>, prior: &Policy<T>, state: usize) -> Result<T> {
    prior.check_shape(policy.num_states(), policy.num_actions())?;
    let prior_row = prior.row(state);
    if let Some(action) = prior_row.iter().position(|&p| !(p > T::zero())) {
        return Err(Error::ZeroPriorEntry { state, action });
    }
    Ok(row_kl(policy.row(state), prior_row))
}

#[inline]
pub(crate) fn row_kl<T: Scalar>(row: &[T], prior_row: &[T]) -> T {
    row.iter().zip(prior_row).fold(T::zero(), |acc, (&p, &q)| if p > T::zero() { acc + p * (p / q).ln() } else { acc })
}

/// Per-state regularization reward `η Δ(s)`: `η H` for entropy, `-η KL`
/// for the prior-anchored case, zero otherwise.
pub(crate) fn regularization_bonus<T: Scalar>(reg: &Regularizer<T>, policy: &Policy<T>, state: usize) -> T {
    match reg {
        Regularizer::None => T::zero(),
        Regularizer::Entropy { eta } => *eta * row_entropy(policy.row(state)),
        Regularizer::KlToPrior { eta, prior } => -*eta * row_kl(policy.row(state), prior.row(state)),
    }
}

/// Soft state value of `q` under `policy`:
/// `V(s) = Σ_a π(a|s) (Q(s,a) - η log π(a|s))`, with `log(π/π̄)` for KL.
pub fn policy_value<T: Scalar>(reg: &Regularizer<T>, policy: &Policy<T>, q: &QFn<T>) -> Result<ValueFn<T>> {
    let (ns, na) = (q.num_states(), q.num_actions());
    policy.check_shape(ns, na)?;
    reg.check(ns, na)?;
    Ok(policy_value_unchecked(reg, policy, q))
}

pub(crate) fn policy_value_unchecked<T: Scalar>(reg: &Regularizer<T>, policy: &Policy<T>, q: &QFn<T>) -> ValueFn<T> {
    let v = (0..q.num_states())
        .map(|s| {
            let expected_q =
                policy
                    .row(s)
                    .iter()
                    .zip(q.row(s))
                    .fold(T::zero(), |acc, (&p, &qv)| if p > T::zero() { acc + p * qv } else { acc });
            expected_q + regularization_bonus(reg, policy, s)
        })
        .collect();
    ValueFn::new(v)
}

/// `T^π Q (s,a) = r(s,a) + γ Σ_{s'} p(s'|s,a) V(s')` with `V` from
/// [`policy_value`].
pub fn soft_bellman_backup<T: Scalar>(
    mdp: &TabularMdp<T>,
    reg: &Regularizer<T>,
    policy: &Policy<T>,
    q: &QFn<T>,
) -> Result<QFn<T>> {
    let (ns, na) = (mdp.num_states, mdp.num_actions);
    q.check_shape(ns, na)?;
    policy.check_shape(ns, na)?;
    reg.check(ns, na)?;
    let v = policy_value_unchecked(reg, policy, q);
    Ok(q_from_v_unchecked(mdp, &v))
}

/// `Q(s,a) = r(s,a) + γ Σ_{s'} p(s'|s,a) v(s')`.
pub fn q_from_v<T: Scalar>(mdp: &TabularMdp<T>, v: &ValueFn<T>) -> Result<QFn<T>> {
    v.check_shape(mdp.num_states)?;
    Ok(q_from_v_unchecked(mdp, v))
}

pub(crate) fn q_from_v_unchecked<T: Scalar>(mdp: &TabularMdp<T>, v: &ValueFn<T>) -> QFn<T> {
    let (ns, na) = (mdp.num_states, mdp.num_actions);
    let mut values = Vec::with_capacity(ns * na);
    for s in 0..ns {
        for a in 0..na {
            values.push(mdp.backed_up(s, a, v.as_slice()));
        }
    }
    QFn::new(ns, na, values).expect("shape fixed by the MDP")
}

/// Optimal regularized backup: log-sum-exp over actions for entropy,
/// prior-weighted log-sum-exp for KL, `max` when unregularized.
pub fn optimal_backup<T: Scalar>(mdp: &TabularMdp<T>, reg: &Regularizer<T>, v: &ValueFn<T>) -> Result<BackupResult<T>> {
    v.check_shape(mdp.num_states)?;
    reg.check(mdp.num_states, mdp.num_actions)?;
    let mut out = vec![T::zero(); mdp.num_states];
    let mut scratch = vec![T::zero(); mdp.num_actions];
    let residual = optimal_backup_into(mdp, reg, v.as_slice(), &mut out, &mut scratch);
    Ok(BackupResult { value: ValueFn::new(out), residual })
}

/// Writes the optimal backup of `v` into `out` and returns the sup-norm
/// change. `scratch` must hold `num_actions` entries.
pub(crate) fn optimal_backup_into<T: Scalar>(
    mdp: &TabularMdp<T>,
    reg: &Regularizer<T>,
    v: &[T],
    out: &mut [T],
    scratch: &mut [T],
) -> T {
    for (s, slot) in out.iter_mut().enumerate() {
        for (a, x) in scratch.iter_mut().enumerate() {
            *x = mdp.backed_up(s, a, v);
        }
        *slot = match reg {
            Regularizer::None => scratch.iter().copied().fold(T::neg_infinity(), T::max),
            Regularizer::Entropy { eta } => lse(scratch, *eta, None),
            Regularizer::KlToPrior { eta, prior } => lse(scratch, *eta, Some(prior.row(s))),
        };
    }
    sup_distance(out, v)
}

/// Softmax (Boltzmann) policy of `q` at temperature `η`, weighted by the
/// prior for KL. Rows are renormalized by their computed sum.
pub fn softmax_policy<T: Scalar>(q: &QFn<T>, reg: &Regularizer<T>) -> Result<Policy<T>> {
    let (ns, na) = (q.num_states(), q.num_actions());
    reg.check(ns, na)?;
    let (eta, prior) = match reg {
        Regularizer::None => return Err(Error::UnregularizedSoftmax),
        Regularizer::Entropy { eta } => (*eta, None),
        Regularizer::KlToPrior { eta, prior } => (*eta, Some(prior)),
    };
    let mut probs = Vec::with_capacity(ns * na);
    for s in 0..ns {
        let row = q.row(s);
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let start = probs.len();
        let mut total = T::zero();
        for (a, &x) in row.iter().enumerate() {
            let mut p = ((x - max) / eta).exp();
            if let Some(prior) = prior {
                p = p * prior.prob(s, a);
            }
            total = total + p;
            probs.push(p);
        }
        for p in &mut probs[start..] {
            *p = *p / total;
        }
    }
    Ok(Policy::from_normalized(ns, na, probs))
}

/// Deterministic greedy policy; ties go to the lowest action index.
pub fn greedy_policy<T: Scalar>(q: &QFn<T>) -> Policy<T> {
    let (ns, na) = (q.num_states(), q.num_actions());
    let mut probs = vec![T::zero(); ns * na];
    for s in 0..ns {
        let row = q.row(s);
        let mut best = 0;
        for a in 1..na {
            if row[a] > row[best] {
                best = a;
            }
        }
        probs[s * na + best] = T::one();
    }
    Policy::from_normalized(ns, na, probs)
}
