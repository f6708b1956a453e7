//! Tabular MDP, policy and value-table types, validation, and seeded
//! instance generation.

use std::fmt;
use std::ops::Index;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::{dot, Scalar};

/// A finite discounted MDP with dense reward and transition tables.
///
/// `rewards` is stored row-major as `[state][action]` and `transitions` as
/// `[state][action][next_state]`. The fields are public so that arbitrary
/// (possibly malformed) data can be handed to [`validate_mdp`]; solvers
/// assume a value that passed validation.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp<T> {
    pub num_states: usize,
    pub num_actions: usize,
    pub gamma: T,
    pub rewards: Vec<T>,
    pub transitions: Vec<T>,
    /// Initial-state distribution. Carried for completeness of the file
    /// format; no solver reads it.
    pub initial_distribution: Option<Vec<T>>,
}

/// One failed [`TabularMdp`] invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    EmptyStateSpace,
    EmptyActionSpace,
    GammaOutOfRange { gamma: f64 },
    Shape { table: &'static str, path: Vec<usize>, expected: usize, found: usize },
    NonFiniteReward { state: usize, action: usize },
    ProbabilityOutOfRange { state: usize, action: usize, next_state: usize, value: f64 },
    RowSum { state: usize, action: usize, sum: f64, deviation: f64 },
    InitialDistributionEntry { state: usize, value: f64 },
    InitialDistributionSum { sum: f64, deviation: f64 },
}

fn fmt_path(path: &[usize]) -> String {
    path.iter().map(|i| format!("[{i}]")).collect()
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyStateSpace => write!(f, "state space is empty"),
            Violation::EmptyActionSpace => write!(f, "action space is empty"),
            Violation::GammaOutOfRange { gamma } => write!(f, "gamma not in [0,1): {gamma}"),
            Violation::Shape { table, path, expected, found } => write!(
                f,
                "{table} has length {found}, expected {expected} at {}",
                if path.is_empty() { "[]".to_string() } else { fmt_path(path) }
            ),
            Violation::NonFiniteReward { state, action } => {
                write!(f, "reward not finite at [{state}][{action}]")
            }
            Violation::ProbabilityOutOfRange { state, action, next_state, value } => {
                write!(f, "transition probability {value} not in [0,1] at [{state}][{action}][{next_state}]")
            }
            Violation::RowSum { state, action, sum, deviation } => {
                write!(f, "row sum {sum} ≠ 1 at [{state}][{action}] (deviation {deviation:e})")
            }
            Violation::InitialDistributionEntry { state, value } => {
                write!(f, "initial distribution entry {value} not in [0,1] at [{state}]")
            }
            Violation::InitialDistributionSum { sum, deviation } => {
                write!(f, "initial distribution sums to {sum} ≠ 1 (deviation {deviation:e})")
            }
        }
    }
}

/// Returns every violated invariant of `mdp`; an empty list means valid.
///
/// Rows are checked against the 1e-9 row-sum tolerance and are never
/// renormalized.
pub fn validate_mdp<T: Scalar>(mdp: &TabularMdp<T>) -> Vec<Violation> {
    let mut out = Vec::new();
    let (ns, na) = (mdp.num_states, mdp.num_actions);
    if ns == 0 {
        out.push(Violation::EmptyStateSpace);
    }
    if na == 0 {
        out.push(Violation::EmptyActionSpace);
    }
    let gamma = mdp.gamma;
    if !(gamma >= T::zero() && gamma < T::one()) {
        out.push(Violation::GammaOutOfRange { gamma: gamma.as_f64() });
    }

    if mdp.rewards.len() != ns * na {
        out.push(Violation::Shape { table: "rewards", path: vec![], expected: ns * na, found: mdp.rewards.len() });
    } else {
        for (i, r) in mdp.rewards.iter().enumerate() {
            if !r.is_finite() {
                out.push(Violation::NonFiniteReward { state: i / na, action: i % na });
            }
        }
    }

    if mdp.transitions.len() != ns * na * ns {
        out.push(Violation::Shape {
            table: "transitions",
            path: vec![],
            expected: ns * na * ns,
            found: mdp.transitions.len(),
        });
    } else if ns > 0 {
        let tol = T::row_sum_tolerance(ns);
        for (row_idx, row) in mdp.transitions.chunks(ns).enumerate() {
            let (state, action) = (row_idx / na, row_idx % na);
            let mut sum = T::zero();
            for (next_state, &p) in row.iter().enumerate() {
                if !(p >= T::zero() && p <= T::one()) {
                    out.push(Violation::ProbabilityOutOfRange { state, action, next_state, value: p.as_f64() });
                }
                sum = sum + p;
            }
            let deviation = (sum - T::one()).abs();
            if !(deviation <= tol) {
                out.push(Violation::RowSum { state, action, sum: sum.as_f64(), deviation: deviation.as_f64() });
            }
        }
    }

    if let Some(init) = &mdp.initial_distribution {
        if init.len() != ns {
            out.push(Violation::Shape { table: "initial_distribution", path: vec![], expected: ns, found: init.len() });
        } else {
            let mut sum = T::zero();
            for (state, &p) in init.iter().enumerate() {
                if !(p >= T::zero() && p <= T::one()) {
                    out.push(Violation::InitialDistributionEntry { state, value: p.as_f64() });
                }
                sum = sum + p;
            }
            let deviation = (sum - T::one()).abs();
            if !(deviation <= T::row_sum_tolerance(ns)) {
                out.push(Violation::InitialDistributionSum { sum: sum.as_f64(), deviation: deviation.as_f64() });
            }
        }
    }
    out
}

impl<T: Scalar> TabularMdp<T> {
    /// Builds and validates an MDP from flat row-major tables.
    pub fn new(num_states: usize, num_actions: usize, gamma: T, rewards: Vec<T>, transitions: Vec<T>) -> Result<Self> {
        let mdp = TabularMdp { num_states, num_actions, gamma, rewards, transitions, initial_distribution: None };
        mdp.validated()
    }

    /// Builds and validates an MDP from nested `[s][a]` and `[s][a][s']`
    /// tables. Ragged input is reported as shape violations.
    pub fn from_nested(gamma: T, rewards: Vec<Vec<T>>, transitions: Vec<Vec<Vec<T>>>) -> Result<Self> {
        let mdp = Self::from_nested_unchecked(gamma, rewards, transitions)?;
        mdp.validated()
    }

    /// Flattens nested tables without checking probability invariants.
    /// Only ragged shapes are rejected, since they cannot be flattened.
    pub fn from_nested_unchecked(gamma: T, rewards: Vec<Vec<T>>, transitions: Vec<Vec<Vec<T>>>) -> Result<Self> {
        let num_states = rewards.len();
        let num_actions = rewards.first().map_or(0, Vec::len);
        let mut shape = Vec::new();
        for (s, row) in rewards.iter().enumerate() {
            if row.len() != num_actions {
                shape.push(Violation::Shape {
                    table: "rewards",
                    path: vec![s],
                    expected: num_actions,
                    found: row.len(),
                });
            }
        }
        if transitions.len() != num_states {
            shape.push(Violation::Shape {
                table: "transitions",
                path: vec![],
                expected: num_states,
                found: transitions.len(),
            });
        }
        for (s, per_action) in transitions.iter().enumerate() {
            if per_action.len() != num_actions {
                shape.push(Violation::Shape {
                    table: "transitions",
                    path: vec![s],
                    expected: num_actions,
                    found: per_action.len(),
                });
            }
            for (a, row) in per_action.iter().enumerate() {
                if row.len() != num_states {
                    shape.push(Violation::Shape {
                        table: "transitions",
                        path: vec![s, a],
                        expected: num_states,
                        found: row.len(),
                    });
                }
            }
        }
        if !shape.is_empty() {
            return Err(Error::InvalidMdp(shape));
        }
        Ok(TabularMdp {
            num_states,
            num_actions,
            gamma,
            rewards: rewards.into_iter().flatten().collect(),
            transitions: transitions.into_iter().flatten().flatten().collect(),
            initial_distribution: None,
        })
    }

    pub fn with_initial_distribution(mut self, init: Vec<T>) -> Result<Self> {
        self.initial_distribution = Some(init);
        self.validated()
    }

    fn validated(self) -> Result<Self> {
        let violations = validate_mdp(&self);
        if violations.is_empty() {
            Ok(self)
        } else {
            Err(Error::InvalidMdp(violations))
        }
    }

    #[inline]
    pub fn reward(&self, state: usize, action: usize) -> T {
        self.rewards[state * self.num_actions + action]
    }

    /// `p(· | state, action)`.
    #[inline]
    pub fn transition_row(&self, state: usize, action: usize) -> &[T] {
        let start = (state * self.num_actions + action) * self.num_states;
        &self.transitions[start..start + self.num_states]
    }

    /// `r(s, a) + γ Σ_{s'} p(s'|s,a) v(s')`, summed in ascending `s'`.
    #[inline]
    pub fn backed_up(&self, state: usize, action: usize, v: &[T]) -> T {
        self.reward(state, action) + self.gamma * dot(self.transition_row(state, action), v)
    }

    pub fn rewards_nested(&self) -> Vec<Vec<T>> {
        self.rewards.chunks(self.num_actions.max(1)).map(<[T]>::to_vec).collect()
    }

    pub fn transitions_nested(&self) -> Vec<Vec<Vec<T>>> {
        (0..self.num_states)
            .map(|s| (0..self.num_actions).map(|a| self.transition_row(s, a).to_vec()).collect())
            .collect()
    }
}

/// Row-stochastic table `π(a | s)` stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy<T> {
    num_states: usize,
    num_actions: usize,
    probs: Vec<T>,
}

impl<T: Scalar> Policy<T> {
    /// Validates shape, nonnegativity and the row-sum tolerance.
    pub fn new(num_states: usize, num_actions: usize, probs: Vec<T>) -> Result<Self> {
        if num_states == 0 || num_actions == 0 {
            return Err(Error::InvalidPolicy("empty state or action space".into()));
        }
        if probs.len() != num_states * num_actions {
            return Err(Error::ShapeMismatch {
                what: "policy",
                expected: format!("{} entries", num_states * num_actions),
                found: format!("{} entries", probs.len()),
            });
        }
        let tol = T::row_sum_tolerance(num_actions);
        for (s, row) in probs.chunks(num_actions).enumerate() {
            if let Some(a) = row.iter().position(|&p| !(p >= T::zero() && p <= T::one())) {
                return Err(Error::InvalidPolicy(format!("entry {} not in [0,1] at [{s}][{a}]", row[a])));
            }
            let sum: T = row.iter().copied().sum();
            if !((sum - T::one()).abs() <= tol) {
                return Err(Error::InvalidPolicy(format!("row sum {sum} ≠ 1 at [{s}]")));
            }
        }
        Ok(Policy { num_states, num_actions, probs })
    }

    pub fn from_rows(rows: Vec<Vec<T>>) -> Result<Self> {
        let num_states = rows.len();
        let num_actions = rows.first().map_or(0, Vec::len);
        if let Some(s) = rows.iter().position(|r| r.len() != num_actions) {
            return Err(Error::ShapeMismatch {
                what: "policy row",
                expected: format!("{num_actions} actions"),
                found: format!("{} actions at [{s}]", rows[s].len()),
            });
        }
        Self::new(num_states, num_actions, rows.into_iter().flatten().collect())
    }

    /// Rows already normalized by construction (softmax, argmax, uniform).
    pub(crate) fn from_normalized(num_states: usize, num_actions: usize, probs: Vec<T>) -> Self {
        debug_assert_eq!(probs.len(), num_states * num_actions);
        Policy { num_states, num_actions, probs }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    #[inline]
    pub fn row(&self, state: usize) -> &[T] {
        &self.probs[state * self.num_actions..(state + 1) * self.num_actions]
    }

    #[inline]
    pub fn prob(&self, state: usize, action: usize) -> T {
        self.probs[state * self.num_actions + action]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.probs
    }

    pub fn rows(&self) -> impl Iterator<Item = &[T]> {
        self.probs.chunks(self.num_actions)
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        self.rows().map(<[T]>::to_vec).collect()
    }

    /// First zero entry, if any.
    pub fn first_zero(&self) -> Option<(usize, usize)> {
        self.probs.iter().position(|&p| !(p > T::zero())).map(|i| (i / self.num_actions, i % self.num_actions))
    }

    pub fn is_strictly_positive(&self) -> bool {
        self.first_zero().is_none()
    }

    pub(crate) fn check_shape(&self, num_states: usize, num_actions: usize) -> Result<()> {
        if self.num_states != num_states || self.num_actions != num_actions {
            return Err(Error::ShapeMismatch {
                what: "policy",
                expected: format!("{num_states}x{num_actions}"),
                found: format!("{}x{}", self.num_states, self.num_actions),
            });
        }
        Ok(())
    }
}

/// State-value table `V(s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueFn<T>(Vec<T>);

impl<T: Scalar> ValueFn<T> {
    pub fn new(values: Vec<T>) -> Self {
        ValueFn(values)
    }

    pub fn zeros(num_states: usize) -> Self {
        ValueFn(vec![T::zero(); num_states])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<T> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// Sup-norm distance to `other`.
    pub fn sup_distance(&self, other: &Self) -> T {
        crate::scalar::sup_distance(&self.0, &other.0)
    }

    pub(crate) fn check_shape(&self, num_states: usize) -> Result<()> {
        if self.0.len() != num_states {
            return Err(Error::ShapeMismatch {
                what: "value function",
                expected: format!("{num_states} states"),
                found: format!("{} states", self.0.len()),
            });
        }
        Ok(())
    }
}

impl<T> Index<usize> for ValueFn<T> {
    type Output = T;
    fn index(&self, s: usize) -> &T {
        &self.0[s]
    }
}

/// Action-value table `Q(s, a)` stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct QFn<T> {
    num_states: usize,
    num_actions: usize,
    values: Vec<T>,
}

impl<T: Scalar> QFn<T> {
    pub fn new(num_states: usize, num_actions: usize, values: Vec<T>) -> Result<Self> {
        if values.len() != num_states * num_actions {
            return Err(Error::ShapeMismatch {
                what: "action-value table",
                expected: format!("{} entries", num_states * num_actions),
                found: format!("{} entries", values.len()),
            });
        }
        Ok(QFn { num_states, num_actions, values })
    }

    pub fn from_rows(rows: Vec<Vec<T>>) -> Result<Self> {
        let num_states = rows.len();
        let num_actions = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != num_actions) {
            return Err(Error::ShapeMismatch {
                what: "action-value table",
                expected: format!("rows of {num_actions}"),
                found: "ragged rows".into(),
            });
        }
        Self::new(num_states, num_actions, rows.into_iter().flatten().collect())
    }

    pub fn zeros(num_states: usize, num_actions: usize) -> Self {
        QFn { num_states, num_actions, values: vec![T::zero(); num_states * num_actions] }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    #[inline]
    pub fn row(&self, state: usize) -> &[T] {
        &self.values[state * self.num_actions..(state + 1) * self.num_actions]
    }

    #[inline]
    pub fn get(&self, state: usize, action: usize) -> T {
        self.values[state * self.num_actions + action]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.values
    }

    pub fn rows(&self) -> impl Iterator<Item = &[T]> {
        self.values.chunks(self.num_actions)
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        self.rows().map(<[T]>::to_vec).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn sup_distance(&self, other: &Self) -> T {
        crate::scalar::sup_distance(&self.values, &other.values)
    }

    /// Smallest entry of `self - other`.
    pub fn min_difference(&self, other: &Self) -> T {
        self.values.iter().zip(&other.values).fold(T::infinity(), |acc, (&x, &y)| acc.min(x - y))
    }

    pub(crate) fn check_shape(&self, num_states: usize, num_actions: usize) -> Result<()> {
        if self.num_states != num_states || self.num_actions != num_actions {
            return Err(Error::ShapeMismatch {
                what: "action-value table",
                expected: format!("{num_states}x{num_actions}"),
                found: format!("{}x{}", self.num_states, self.num_actions),
            });
        }
        Ok(())
    }
}

impl<T> Index<(usize, usize)> for QFn<T> {
    type Output = T;
    fn index(&self, (s, a): (usize, usize)) -> &T {
        &self.values[s * self.num_actions + a]
    }
}

/// The per-state regularizer `Δ` and its temperature `η`.
#[derive(Debug, Clone, PartialEq)]
pub enum Regularizer<T> {
    /// Plain expected discounted return.
    None,
    /// Entropy bonus `η H(π(·|s))`.
    Entropy { eta: T },
    /// KL penalty `-η KL(π(·|s) ‖ π̄(·|s))` toward a strictly positive prior.
    KlToPrior { eta: T, prior: Policy<T> },
}

impl<T: Scalar> Regularizer<T> {
    pub fn entropy(eta: T) -> Result<Self> {
        check_eta(eta)?;
        Ok(Regularizer::Entropy { eta })
    }

    pub fn kl_to_prior(eta: T, prior: Policy<T>) -> Result<Self> {
        check_eta(eta)?;
        if let Some((state, action)) = prior.first_zero() {
            return Err(Error::ZeroPriorEntry { state, action });
        }
        Ok(Regularizer::KlToPrior { eta, prior })
    }

    /// Temperature, or `None` for the unregularized objective.
    pub fn eta(&self) -> Option<T> {
        match self {
            Regularizer::None => None,
            Regularizer::Entropy { eta } | Regularizer::KlToPrior { eta, .. } => Some(*eta),
        }
    }

    pub fn prior(&self) -> Option<&Policy<T>> {
        match self {
            Regularizer::KlToPrior { prior, .. } => Some(prior),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Regularizer::None => "none",
            Regularizer::Entropy { .. } => "entropy",
            Regularizer::KlToPrior { .. } => "kl",
        }
    }

    /// Re-checks the invariants and the prior's shape against an MDP.
    pub(crate) fn check(&self, num_states: usize, num_actions: usize) -> Result<()> {
        match self {
            Regularizer::None => Ok(()),
            Regularizer::Entropy { eta } => check_eta(*eta),
            Regularizer::KlToPrior { eta, prior } => {
                check_eta(*eta)?;
                prior.check_shape(num_states, num_actions)?;
                match prior.first_zero() {
                    Some((state, action)) => Err(Error::ZeroPriorEntry { state, action }),
                    None => Ok(()),
                }
            }
        }
    }
}

fn check_eta<T: Scalar>(eta: T) -> Result<()> {
    if eta > T::zero() && eta.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositiveEta(eta.as_f64()))
    }
}

/// `π(a|s) = 1/|A|` everywhere.
pub fn uniform_policy<T: Scalar>(mdp: &TabularMdp<T>) -> Policy<T> {
    uniform_policy_of(mdp.num_states, mdp.num_actions)
}

pub(crate) fn uniform_policy_of<T: Scalar>(num_states: usize, num_actions: usize) -> Policy<T> {
    let p = T::one() / T::count(num_actions);
    Policy::from_normalized(num_states, num_actions, vec![p; num_states * num_actions])
}

/// The generator behind every seeded instance: ChaCha8 seeded from a `u64`.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Standard exponential draw `-ln(1 - u)` with `u` uniform on `[0, 1)`.
fn exponential<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    -(1.0 - rng.random::<f64>()).ln()
}

/// Fills `row` with a flat-Dirichlet sample by normalizing exponentials.
/// With `strictly_positive`, zero draws are redrawn.
fn dirichlet_row<T: Scalar, R: Rng + ?Sized>(rng: &mut R, row: &mut [T], strictly_positive: bool) {
    let mut total = T::zero();
    for x in row.iter_mut() {
        let mut e = exponential(rng);
        while strictly_positive && !(e > 0.0) {
            e = exponential(rng);
        }
        *x = T::lit(e);
        total = total + *x;
    }
    if total > T::zero() {
        for x in row.iter_mut() {
            *x = *x / total;
        }
    } else {
        // All draws were exactly zero; fall back to uniform.
        let p = T::one() / T::count(row.len());
        row.iter_mut().for_each(|x| *x = p);
    }
}

/// Seeded random MDP. See [`random_mdp_with`] for the draw order.
pub fn random_mdp<T: Scalar>(
    seed: u64,
    num_states: usize,
    num_actions: usize,
    gamma: T,
    reward_range: (T, T),
) -> Result<TabularMdp<T>> {
    random_mdp_with(&mut seeded_rng(seed), num_states, num_actions, gamma, reward_range)
}

/// Random MDP from a caller-supplied generator.
///
/// Draw order: all rewards row-major over `(s, a)`, each
/// `lo + (hi - lo) u`; then every transition row row-major over `(s, a)`,
/// each entry an exponential `-ln(1 - u)` normalized by the row total.
pub fn random_mdp_with<T: Scalar, R: Rng + ?Sized>(
    rng: &mut R,
    num_states: usize,
    num_actions: usize,
    gamma: T,
    reward_range: (T, T),
) -> Result<TabularMdp<T>> {
    if num_states == 0 || num_actions == 0 {
        return Err(Error::InvalidParameter("state and action spaces must be non-empty".into()));
    }
    if !(gamma >= T::zero() && gamma < T::one()) {
        return Err(Error::InvalidParameter(format!("gamma not in [0,1): {gamma}")));
    }
    let (lo, hi) = reward_range;
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(Error::InvalidParameter(format!("invalid reward range [{lo}, {hi}]")));
    }
    let rewards = (0..num_states * num_actions).map(|_| lo + (hi - lo) * T::lit(rng.random::<f64>())).collect();
    let mut transitions = vec![T::zero(); num_states * num_actions * num_states];
    for row in transitions.chunks_mut(num_states) {
        dirichlet_row(rng, row, false);
    }
    TabularMdp::new(num_states, num_actions, gamma, rewards, transitions)
}

/// Strictly positive random policy with flat-Dirichlet rows.
pub fn random_positive_policy<T: Scalar, R: Rng + ?Sized>(
    rng: &mut R,
    num_states: usize,
    num_actions: usize,
) -> Policy<T> {
    let mut probs = vec![T::zero(); num_states * num_actions];
    for row in probs.chunks_mut(num_actions) {
        dirichlet_row(rng, row, true);
    }
    Policy::from_normalized(num_states, num_actions, probs)
}
