//! Seeded families of random instances for equivalence sweeps.

use rand::Rng;

use crate::error::{Error, Result};
use crate::mdp::{random_mdp_with, random_positive_policy, seeded_rng, uniform_policy, Regularizer, TabularMdp};
use crate::scalar::Scalar;

/// Which regularizer a suite entry uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RegKind {
    Entropy,
    /// KL to a random strictly positive prior drawn per MDP.
    KlRandomPrior,
    /// KL to the uniform prior.
    KlUniform,
}

impl RegKind {
    pub fn label(self) -> &'static str {
        match self {
            RegKind::Entropy => "entropy",
            RegKind::KlRandomPrior => "kl",
            RegKind::KlUniform => "kl_uniform",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteSpec<T> {
    pub count: usize,
    pub seed: u64,
    /// Inclusive ranges.
    pub states: (usize, usize),
    pub actions: (usize, usize),
    pub gamma: (T, T),
    pub reward_range: (T, T),
    pub etas: Vec<T>,
    pub kinds: Vec<RegKind>,
}

impl<T: Scalar> SuiteSpec<T> {
    /// 100 MDPs, `S ∈ [2,20]`, `A ∈ [2,8]`, `γ ∈ [0.5,0.95]`, rewards in
    /// `[-1,1]`, `η ∈ {0.01, 0.1, 1, 10}`, entropy and random-prior KL.
    pub fn standard(seed: u64) -> Self {
        SuiteSpec {
            count: 100,
            seed,
            states: (2, 20),
            actions: (2, 8),
            gamma: (T::lit(0.5), T::lit(0.95)),
            reward_range: (T::lit(-1.0), T::lit(1.0)),
            etas: [0.01, 0.1, 1.0, 10.0].into_iter().map(T::lit).collect(),
            kinds: vec![RegKind::Entropy, RegKind::KlRandomPrior],
        }
    }
}

/// One (MDP, regularizer) pair of a suite.
#[derive(Debug, Clone)]
pub struct SuiteInstance<T> {
    /// Index of the MDP within the suite; shared across its η and
    /// regularizer variants.
    pub instance_id: usize,
    pub kind: RegKind,
    pub eta: T,
    pub mdp: TabularMdp<T>,
    pub reg: Regularizer<T>,
}

/// Generates the suite. MDP `i` is drawn from ChaCha8 stream `i` of
/// `seed`: state count, action count, γ, then the MDP tables in
/// [`random_mdp_with`] order, then the random prior. Entries are ordered by
/// MDP, then η, then regularizer kind.
pub fn generate_suite<T: Scalar>(spec: &SuiteSpec<T>) -> Result<Vec<SuiteInstance<T>>> {
    let (s_lo, s_hi) = spec.states;
    let (a_lo, a_hi) = spec.actions;
    let (g_lo, g_hi) = spec.gamma;
    if s_lo == 0 || s_lo > s_hi || a_lo == 0 || a_lo > a_hi {
        return Err(Error::InvalidParameter("empty state or action range".into()));
    }
    if !(g_lo >= T::zero() && g_lo <= g_hi && g_hi < T::one()) {
        return Err(Error::InvalidParameter("gamma range must lie in [0,1)".into()));
    }
    if spec.etas.is_empty() || spec.kinds.is_empty() {
        return Err(Error::InvalidParameter("suite needs at least one eta and one regularizer".into()));
    }
    let mut out = Vec::with_capacity(spec.count * spec.etas.len() * spec.kinds.len());
    for i in 0..spec.count {
        let mut rng = seeded_rng(spec.seed);
        rng.set_stream(i as u64);
        let ns = rng.random_range(s_lo..=s_hi);
        let na = rng.random_range(a_lo..=a_hi);
        let gamma = g_lo + (g_hi - g_lo) * T::lit(rng.random::<f64>());
        let mdp = random_mdp_with(&mut rng, ns, na, gamma, spec.reward_range)?;
        let prior = random_positive_policy(&mut rng, ns, na);
        for &eta in &spec.etas {
            for &kind in &spec.kinds {
                let reg = match kind {
                    RegKind::Entropy => Regularizer::entropy(eta)?,
                    RegKind::KlRandomPrior => Regularizer::kl_to_prior(eta, prior.clone())?,
                    RegKind::KlUniform => Regularizer::kl_to_prior(eta, uniform_policy(&mdp))?,
                };
                out.push(SuiteInstance { instance_id: i, kind, eta, mdp: mdp.clone(), reg });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::validate_mdp;

    #[test]
    fn standard_suite_shape() {
        let suite = generate_suite(&SuiteSpec::<f64>::standard(1)).unwrap();
        assert_eq!(suite.len(), 800);
        for inst in &suite {
            assert!((2..=20).contains(&inst.mdp.num_states));
            assert!((2..=8).contains(&inst.mdp.num_actions));
            assert!(inst.mdp.gamma >= 0.5 && inst.mdp.gamma <= 0.95);
            assert!(validate_mdp(&inst.mdp).is_empty());
        }
        assert_eq!(suite[0].instance_id, 0);
        assert_eq!(suite[7].instance_id, 0);
        assert_eq!(suite[8].instance_id, 1);
    }

    #[test]
    fn suite_is_deterministic() {
        let spec = SuiteSpec::<f64> { count: 5, ..SuiteSpec::standard(9) };
        let a = generate_suite(&spec).unwrap();
        let b = generate_suite(&spec).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.mdp, y.mdp);
            assert_eq!(x.reg, y.reg);
        }
    }

    #[test]
    fn rejects_bad_ranges() {
        let mut spec = SuiteSpec::<f64>::standard(1);
        spec.states = (3, 2);
        assert!(generate_suite(&spec).is_err());
        let mut spec = SuiteSpec::<f64>::standard(1);
        spec.gamma = (0.5, 1.0);
        assert!(generate_suite(&spec).is_err());
    }
}
