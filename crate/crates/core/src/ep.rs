//! Expectation-propagation messages for the max factor.
//!
//! Messages are Gaussians in natural parameters, so products and quotients
//! are additions and subtractions. Zero precision is the uninformative message.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::pair_max::{MaxPrior, MomentPair};
use crate::scalar::Gaussian1;
use crate::set_max::{set_inverse_moments, set_max_moments, ChainOrder, MvPrior};

/// Gaussian in natural parameters `(1/σ², μ/σ²)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NaturalGaussian {
    pub precision: f64,
    pub precision_mean: f64,
}

impl NaturalGaussian {
    pub const UNINFORMATIVE: NaturalGaussian = NaturalGaussian {
        precision: 0.0,
        precision_mean: 0.0,
    };

    pub fn from_moments(m: &MomentPair) -> Self {
        let precision = 1.0 / m.variance();
        NaturalGaussian {
            precision,
            precision_mean: precision * m.mean(),
        }
    }

    pub fn is_uninformative(&self) -> bool {
        self.precision == 0.0
    }

    /// `None` for the uninformative message.
    pub fn to_gaussian(&self) -> Option<Gaussian1> {
        if self.precision > 0.0 {
            Gaussian1::new(self.precision_mean / self.precision, 1.0 / self.precision).ok()
        } else {
            None
        }
    }

    pub fn product(&self, other: &Self) -> Self {
        NaturalGaussian {
            precision: self.precision + other.precision,
            precision_mean: self.precision_mean + other.precision_mean,
        }
    }

    /// Quotient `self / other`. A negative or non-finite precision is replaced
    /// by the uninformative message and flagged.
    pub fn divide(&self, other: &Self) -> (Self, bool) {
        let precision = self.precision - other.precision;
        let precision_mean = self.precision_mean - other.precision_mean;
        if precision < 0.0 || !precision.is_finite() || !precision_mean.is_finite() {
            (Self::UNINFORMATIVE, true)
        } else if precision == 0.0 {
            (Self::UNINFORMATIVE, false)
        } else {
            (
                NaturalGaussian {
                    precision,
                    precision_mean,
                },
                false,
            )
        }
    }

    /// `damping · self + (1 - damping) · old`.
    pub fn damped(&self, old: &Self, damping: f64) -> Self {
        NaturalGaussian {
            precision: damping * self.precision + (1.0 - damping) * old.precision,
            precision_mean: damping * self.precision_mean + (1.0 - damping) * old.precision_mean,
        }
    }
}

impl From<Gaussian1> for NaturalGaussian {
    fn from(g: Gaussian1) -> Self {
        let precision = g.precision();
        NaturalGaussian {
            precision,
            precision_mean: precision * g.mean(),
        }
    }
}

impl From<MaxPrior> for NaturalGaussian {
    fn from(p: MaxPrior) -> Self {
        match p {
            MaxPrior::Gaussian(g) => g.into(),
            MaxPrior::Uninformative => Self::UNINFORMATIVE,
        }
    }
}

/// Message that turns `cavity_factor` into `marginal`; the flag marks a
/// message clamped to uninformative.
pub fn divide(marginal: &Gaussian1, cavity_factor: &NaturalGaussian) -> (NaturalGaussian, bool) {
    NaturalGaussian::from(*marginal).divide(cavity_factor)
}

/// Messages sent by one max factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxFactorState {
    /// Messages from the factor to `x₁ … x_N`.
    pub inputs: Vec<NaturalGaussian>,
    /// Message from the factor to `m`.
    pub output: NaturalGaussian,
    /// Weight of the newly computed message, in `(0, 1]`.
    pub damping: f64,
    pub order: ChainOrder,
    /// Messages that came out improper in the last update and were left unchanged.
    pub degenerate_messages: usize,
}

impl MaxFactorState {
    pub fn new(n: usize, damping: f64) -> Result<Self> {
        if !(damping > 0.0 && damping <= 1.0) {
            return Err(invalid("damping", format!("must lie in (0, 1], got {damping}")));
        }
        Ok(MaxFactorState {
            inputs: vec![NaturalGaussian::UNINFORMATIVE; n],
            output: NaturalGaussian::UNINFORMATIVE,
            damping,
            order: ChainOrder::NaturalIndex,
            degenerate_messages: 0,
        })
    }
}

/// One update of the max factor.
///
/// `cavities` and `mcavity` are the beliefs over `x` and `m` from everything
/// except this factor; for an isolated factor these are the priors.
pub fn max_factor_update(
    state: &MaxFactorState,
    cavities: &MvPrior,
    mcavity: &MaxPrior,
) -> Result<MaxFactorState> {
    let n = cavities.dim();
    if state.inputs.len() != n {
        return Err(crate::error::Error::Dimension(format!(
            "state has {} messages but the prior has {n} variables",
            state.inputs.len()
        )));
    }
    let marginals = set_inverse_moments(cavities, mcavity, state.order)?.marginals;
    let (mmax, _) = set_max_moments(cavities, mcavity, state.order)?;
    let mut next = state.clone();
    next.degenerate_messages = 0;
    for i in 0..n {
        let (msg, bad) =
            NaturalGaussian::from_moments(&marginals[i]).divide(&cavities.marginal(i).into());
        if bad {
            next.degenerate_messages += 1;
        } else {
            next.inputs[i] = msg.damped(&state.inputs[i], state.damping);
        }
    }
    let (msg, bad) = NaturalGaussian::from_moments(&mmax).divide(&(*mcavity).into());
    if bad {
        next.degenerate_messages += 1;
    } else {
        next.output = msg.damped(&state.output, state.damping);
    }
    Ok(next)
}

/// Largest absolute change in any natural parameter between two states.
pub fn max_message_change(a: &MaxFactorState, b: &MaxFactorState) -> f64 {
    a.inputs
        .iter()
        .zip(&b.inputs)
        .chain(std::iter::once((&a.output, &b.output)))
        .map(|(x, y)| {
            (x.precision - y.precision)
                .abs()
                .max((x.precision_mean - y.precision_mean).abs())
        })
        .fold(0.0, f64::max)
}

/// Runs `sweeps` updates and returns the final state with the per-sweep message change.
pub fn iterate(
    state: &MaxFactorState,
    cavities: &MvPrior,
    mcavity: &MaxPrior,
    sweeps: usize,
) -> Result<(MaxFactorState, Vec<f64>)> {
    let mut cur = state.clone();
    let mut changes = Vec::with_capacity(sweeps);
    for _ in 0..sweeps {
        let next = max_factor_update(&cur, cavities, mcavity)?;
        changes.push(max_message_change(&cur, &next));
        cur = next;
    }
    Ok((cur, changes))
}

/// Marginals `cavity × message` for every `x_i`.
pub fn marginals(state: &MaxFactorState, cavities: &MvPrior) -> Vec<MomentPair> {
    (0..cavities.dim())
        .map(|i| {
            let nat = NaturalGaussian::from(cavities.marginal(i)).product(&state.inputs[i]);
            nat.to_gaussian()
                .expect("cavity precision is positive and messages are non-negative")
                .into()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn g(m: f64, v: f64) -> Gaussian1 {
        Gaussian1::new(m, v).unwrap()
    }

    #[test]
    fn division_examples() {
        let (msg, bad) = divide(&g(1.0, 0.5), &g(1.0, 1.0).into());
        assert!(!bad);
        assert_eq!(msg.precision, 1.0);
        assert_eq!(msg.to_gaussian().unwrap(), g(1.0, 1.0));

        let (msg, bad) = divide(&g(0.3, 2.0), &g(0.3, 2.0).into());
        assert!(!bad && msg.is_uninformative());

        let (msg, bad) = divide(&g(0.0, 1.0), &g(0.0, 0.5).into());
        assert!(bad && msg.is_uninformative());
    }

    #[test]
    fn round_trip() {
        let x = g(-2.5, 0.3);
        assert_eq!(NaturalGaussian::from(x).to_gaussian().unwrap(), x);
        assert!(NaturalGaussian::UNINFORMATIVE.to_gaussian().is_none());
    }

    #[test]
    fn damping_must_be_in_range() {
        assert!(MaxFactorState::new(2, 0.0).is_err());
        assert!(MaxFactorState::new(2, 1.5).is_err());
        assert!(MaxFactorState::new(2, 1.0).is_ok());
    }

    #[test]
    fn uninformative_max_sends_nothing() {
        let p = MvPrior::equicorrelated(vec![0.0, 1.0, 0.5], &[1.0, 2.0, 0.5], 0.3).unwrap();
        let s = MaxFactorState::new(3, 1.0).unwrap();
        let next = max_factor_update(&s, &p, &MaxPrior::Uninformative).unwrap();
        assert!(next.inputs.iter().all(|m| m.is_uninformative()));
        assert_eq!(next.degenerate_messages, 0);
        let q = marginals(&next, &p);
        for i in 0..3 {
            assert_eq!(q[i], MomentPair::from(p.marginal(i)));
        }
    }

    #[test]
    fn single_factor_fixed_point_in_one_pass() {
        let p = MvPrior::equicorrelated(vec![0.4, -0.2], &[1.0, 1.5], -0.3).unwrap();
        let mp = MaxPrior::gaussian(0.8, 0.6).unwrap();
        let s = MaxFactorState::new(2, 1.0).unwrap();
        let (_, changes) = iterate(&s, &p, &mp, 2).unwrap();
        assert!(changes[0] > 0.0);
        assert!(changes[1] < 1e-9);
    }

    #[test]
    fn message_times_cavity_is_marginal() {
        let p = MvPrior::equicorrelated(vec![0.0, 0.5, 1.0, 1.5], &[1.0, 0.8, 1.2, 0.9], 0.2).unwrap();
        let mp = MaxPrior::gaussian(1.0, 0.5).unwrap();
        let s = max_factor_update(&MaxFactorState::new(4, 1.0).unwrap(), &p, &mp).unwrap();
        let want = set_inverse_moments(&p, &mp, ChainOrder::NaturalIndex).unwrap().marginals;
        let got = marginals(&s, &p);
        for i in 0..4 {
            assert!((got[i].mean() - want[i].mean()).abs() < 1e-12 * want[i].std_dev().max(want[i].mean().abs()));
            assert!((got[i].variance() - want[i].variance()).abs() < 1e-12 * want[i].variance());
        }
    }

    #[test]
    fn damping_blends_messages() {
        let p = MvPrior::diagonal(vec![0.0, 0.0], &[1.0, 1.0]).unwrap();
        let mp = MaxPrior::gaussian(1.0, 0.5).unwrap();
        let full = max_factor_update(&MaxFactorState::new(2, 1.0).unwrap(), &p, &mp).unwrap();
        let half = max_factor_update(&MaxFactorState::new(2, 0.5).unwrap(), &p, &mp).unwrap();
        assert_eq!(half.output.precision, 0.5 * full.output.precision);
    }

    #[test]
    fn dominant_variable_moves_towards_belief() {
        let p = MvPrior::diagonal(vec![0.0, 1.0, 2.0, 3.0, 6.0], &[1.0; 5]).unwrap();
        let mp = MaxPrior::gaussian(8.0, 1.0).unwrap();
        let s = max_factor_update(&MaxFactorState::new(5, 1.0).unwrap(), &p, &mp).unwrap();
        let q = marginals(&s, &p);
        assert!(q[4].mean() > 6.0 && q[4].mean() < 8.0);
    }

    #[test]
    fn inconsistent_low_belief_stays_finite() {
        let p = MvPrior::equicorrelated(vec![0.0, 1.0, 2.0, 3.0, 4.0], &[1.0; 5], 0.2).unwrap();
        let mp = MaxPrior::gaussian(-4.0, 0.25).unwrap();
        let s = max_factor_update(&MaxFactorState::new(5, 1.0).unwrap(), &p, &mp).unwrap();
        for m in marginals(&s, &p) {
            assert!(m.mean().is_finite() && m.variance().is_finite() && m.variance() > 0.0);
        }
        assert!(s.output.precision.is_finite() && s.output.precision_mean.is_finite());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]

        #[test]
        fn messages_stay_finite(
            n in 2usize..6,
            means in proptest::collection::vec(-5.0f64..5.0, 6),
            vars in proptest::collection::vec(0.05f64..5.0, 6),
            rho in -0.2f64..0.95,
            mm in -8.0f64..8.0,
            vm in 0.01f64..10.0,
        ) {
            let p = MvPrior::equicorrelated(means[..n].to_vec(), &vars[..n], rho).unwrap();
            let mp = MaxPrior::gaussian(mm, vm).unwrap();
            let s = max_factor_update(&MaxFactorState::new(n, 1.0).unwrap(), &p, &mp).unwrap();
            for m in s.inputs.iter().chain(std::iter::once(&s.output)) {
                prop_assert!(m.precision.is_finite() && m.precision_mean.is_finite());
                prop_assert!(m.precision >= 0.0);
            }
        }
    }
}
