//! Moments, densities and EP messages for the maximum (and minimum) of
//! correlated Gaussian variables.
//!
//! * [`pair_max`]: belief over `m = max(x₁, x₂)` given Gaussian beliefs on
//!   `x` and on `m`.
//! * [`pair_inverse`]: beliefs over `x₁, x₂` given a belief on their max.
//! * [`set_max`]: the same for `N` variables via a chain of pairwise steps.
//! * [`ep`]: natural-parameter messages for embedding the max factor in a
//!   factor graph.
//! * [`oracle`]: quadrature and sampling references used for validation.
// `!(x > 0.0)` deliberately routes NaN into the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::excessive_precision, clippy::needless_range_loop)]

pub mod ep;
pub mod error;
pub mod oracle;
pub mod pair_inverse;
pub mod pair_max;
pub mod scalar;
pub mod set_max;

pub use error::{Error, Result};
pub use pair_inverse::{inverse_density, inverse_moments, InverseAux, InverseMarginals};
pub use pair_max::{
    clark_limit_moments, forward_aux, forward_density, forward_moments, forward_moments_rho0,
    min_moments, BivariatePrior, ForwardAux, MaxPrior, MomentPair,
};
pub use scalar::{Gaussian1, WeightedGaussian1};
pub use set_max::{
    chain_correlation, set_inverse_moments, set_max_moments, set_min_moments, ChainOrder, MaxChain,
    MvPrior,
};
