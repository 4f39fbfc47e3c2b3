//! Independent reference computations: quadrature and Monte Carlo.

pub mod exact;
pub mod quadrature;
pub mod sampling;
