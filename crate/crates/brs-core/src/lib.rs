//! Core library for outer approximations of confidence-quantified backwards
//! reachable sets of polynomial systems with uncertain parameters.
//!
//! Pipeline: a polynomial ODE with a distribution over its parameters is
//! relaxed into a block SDP whose solution yields a polynomial w(x,θ); the
//! parameter marginal F(x) = ∫ w dμ_θ gives a confidence field whose
//! α-superlevel sets contain the set of states from which the target is
//! reached with probability at least α. A Monte Carlo integrator validates
//! the containment empirically.

pub mod confidence;
pub mod config;
pub mod distribution;
pub mod oracle;
pub mod pipeline;
pub mod poly;
pub mod relax;
pub mod sdp;
pub mod sets;
