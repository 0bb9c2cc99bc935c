//! Numerical toolkit for small-noise asymptotics of monotone stochastic
//! evolution equations on a discretized evolution triple `X1 ∩ X2 ⊂ H ⊂ X*`.
//!
//! The crate provides, in dependency order:
//!
//! - [`triple`]: the discrete evolution triple (Gram matrix for `H`, the two
//!   `X`-norms, dual pairing, and a dual-norm estimator);
//! - [`models`]: operator bundles `(A1, A2, B)` with declared structural
//!   constants — a monotone SDE, a reaction–diffusion equation with
//!   p-Laplacian flux, a porous-medium equation, and a pluggable trait for
//!   user-defined models;
//! - [`noise`]: truncated Q-Wiener increments, square-integrable controls,
//!   and the radius-N control ball;
//! - [`checks`]: randomized empirical verification of the structural
//!   hypotheses (hemicontinuity, coercivity, monotonicity, boundedness,
//!   noise Lipschitz bounds);
//! - [`solver`]: drift-implicit time stepping for the stochastic equation and
//!   the deterministic controlled skeleton equation, plus an energy-identity
//!   diagnostic;
//! - [`minaction`]: rate-function computation by penalized minimization of
//!   the control action subject to the skeleton dynamics, with an exact
//!   discrete adjoint gradient;
//! - [`ldp`]: Monte Carlo estimation of small-noise event probabilities and
//!   Laplace functionals, with Girsanov-shift importance sampling.

pub mod checks;
pub mod error;
pub mod ldp;
pub mod linalg;
pub mod minaction;
pub mod models;
pub mod noise;
pub mod solver;
pub mod triple;

pub use error::CoreError;
pub use models::MonotoneModel;
pub use triple::{DualVec, SpaceSpec, StateVec};
