//! Operator bundles `(A1, A2, B)` over a discrete evolution triple, with
//! declared structural constants.
//!
//! Three concrete families ship: a finite-dimensional SDE with monotone
//! drift, a 1-d reaction–diffusion equation with p-Laplacian flux, and a
//! 1-d porous-medium equation on the discrete `W^{-1,2}` pivot space. The
//! [`MonotoneModel`] trait is the pluggable surface for user-defined models;
//! [`CustomModel`] wraps closures for quick experiments and checker
//! counterexamples.

mod custom;
mod porous_medium;
mod reaction_diffusion;
mod sde;

pub use custom::CustomModel;
pub use porous_medium::{CylCoeff, CylMode, PorousMedium};
pub use reaction_diffusion::{FluxKind, RdMode, RdModeKind, ReactionDiffusion, ReactionKind};
pub use sde::{DriftKind, MonotoneSde, SigmaKind};

use crate::error::CoreError;
use crate::linalg::DMat;
use crate::triple::{DualVec, SpaceSpec, StateVec};

/// Structural constants a model declares for the coercivity, monotonicity,
/// boundedness and noise-growth hypotheses. The checks module verifies them
/// empirically; nothing here is trusted blindly.
#[derive(Clone, Copy, Debug)]
pub struct ModelConstants {
    pub q1: f64,
    pub q2: f64,
    /// Coercivity: `[x, A(x)] <= -l1 ||x||_X1^q1 - l2 ||x||_X2^q2 + l3 (||x||_H^2 + 1)`.
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    /// Monotonicity: `[x-y, A(x)-A(y)] <= -l1' ||..||_X1^q1 - l2' ||..||_X2^q2 + l0 ||..||_H^2`.
    pub lambda0: f64,
    pub lambda1_mono: f64,
    pub lambda2_mono: f64,
    /// Boundedness: `||A_i(x)||_{X_i*} <= c_ai (||x||_{X_i}^{q_i - 1} + 1)`.
    pub c_a1: f64,
    pub c_a2: f64,
    /// Noise: Lipschitz and linear-growth constant of `B` in Hilbert-Schmidt norm.
    pub beta1: f64,
}

/// A time-dependent monotone operator bundle on a fixed discrete triple.
///
/// `apply_a1`/`apply_a2` return the `H`-representer of the functionals, so
/// the drift enters the evolution equation as a plain coefficient vector.
/// `apply_b` must be linear in the noise coordinates `u`.
///
/// All methods are pure; a single model value may be shared freely across
/// concurrent simulation replicas.
pub trait MonotoneModel: Send + Sync {
    fn space(&self) -> &SpaceSpec;

    /// Number of retained noise modes `m`.
    fn noise_dim(&self) -> usize;

    fn initial_state(&self) -> &StateVec;

    fn constants(&self) -> &ModelConstants;

    fn apply_a1(&self, t: f64, x: &StateVec) -> DualVec;

    fn apply_a2(&self, t: f64, x: &StateVec) -> DualVec;

    /// Image of the noise-coordinate vector `u` under the linear map `B(t,x)`.
    fn apply_b(&self, t: f64, x: &StateVec, u: &[f64]) -> StateVec;

    /// Squared Hilbert-Schmidt norm of `B(t,x)`.
    fn b_hs_norm_sq(&self, t: f64, x: &StateVec) -> f64;

    /// Jacobian of the total drift representer `x ↦ A1 + A2`; `None` lets
    /// solvers fall back to finite differences.
    fn drift_jacobian(&self, _t: f64, _x: &StateVec) -> Option<DMat> {
        None
    }

    /// Jacobian of `x ↦ B(t,x) u` for fixed `u`; `None` falls back to
    /// finite differences.
    fn control_jacobian(&self, _t: f64, _x: &StateVec, _u: &[f64]) -> Option<DMat> {
        None
    }
}

/// Total drift `A = A1 + A2` with range validation: non-finite output maps
/// to a numeric-range error carrying the offending state's norm.
pub fn apply_a(model: &dyn MonotoneModel, t: f64, x: &StateVec) -> Result<DualVec, CoreError> {
    let space = model.space();
    if x.dim() != space.dim() {
        return Err(CoreError::DimensionMismatch { expected: space.dim(), got: x.dim() });
    }
    let mut a = model.apply_a1(t, x);
    a.add_scaled(1.0, &model.apply_a2(t, x));
    if !a.all_finite() {
        let norm = space.h_norm(x).unwrap_or(f64::NAN);
        return Err(CoreError::NumericRange { context: "apply_a".into(), norm });
    }
    Ok(a)
}

/// `B(t,x) u` with argument validation.
pub fn apply_b_vec(
    model: &dyn MonotoneModel,
    t: f64,
    x: &StateVec,
    u: &[f64],
) -> Result<StateVec, CoreError> {
    if u.len() != model.noise_dim() {
        return Err(CoreError::DimensionMismatch { expected: model.noise_dim(), got: u.len() });
    }
    if x.dim() != model.space().dim() {
        return Err(CoreError::DimensionMismatch { expected: model.space().dim(), got: x.dim() });
    }
    let out = model.apply_b(t, x, u);
    if !out.all_finite() {
        let norm = model.space().h_norm(x).unwrap_or(f64::NAN);
        return Err(CoreError::NumericRange { context: "apply_b".into(), norm });
    }
    Ok(out)
}

/// Central finite-difference Jacobian of the total drift representer.
pub fn fd_drift_jacobian(
    model: &dyn MonotoneModel,
    t: f64,
    x: &StateVec,
) -> Result<DMat, CoreError> {
    let d = x.dim();
    let mut jac = DMat::zeros(d, d);
    let mut xp = x.clone();
    for j in 0..d {
        let step = 1e-6 * (1.0 + x.coeffs()[j].abs());
        xp.coeffs_mut()[j] = x.coeffs()[j] + step;
        let fp = apply_a(model, t, &xp)?;
        xp.coeffs_mut()[j] = x.coeffs()[j] - step;
        let fm = apply_a(model, t, &xp)?;
        xp.coeffs_mut()[j] = x.coeffs()[j];
        for i in 0..d {
            jac[(i, j)] = (fp.coeffs()[i] - fm.coeffs()[i]) / (2.0 * step);
        }
    }
    Ok(jac)
}

/// Drift Jacobian from the model if provided, else finite differences.
pub fn drift_jacobian_or_fd(
    model: &dyn MonotoneModel,
    t: f64,
    x: &StateVec,
) -> Result<DMat, CoreError> {
    match model.drift_jacobian(t, x) {
        Some(j) => {
            if !j.is_finite() {
                return Err(CoreError::Jacobian("drift jacobian not finite".into()));
            }
            Ok(j)
        }
        None => fd_drift_jacobian(model, t, x),
    }
}

/// Jacobian of `x ↦ B(t,x) u` from the model if provided, else central
/// finite differences.
pub fn control_jacobian_or_fd(
    model: &dyn MonotoneModel,
    t: f64,
    x: &StateVec,
    u: &[f64],
) -> Result<DMat, CoreError> {
    if let Some(j) = model.control_jacobian(t, x, u) {
        if !j.is_finite() {
            return Err(CoreError::Jacobian("control jacobian not finite".into()));
        }
        return Ok(j);
    }
    let d = x.dim();
    let mut jac = DMat::zeros(d, d);
    let mut xp = x.clone();
    for j in 0..d {
        let step = 1e-6 * (1.0 + x.coeffs()[j].abs());
        xp.coeffs_mut()[j] = x.coeffs()[j] + step;
        let fp = apply_b_vec(model, t, &xp, u)?;
        xp.coeffs_mut()[j] = x.coeffs()[j] - step;
        let fm = apply_b_vec(model, t, &xp, u)?;
        xp.coeffs_mut()[j] = x.coeffs()[j];
        for i in 0..d {
            jac[(i, j)] = (fp.coeffs()[i] - fm.coeffs()[i]) / (2.0 * step);
        }
    }
    Ok(jac)
}
