//! Finite-dimensional SDE with monotone drift.
//!
//! The triple is Euclidean, `H = R^d` with the identity Gram. For drifts
//! with a cubic power part the `X1` norm is the coordinate `l^4` norm so the
//! boundedness hypothesis holds globally (`|x^3|` grows like `||x||_{l^4}^3`);
//! the power part goes into `A1` and the linear part into `A2`.

use super::{ModelConstants, MonotoneModel};
use crate::error::CoreError;
use crate::linalg::DMat;
use crate::triple::{DualVec, NormRecipe, SpaceSpec, StateVec};

/// Drift families. The last two deliberately violate structural hypotheses
/// and exist so checker sensitivity is testable end to end.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DriftKind {
    /// `b(x) = -rate * x`
    Linear { rate: f64 },
    /// `b(x)_i = -x_i^3 - rate * x_i`
    Cubic { rate: f64 },
    /// `b(x)_i = +x_i^3`: anti-monotone and anti-coercive.
    AntiCubic,
    /// `b(x)_i = -sign(x_i)`: dissipative but discontinuous, fails
    /// hemicontinuity and nothing else.
    SignDrift,
}

/// Diffusion families (`m = d` diagonal maps).
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SigmaKind {
    /// `B(x) u = scale * u` (additive noise).
    Identity { scale: f64 },
    /// `(B(x) u)_i = scale * (1 + tanh(x_i)) * u_i`: Lipschitz multiplicative.
    TanhDiag { scale: f64 },
    /// `(B(x) u)_i = scale * x_i^2 * u_i`: violates the Lipschitz/growth bound.
    Quadratic { scale: f64 },
}

pub struct MonotoneSde {
    space: SpaceSpec,
    drift: DriftKind,
    sigma: SigmaKind,
    constants: ModelConstants,
    x0: StateVec,
    /// Declared one-sided drift constant (`<x-y, b(x)-b(y)> <= c_b |x-y|^2`).
    pub c_b: f64,
    /// Declared diffusion Lipschitz constant.
    pub c_sigma: f64,
}

fn has_cubic_part(drift: DriftKind) -> bool {
    matches!(drift, DriftKind::Cubic { .. } | DriftKind::AntiCubic)
}

impl MonotoneSde {
    pub fn new(
        dim: usize,
        drift: DriftKind,
        sigma: SigmaKind,
        x0: Vec<f64>,
    ) -> Result<Self, CoreError> {
        if x0.len() != dim {
            return Err(CoreError::DimensionMismatch { expected: dim, got: x0.len() });
        }
        let (q1, embed) = if has_cubic_part(drift) { (4.0, 1.0) } else { (2.0, 2.0) };
        let space = SpaceSpec::new(
            dim,
            DMat::identity(dim),
            NormRecipe::Lq { q: q1 },
            NormRecipe::Lq { q: 2.0 },
            vec![1.0; dim],
            embed,
        )?;
        let sd = dim as f64;
        let (beta1, c_sigma) = match sigma {
            SigmaKind::Identity { scale } => (scale.abs() * sd.sqrt(), 1e-6),
            SigmaKind::TanhDiag { scale } => (2.0 * scale.abs() * sd.sqrt(), scale.abs()),
            // Deliberately false claim; the noise checker must flag it.
            SigmaKind::Quadratic { scale } => (scale.abs().max(1.0), scale.abs()),
        };
        let constants = match drift {
            DriftKind::Linear { rate } => ModelConstants {
                q1,
                q2: 2.0,
                lambda1: 0.25,
                lambda2: 0.25,
                lambda3: 1.0,
                lambda0: 0.0,
                lambda1_mono: rate / 4.0,
                lambda2_mono: rate / 4.0,
                c_a1: rate.abs().max(1.0),
                c_a2: 1.0,
                beta1,
            },
            DriftKind::Cubic { rate } => ModelConstants {
                q1,
                q2: 2.0,
                lambda1: 0.5,
                lambda2: rate / 2.0,
                lambda3: 1.0,
                lambda0: 0.0,
                // (x^3 - y^3)(x - y) >= |x-y|^4 / 4 coordinatewise.
                lambda1_mono: 0.125,
                lambda2_mono: rate / 2.0,
                c_a1: 1.0,
                c_a2: rate.abs().max(1.0),
                beta1,
            },
            // Same-shaped claims as the cubic model; coercivity and
            // monotonicity checks must flag them.
            DriftKind::AntiCubic => ModelConstants {
                q1,
                q2: 2.0,
                lambda1: 0.5,
                lambda2: 0.25,
                lambda3: 1.0,
                lambda0: 0.0,
                lambda1_mono: 0.125,
                lambda2_mono: 0.0,
                c_a1: 1.0,
                c_a2: 1.0,
                beta1,
            },
            DriftKind::SignDrift => ModelConstants {
                q1,
                q2: 2.0,
                lambda1: 0.25,
                lambda2: 0.25,
                lambda3: 1.0,
                lambda0: 0.0,
                lambda1_mono: 0.0,
                lambda2_mono: 0.0,
                c_a1: sd.sqrt(),
                c_a2: 1.0,
                beta1,
            },
        };
        let c_b = match drift {
            DriftKind::Linear { .. } | DriftKind::Cubic { .. } => 1.0,
            DriftKind::AntiCubic | DriftKind::SignDrift => 1.0,
        };
        Ok(MonotoneSde {
            space,
            drift,
            sigma,
            constants,
            x0: StateVec::new(x0),
            c_b,
            c_sigma,
        })
    }

    /// Linear mean-reverting model with additive unit-coordinate noise.
    pub fn ornstein_uhlenbeck(dim: usize, rate: f64, x0: Vec<f64>) -> Result<Self, CoreError> {
        MonotoneSde::new(
            dim,
            DriftKind::Linear { rate },
            SigmaKind::Identity { scale: 1.0 },
            x0,
        )
    }

    /// Default shipped configuration: cubic drift with multiplicative
    /// Lipschitz noise.
    pub fn default_cubic(dim: usize) -> Self {
        MonotoneSde::new(
            dim,
            DriftKind::Cubic { rate: 1.0 },
            SigmaKind::TanhDiag { scale: 0.5 },
            vec![0.0; dim],
        )
        .expect("default cubic config is valid")
    }

    /// Replaces the initial state (dimension must match).
    pub fn with_initial_state(mut self, x0: StateVec) -> Result<Self, CoreError> {
        if x0.dim() != self.space.dim() {
            return Err(CoreError::DimensionMismatch { expected: self.space.dim(), got: x0.dim() });
        }
        self.x0 = x0;
        Ok(self)
    }

    pub fn drift_kind(&self) -> DriftKind {
        self.drift
    }

    pub fn sigma_kind(&self) -> SigmaKind {
        self.sigma
    }

    /// The power (possibly non-Lipschitz) drift component, routed to `A1`.
    fn a1_value(&self, xi: f64) -> f64 {
        match self.drift {
            DriftKind::Linear { rate } => -rate * xi,
            DriftKind::Cubic { .. } => -xi * xi * xi,
            DriftKind::AntiCubic => xi * xi * xi,
            DriftKind::SignDrift => {
                if xi > 0.0 {
                    -1.0
                } else if xi < 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// The linear remainder, routed to `A2`.
    fn a2_value(&self, xi: f64) -> f64 {
        match self.drift {
            DriftKind::Cubic { rate } => -rate * xi,
            _ => 0.0,
        }
    }

    fn drift_deriv(&self, xi: f64) -> f64 {
        match self.drift {
            DriftKind::Linear { rate } => -rate,
            DriftKind::Cubic { rate } => -3.0 * xi * xi - rate,
            DriftKind::AntiCubic => 3.0 * xi * xi,
            DriftKind::SignDrift => 0.0,
        }
    }

    pub(crate) fn sigma_value(&self, xi: f64) -> f64 {
        match self.sigma {
            SigmaKind::Identity { scale } => scale,
            SigmaKind::TanhDiag { scale } => scale * (1.0 + xi.tanh()),
            SigmaKind::Quadratic { scale } => scale * xi * xi,
        }
    }

    fn sigma_deriv(&self, xi: f64) -> f64 {
        match self.sigma {
            SigmaKind::Identity { .. } => 0.0,
            SigmaKind::TanhDiag { scale } => {
                let t = xi.tanh();
                scale * (1.0 - t * t)
            }
            SigmaKind::Quadratic { scale } => 2.0 * scale * xi,
        }
    }
}

impl MonotoneModel for MonotoneSde {
    fn space(&self) -> &SpaceSpec {
        &self.space
    }

    fn noise_dim(&self) -> usize {
        self.space.dim()
    }

    fn initial_state(&self) -> &StateVec {
        &self.x0
    }

    fn constants(&self) -> &ModelConstants {
        &self.constants
    }

    fn apply_a1(&self, _t: f64, x: &StateVec) -> DualVec {
        DualVec::new(x.coeffs().iter().map(|&v| self.a1_value(v)).collect())
    }

    fn apply_a2(&self, _t: f64, x: &StateVec) -> DualVec {
        DualVec::new(x.coeffs().iter().map(|&v| self.a2_value(v)).collect())
    }

    fn apply_b(&self, _t: f64, x: &StateVec, u: &[f64]) -> StateVec {
        StateVec::new(
            x.coeffs()
                .iter()
                .zip(u)
                .map(|(&xi, &ui)| self.sigma_value(xi) * ui)
                .collect(),
        )
    }

    fn b_hs_norm_sq(&self, _t: f64, x: &StateVec) -> f64 {
        x.coeffs()
            .iter()
            .map(|&xi| {
                let s = self.sigma_value(xi);
                s * s
            })
            .sum()
    }

    fn drift_jacobian(&self, _t: f64, x: &StateVec) -> Option<DMat> {
        let d = x.dim();
        let mut j = DMat::zeros(d, d);
        for i in 0..d {
            j[(i, i)] = self.drift_deriv(x.coeffs()[i]);
        }
        Some(j)
    }

    fn control_jacobian(&self, _t: f64, x: &StateVec, u: &[f64]) -> Option<DMat> {
        let d = x.dim();
        let mut j = DMat::zeros(d, d);
        for i in 0..d {
            j[(i, i)] = self.sigma_deriv(x.coeffs()[i]) * u[i];
        }
        Some(j)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{apply_a, apply_b_vec};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn linear_drift_values() {
        let m = MonotoneSde::new(
            2,
            DriftKind::Linear { rate: 1.0 },
            SigmaKind::Identity { scale: 1.0 },
            vec![0.0, 0.0],
        )
        .unwrap();
        let a = apply_a(&m, 0.0, &StateVec::new(vec![2.0, -1.0])).unwrap();
        assert_eq!(a.coeffs(), &[-2.0, 1.0]);
    }

    #[test]
    fn cubic_split_reassembles() {
        let m = MonotoneSde::default_cubic(2);
        let x = StateVec::new(vec![2.0, -0.5]);
        let a = apply_a(&m, 0.0, &x).unwrap();
        assert!((a.coeffs()[0] - (-8.0 - 2.0)).abs() < 1e-15);
        assert!((a.coeffs()[1] - (0.125 + 0.5)).abs() < 1e-15);
    }

    #[test]
    fn additive_b_is_identity() {
        let m = MonotoneSde::ornstein_uhlenbeck(2, 1.0, vec![0.0, 0.0]).unwrap();
        let out = apply_b_vec(&m, 0.0, &StateVec::new(vec![5.0, 6.0]), &[1.0, 2.0]).unwrap();
        assert_eq!(out.coeffs(), &[1.0, 2.0]);
    }

    #[test]
    fn b_zero_input_gives_zero() {
        let m = MonotoneSde::default_cubic(3);
        let out = apply_b_vec(&m, 0.0, &StateVec::new(vec![1.0, -1.0, 0.5]), &[0.0; 3]).unwrap();
        assert!(out.coeffs().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn b_linear_in_u() {
        let m = MonotoneSde::new(
            2,
            DriftKind::Linear { rate: 1.0 },
            SigmaKind::TanhDiag { scale: 0.5 },
            vec![0.0; 2],
        )
        .unwrap();
        let x = StateVec::new(vec![0.3, -0.8]);
        let u = [1.0, 2.0];
        let v = [-0.5, 0.25];
        let alpha = 1.7;
        let lhs = apply_b_vec(&m, 0.0, &x, &[alpha * u[0] + v[0], alpha * u[1] + v[1]]).unwrap();
        let bu = apply_b_vec(&m, 0.0, &x, &u).unwrap();
        let bv = apply_b_vec(&m, 0.0, &x, &v).unwrap();
        for i in 0..2 {
            let rhs = alpha * bu.coeffs()[i] + bv.coeffs()[i];
            assert!((lhs.coeffs()[i] - rhs).abs() < 1e-15);
        }
    }

    #[test]
    fn drift_one_sided_bound_sampled() {
        // <x-y, b(x)-b(y)> <= c_b |x-y|^2 on random pairs.
        let m = MonotoneSde::default_cubic(3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..500 {
            let x: Vec<f64> = (0..3).map(|_| 5.0 * rng.sample::<f64, _>(StandardNormal)).collect();
            let y: Vec<f64> = (0..3).map(|_| 5.0 * rng.sample::<f64, _>(StandardNormal)).collect();
            let sx = StateVec::new(x.clone());
            let sy = StateVec::new(y.clone());
            let bx = apply_a(&m, 0.0, &sx).unwrap();
            let by = apply_a(&m, 0.0, &sy).unwrap();
            let mut inner = 0.0;
            let mut dist2 = 0.0;
            for i in 0..3 {
                let dx = x[i] - y[i];
                inner += dx * (bx.coeffs()[i] - by.coeffs()[i]);
                dist2 += dx * dx;
            }
            assert!(inner <= m.c_b * dist2 + 1e-9);
        }
    }

    #[test]
    fn sigma_lipschitz_sampled() {
        let m = MonotoneSde::new(
            2,
            DriftKind::Linear { rate: 1.0 },
            SigmaKind::TanhDiag { scale: 0.5 },
            vec![0.0; 2],
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..500 {
            let x: Vec<f64> = (0..2).map(|_| 5.0 * rng.sample::<f64, _>(StandardNormal)).collect();
            let y: Vec<f64> = (0..2).map(|_| 5.0 * rng.sample::<f64, _>(StandardNormal)).collect();
            let mut hs = 0.0;
            let mut dist2 = 0.0;
            for i in 0..2 {
                let ds = m.sigma_value(x[i]) - m.sigma_value(y[i]);
                hs += ds * ds;
                let dx = x[i] - y[i];
                dist2 += dx * dx;
            }
            assert!(hs.sqrt() <= m.c_sigma * dist2.sqrt() + 1e-9);
        }
    }

    #[test]
    fn analytic_jacobian_matches_fd() {
        let m = MonotoneSde::default_cubic(3);
        let x = StateVec::new(vec![0.4, -1.2, 0.9]);
        let ja = m.drift_jacobian(0.0, &x).unwrap();
        let jf = crate::models::fd_drift_jacobian(&m, 0.0, &x).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!(
                    (ja[(i, j)] - jf[(i, j)]).abs() < 1e-5 * (1.0 + ja[(i, j)].abs()),
                    "({i},{j}): {} vs {}",
                    ja[(i, j)],
                    jf[(i, j)]
                );
            }
        }
    }
}
