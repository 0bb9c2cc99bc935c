//! 1-d porous-medium equation on (0,1) with Dirichlet boundary.
//!
//! The pivot space is the discrete `W^{-1,2}`: the Gram matrix is the scaled
//! inverse of the Dirichlet stencil, so the drift representer of
//! `Δ φ(x)` is simply the discrete Laplacian applied to `φ(x)` nodewise.
//! Noise is cylindrical: finitely many fixed directions in `H` scaled by
//! Lipschitz functions of pivot-space probes of the state.

use super::{ModelConstants, MonotoneModel};
use crate::error::CoreError;
use crate::linalg::{dirichlet_stencil, DMat};
use crate::triple::{DualVec, NormRecipe, SpaceSpec, StateVec};

/// Scalar coefficient of one cylindrical mode.
#[derive(Clone, Debug, PartialEq)]
pub enum CylCoeff {
    /// `g(x) = value` (additive mode).
    Constant(f64),
    /// `g(x) = tanh(gain * <probe, x>_H)` (Lipschitz multiplicative mode).
    TanhOfProbe { gain: f64 },
}

/// One cylindrical noise mode: `u_k ↦ g_k(x) u_k * direction_k`.
#[derive(Clone, Debug)]
pub struct CylMode {
    /// Direction in `H` (coefficient vector).
    pub direction: Vec<f64>,
    /// Probe vector for state-dependent coefficients; ignored by constants.
    pub probe: Vec<f64>,
    pub coeff: CylCoeff,
}

pub struct PorousMedium {
    space: SpaceSpec,
    mesh: f64,
    dim: usize,
    /// Porous-medium exponent (`p >= 2`).
    p: f64,
    /// Nonlinearity exponent in `φ(r) = r |r|^gamma`; defaults to `p - 2`.
    gamma: f64,
    /// Effective power `q = gamma + 2` driving the norms and constants.
    q: f64,
    stencil: DMat,
    modes: Vec<CylMode>,
    eps_reg: f64,
    constants: ModelConstants,
    x0: StateVec,
}

impl PorousMedium {
    pub fn new(
        dim: usize,
        p: f64,
        gamma: f64,
        modes: Vec<CylMode>,
        x0: Vec<f64>,
    ) -> Result<Self, CoreError> {
        if p < 2.0 {
            return Err(CoreError::InvalidArgument("need p >= 2".into()));
        }
        if gamma < 0.0 {
            return Err(CoreError::InvalidArgument(
                "need gamma >= 0 so the effective power stays >= 2".into(),
            ));
        }
        if x0.len() != dim {
            return Err(CoreError::DimensionMismatch { expected: dim, got: x0.len() });
        }
        if modes.is_empty() {
            return Err(CoreError::InvalidArgument("need at least one noise mode".into()));
        }
        let q = gamma + 2.0;
        let mesh = 1.0 / (dim as f64 + 1.0);
        let stencil = dirichlet_stencil(dim);
        let mut gram = stencil.inverse()?;
        gram.scale(mesh.powi(3));
        // Discrete Poincaré bound: ||x||_H <= C ||x||_{L^q}. Estimate the
        // embedding constant from basis vectors plus a safety factor.
        let space = SpaceSpec::new(
            dim,
            gram,
            NormRecipe::Lq { q },
            NormRecipe::Lq { q },
            vec![mesh; dim],
            1.0, // provisional, refined below
        )?;
        let mut ratio_min = f64::INFINITY;
        for i in 0..dim {
            let mut e = vec![0.0; dim];
            e[i] = 1.0;
            let x = StateVec::new(e);
            let h = space.h_norm(&x)?;
            let xn = space.x_norm(&x, crate::triple::NormPart::Full)?;
            if h > 0.0 {
                ratio_min = ratio_min.min(xn / h);
            }
        }
        let embed = 0.9 * ratio_min.min(2.0 * std::f64::consts::PI);
        let space = SpaceSpec::new(
            dim,
            space.gram_h().clone(),
            NormRecipe::Lq { q },
            NormRecipe::Lq { q },
            vec![mesh; dim],
            embed,
        )?;

        for mode in &modes {
            if mode.direction.len() != dim || mode.probe.len() != dim {
                return Err(CoreError::DimensionMismatch {
                    expected: dim,
                    got: mode.direction.len(),
                });
            }
        }
        // beta1 = max(growth, Lipschitz) over the mode family.
        let mut sup_sq = 0.0;
        let mut lip_sq = 0.0;
        for mode in &modes {
            let dir_h = space.h_norm(&StateVec::new(mode.direction.clone()))?;
            match &mode.coeff {
                CylCoeff::Constant(c) => {
                    sup_sq += c * c * dir_h * dir_h;
                }
                CylCoeff::TanhOfProbe { gain } => {
                    let probe_h = space.h_norm(&StateVec::new(mode.probe.clone()))?;
                    sup_sq += dir_h * dir_h;
                    lip_sq += gain * gain * probe_h * probe_h * dir_h * dir_h;
                }
            }
        }
        let beta1 = sup_sq.max(lip_sq).sqrt().max(1e-12);
        let constants = ModelConstants {
            q1: q,
            q2: q,
            lambda1: 0.5,
            lambda2: 0.5,
            lambda3: 1.0,
            lambda0: 0.0,
            lambda1_mono: 0.9 * (2.0f64).powf(1.0 - q),
            lambda2_mono: 0.9 * (2.0f64).powf(1.0 - q),
            c_a1: 1.0,
            c_a2: 1.0,
            beta1,
        };
        Ok(PorousMedium {
            space,
            mesh,
            dim,
            p,
            gamma,
            q,
            stencil,
            modes,
            eps_reg: 1e-8,
            constants,
            x0: StateVec::new(x0),
        })
    }

    /// Default shipped configuration: `gamma = p - 2`, a nonnegative sine
    /// bump initial state, one additive and one multiplicative sine mode.
    pub fn default_config(dim: usize, p: f64) -> Self {
        let mesh = 1.0 / (dim as f64 + 1.0);
        let profile = |wave: usize| -> Vec<f64> {
            (0..dim)
                .map(|i| {
                    let xi = (i as f64 + 1.0) * mesh;
                    (wave as f64 * std::f64::consts::PI * xi).sin()
                })
                .collect()
        };
        let x0: Vec<f64> = profile(1).iter().map(|v| 0.8 * v).collect();
        let dir1: Vec<f64> = profile(1).iter().map(|v| 0.4 * v).collect();
        let dir2: Vec<f64> = profile(2).iter().map(|v| 0.3 * v).collect();
        let modes = vec![
            CylMode { direction: dir1.clone(), probe: dir1.clone(), coeff: CylCoeff::Constant(1.0) },
            CylMode { direction: dir2, probe: dir1, coeff: CylCoeff::TanhOfProbe { gain: 1.0 } },
        ];
        PorousMedium::new(dim, p, p - 2.0, modes, x0).expect("default porous config is valid")
    }

    /// Replaces the initial state (dimension must match).
    pub fn with_initial_state(mut self, x0: StateVec) -> Result<Self, CoreError> {
        if x0.dim() != self.space.dim() {
            return Err(CoreError::DimensionMismatch { expected: self.space.dim(), got: x0.dim() });
        }
        self.x0 = x0;
        Ok(self)
    }

    pub fn mesh(&self) -> f64 {
        self.mesh
    }

    pub fn exponent(&self) -> f64 {
        self.p
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Effective power `q = gamma + 2` driving the coercivity exponents.
    pub fn effective_power(&self) -> f64 {
        self.q
    }

    pub fn with_eps_reg(mut self, eps_reg: f64) -> Self {
        self.eps_reg = eps_reg;
        self
    }

    /// The porous-medium nonlinearity `φ(r) = r |r|^gamma`; odd and
    /// non-decreasing.
    pub fn phi(&self, r: f64) -> f64 {
        r * r.abs().powf(self.gamma)
    }

    fn phi_deriv_reg(&self, r: f64) -> f64 {
        (self.gamma + 1.0) * (r * r + self.eps_reg * self.eps_reg).powf(self.gamma / 2.0)
    }

    fn coeff_value(&self, mode: &CylMode, x: &StateVec) -> f64 {
        match &mode.coeff {
            CylCoeff::Constant(c) => *c,
            CylCoeff::TanhOfProbe { gain } => {
                let probe = StateVec::new(mode.probe.clone());
                let s = self.space.h_inner(&probe, x).expect("dims fixed at build");
                (gain * s).tanh()
            }
        }
    }
}

impl MonotoneModel for PorousMedium {
    fn space(&self) -> &SpaceSpec {
        &self.space
    }

    fn noise_dim(&self) -> usize {
        self.modes.len()
    }

    fn initial_state(&self) -> &StateVec {
        &self.x0
    }

    fn constants(&self) -> &ModelConstants {
        &self.constants
    }

    /// Discrete Laplacian of `φ(x)` nodewise (the `W^{-1,2}` representer of
    /// the divergence-form drift).
    fn apply_a1(&self, _t: f64, x: &StateVec) -> DualVec {
        let phi: Vec<f64> = x.coeffs().iter().map(|&r| self.phi(r)).collect();
        let t_phi = self.stencil.mul_vec(&phi);
        let h2 = self.mesh * self.mesh;
        DualVec::new(t_phi.iter().map(|v| -v / h2).collect())
    }

    fn apply_a2(&self, _t: f64, x: &StateVec) -> DualVec {
        DualVec::zeros(x.dim())
    }

    fn apply_b(&self, _t: f64, x: &StateVec, u: &[f64]) -> StateVec {
        let mut out = vec![0.0; self.dim];
        for (mode, &uk) in self.modes.iter().zip(u) {
            let g = self.coeff_value(mode, x);
            for i in 0..self.dim {
                out[i] += g * uk * mode.direction[i];
            }
        }
        StateVec::new(out)
    }

    fn b_hs_norm_sq(&self, _t: f64, x: &StateVec) -> f64 {
        self.modes
            .iter()
            .map(|mode| {
                let g = self.coeff_value(mode, x);
                let dir_sq = self
                    .space
                    .h_norm_sq(&StateVec::new(mode.direction.clone()))
                    .expect("dims fixed at build");
                g * g * dir_sq
            })
            .sum()
    }

    fn drift_jacobian(&self, _t: f64, x: &StateVec) -> Option<DMat> {
        // -T/mesh^2 * diag(phi'(x))
        let d = self.dim;
        let h2 = self.mesh * self.mesh;
        let mut jac = DMat::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                let t = self.stencil[(i, j)];
                if t != 0.0 {
                    jac[(i, j)] = -t / h2 * self.phi_deriv_reg(x.coeffs()[j]);
                }
            }
        }
        Some(jac)
    }

    fn control_jacobian(&self, _t: f64, x: &StateVec, u: &[f64]) -> Option<DMat> {
        let d = self.dim;
        let mut jac = DMat::zeros(d, d);
        for (mode, &uk) in self.modes.iter().zip(u) {
            if let CylCoeff::TanhOfProbe { gain } = &mode.coeff {
                let probe = StateVec::new(mode.probe.clone());
                let s = self.space.h_inner(&probe, x).expect("dims fixed at build");
                let dsig = gain * (1.0 - (gain * s).tanh().powi(2));
                // d/dx g(<p,x>_H) = g' * G p
                let gp = self.space.gram_h().mul_vec(&mode.probe);
                for i in 0..d {
                    for j in 0..d {
                        jac[(i, j)] += dsig * uk * mode.direction[i] * gp[j];
                    }
                }
            }
        }
        Some(jac)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{apply_a, apply_b_vec, fd_drift_jacobian};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn phi_is_identity_at_p_two() {
        let m = PorousMedium::default_config(4, 2.0);
        for r in [-2.5, -0.3, 0.0, 0.7, 4.2] {
            assert_eq!(m.phi(r), r);
        }
    }

    #[test]
    fn phi_odd_symmetry() {
        let m = PorousMedium::default_config(4, 3.0);
        for r in [0.1, 0.5, 1.0, 3.0, 10.0] {
            assert!((m.phi(-r) + m.phi(r)).abs() < 1e-15);
        }
    }

    #[test]
    fn phi_cubic_for_gamma_two() {
        let m = PorousMedium::new(
            3,
            4.0,
            2.0,
            vec![CylMode {
                direction: vec![1.0, 0.0, 0.0],
                probe: vec![1.0, 0.0, 0.0],
                coeff: CylCoeff::Constant(1.0),
            }],
            vec![0.0; 3],
        )
        .unwrap();
        assert!((m.phi(3.0) - 27.0).abs() < 1e-12);
    }

    #[test]
    fn p_two_drift_is_discrete_laplacian_of_state() {
        // With p = 2 the nonlinearity is the identity, so the drift is the
        // discrete Laplacian applied to the state itself.
        let m = PorousMedium::default_config(3, 2.0);
        let x = StateVec::new(vec![0.0, 1.0, 0.0]);
        let a = apply_a(&m, 0.0, &x).unwrap();
        let h2 = m.mesh() * m.mesh();
        let expected = [1.0 / h2, -2.0 / h2, 1.0 / h2];
        for i in 0..3 {
            assert!((a.coeffs()[i] - expected[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn monotone_under_pivot_pairing() {
        // [x-y, A(x)-A(y)]_X <= 0 over random pairs: the pairing telescopes
        // to -mesh * Σ (φ(x)-φ(y))(x-y).
        let m = PorousMedium::default_config(6, 3.0);
        let space = m.space();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..1000 {
            let x = StateVec::new(
                (0..6).map(|_| 3.0 * rng.sample::<f64, _>(StandardNormal)).collect(),
            );
            let y = StateVec::new(
                (0..6).map(|_| 3.0 * rng.sample::<f64, _>(StandardNormal)).collect(),
            );
            let mut da = apply_a(&m, 0.0, &x).unwrap();
            da.add_scaled(-1.0, &apply_a(&m, 0.0, &y).unwrap());
            let val = space.pairing(&x.minus(&y), &da).unwrap();
            assert!(val <= 1e-10, "monotonicity value {val}");
        }
    }

    #[test]
    fn pairing_telescopes_to_mass_integral() {
        // [v, A(x)]_X = -mesh * Σ v_i φ(x_i): the Gram cancels the stencil.
        let m = PorousMedium::default_config(5, 3.0);
        let space = m.space();
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for _ in 0..200 {
            let x = StateVec::new(
                (0..5).map(|_| 2.0 * rng.sample::<f64, _>(StandardNormal)).collect(),
            );
            let v = StateVec::new(
                (0..5).map(|_| 2.0 * rng.sample::<f64, _>(StandardNormal)).collect(),
            );
            let a = apply_a(&m, 0.0, &x).unwrap();
            let lhs = space.pairing(&v, &a).unwrap();
            let rhs: f64 = -m.mesh()
                * v.coeffs()
                    .iter()
                    .zip(x.coeffs())
                    .map(|(vi, &xi)| vi * m.phi(xi))
                    .sum::<f64>();
            assert!((lhs - rhs).abs() < 1e-9 * (1.0 + rhs.abs()), "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn constant_coefficient_mode_is_state_independent() {
        let m = PorousMedium::default_config(4, 3.0);
        let x = StateVec::new(vec![0.5, 0.2, -0.1, 0.4]);
        let y = StateVec::new(vec![-2.0, 1.0, 3.0, 0.0]);
        // Only drive the first (constant-coefficient) mode.
        let bx = apply_b_vec(&m, 0.0, &x, &[1.5, 0.0]).unwrap();
        let by = apply_b_vec(&m, 0.0, &y, &[1.5, 0.0]).unwrap();
        for i in 0..4 {
            assert!((bx.coeffs()[i] - by.coeffs()[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn analytic_jacobians_match_fd() {
        let m = PorousMedium::default_config(5, 3.0);
        let x = StateVec::new(vec![0.4, -0.7, 0.9, 0.15, -0.3]);
        let ja = m.drift_jacobian(0.0, &x).unwrap();
        let jf = fd_drift_jacobian(&m, 0.0, &x).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let scale = 1.0 + ja[(i, j)].abs();
                assert!(
                    (ja[(i, j)] - jf[(i, j)]).abs() < 2e-4 * scale,
                    "drift ({i},{j}): {} vs {}",
                    ja[(i, j)],
                    jf[(i, j)]
                );
            }
        }
        let u = [0.7, -1.1];
        let jb = m.control_jacobian(0.0, &x, &u).unwrap();
        let jbf = crate::models::control_jacobian_or_fd(
            &NoJacModel(&m),
            0.0,
            &x,
            &u,
        )
        .unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let scale = 1.0 + jb[(i, j)].abs();
                assert!(
                    (jb[(i, j)] - jbf[(i, j)]).abs() < 2e-4 * scale,
                    "control ({i},{j}): {} vs {}",
                    jb[(i, j)],
                    jbf[(i, j)]
                );
            }
        }
    }

    /// Wrapper hiding the analytic Jacobians to force the FD fallback.
    struct NoJacModel<'a>(&'a PorousMedium);

    impl MonotoneModel for NoJacModel<'_> {
        fn space(&self) -> &SpaceSpec {
            self.0.space()
        }
        fn noise_dim(&self) -> usize {
            self.0.noise_dim()
        }
        fn initial_state(&self) -> &StateVec {
            self.0.initial_state()
        }
        fn constants(&self) -> &ModelConstants {
            self.0.constants()
        }
        fn apply_a1(&self, t: f64, x: &StateVec) -> DualVec {
            self.0.apply_a1(t, x)
        }
        fn apply_a2(&self, t: f64, x: &StateVec) -> DualVec {
            self.0.apply_a2(t, x)
        }
        fn apply_b(&self, t: f64, x: &StateVec, u: &[f64]) -> StateVec {
            self.0.apply_b(t, x, u)
        }
        fn b_hs_norm_sq(&self, t: f64, x: &StateVec) -> f64 {
            self.0.b_hs_norm_sq(t, x)
        }
    }
}
