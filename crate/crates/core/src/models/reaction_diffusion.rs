//! 1-d reaction–diffusion equation on (0,1) with Dirichlet boundary:
//! power-law (p-Laplacian) flux, odd-power zero-order term, finitely many
//! Lipschitz noise modes.
//!
//! Discretization: second-order differences in conservative form on a
//! uniform mesh with the boundary rows eliminated. The pivot space is
//! discrete `L^2` (Gram `mesh * I`), `X1` the gradient `L^{q1}` norm and
//! `X2` the nodal `L^{q2}` norm.

use super::{ModelConstants, MonotoneModel};
use crate::error::CoreError;
use crate::linalg::DMat;
use crate::triple::{DualVec, NormRecipe, SpaceSpec, StateVec};

/// Flux nonlinearity applied to the discrete gradient.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FluxKind {
    /// `a(r) = |r|^{q1-2} r` (p-Laplacian with p = q1).
    PowerLaw,
    /// `a(r) = e^r - 1`: non-decreasing but violates the polynomial growth
    /// bound (boundedness counterexample).
    Exponential,
}

/// Zero-order reaction term.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ReactionKind {
    /// `b(r) = r |r|^{q2-2}` (odd, non-decreasing, growth q2 - 1).
    OddPower,
    /// No zero-order term.
    None,
}

/// One noise mode `u_j ↦ σ_j(ξ, x(ξ)) u_j`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RdMode {
    pub kind: RdModeKind,
    pub scale: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RdModeKind {
    /// `σ(ξ, r) = scale * sin(wave π ξ)` (state-independent).
    AdditiveSine { wave: usize },
    /// `σ(ξ, r) = scale * sin(wave π ξ) * tanh(r)` (Lipschitz multiplicative).
    MultiplicativeTanh { wave: usize },
    /// `σ(ξ, r) = scale * r^2`: violates the Lipschitz bound.
    QuadraticGrowth,
}

pub struct ReactionDiffusion {
    space: SpaceSpec,
    mesh: f64,
    dim: usize,
    q1: f64,
    q2: f64,
    flux: FluxKind,
    reaction: ReactionKind,
    modes: Vec<RdMode>,
    /// Huber-style regularization used in Jacobians only.
    eps_reg: f64,
    constants: ModelConstants,
    x0: StateVec,
    /// Declared growth constants of the flux/reaction conditions
    /// (`a(ξ,r) r >= c1 |r|^{q1} - c2`, `|a(ξ,r)| <= c3 (|r|^{q1-1} + 1)`).
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

impl ReactionDiffusion {
    pub fn new(
        dim: usize,
        q1: f64,
        q2: f64,
        flux: FluxKind,
        reaction: ReactionKind,
        modes: Vec<RdMode>,
        x0: Vec<f64>,
    ) -> Result<Self, CoreError> {
        if q1 < 2.0 || q2 < 2.0 {
            return Err(CoreError::InvalidArgument("need q1, q2 >= 2".into()));
        }
        if x0.len() != dim {
            return Err(CoreError::DimensionMismatch { expected: dim, got: x0.len() });
        }
        if modes.is_empty() {
            return Err(CoreError::InvalidArgument("need at least one noise mode".into()));
        }
        let mesh = 1.0 / (dim as f64 + 1.0);
        // With no reaction the X2 component decays only through the pivot
        // norm; q2 = 2 keeps the declared constants honest.
        let q2_eff = match reaction {
            ReactionKind::OddPower => q2,
            ReactionKind::None => 2.0,
        };
        let space = SpaceSpec::new(
            dim,
            {
                let mut g = DMat::identity(dim);
                g.scale(mesh);
                g
            },
            NormRecipe::GradLq { q: q1, mesh },
            NormRecipe::Lq { q: q2_eff },
            vec![mesh; dim],
            1.0,
        )?;
        // Lipschitz and uniform-size constants per mode.
        let mut lip_sq = 0.0;
        let mut sup_sq = 0.0;
        for mode in &modes {
            match mode.kind {
                RdModeKind::AdditiveSine { .. } => {
                    sup_sq += mode.scale * mode.scale;
                }
                RdModeKind::MultiplicativeTanh { .. } => {
                    lip_sq += mode.scale * mode.scale;
                    sup_sq += mode.scale * mode.scale;
                }
                RdModeKind::QuadraticGrowth => {
                    // Deliberately false claim; the noise checker must flag it.
                    lip_sq += mode.scale * mode.scale;
                    sup_sq += mode.scale * mode.scale;
                }
            }
        }
        // Total spatial mass is below 1, so sup_sq bounds the squared HS
        // norm uniformly in the state.
        let beta1 = lip_sq.max(sup_sq).sqrt().max(1e-12);
        // The sharp coordinatewise constant for power nonlinearities is
        // 2^{2-q}; back off by 10% to keep the declared claim strict.
        let (lambda2, lambda2_mono) = match reaction {
            ReactionKind::OddPower => (1.0, 0.9 * (2.0f64).powf(2.0 - q2_eff)),
            ReactionKind::None => (1.0, 0.9),
        };
        let constants = ModelConstants {
            q1,
            q2: q2_eff,
            lambda1: 1.0,
            lambda2,
            lambda3: 1.0,
            lambda0: match reaction {
                ReactionKind::OddPower => 0.0,
                ReactionKind::None => 1.0,
            },
            lambda1_mono: 0.9 * (2.0f64).powf(2.0 - q1),
            lambda2_mono,
            c_a1: 1.0,
            c_a2: 1.0,
            beta1,
        };
        Ok(ReactionDiffusion {
            space,
            mesh,
            dim,
            q1,
            q2: q2_eff,
            flux,
            reaction,
            modes,
            eps_reg: 1e-8,
            constants,
            x0: StateVec::new(x0),
            c1: 1.0,
            c2: 1.0,
            c3: 1.25,
        })
    }

    /// Default shipped configuration: p-Laplacian flux and cubic-type
    /// reaction with one multiplicative and one additive sine mode.
    pub fn default_p_laplacian(dim: usize, q1: f64, q2: f64) -> Self {
        let mesh = 1.0 / (dim as f64 + 1.0);
        let x0: Vec<f64> = (0..dim)
            .map(|i| {
                let xi = (i as f64 + 1.0) * mesh;
                0.8 * (std::f64::consts::PI * xi).sin()
            })
            .collect();
        ReactionDiffusion::new(
            dim,
            q1,
            q2,
            FluxKind::PowerLaw,
            ReactionKind::OddPower,
            vec![
                RdMode { kind: RdModeKind::MultiplicativeTanh { wave: 1 }, scale: 0.5 },
                RdMode { kind: RdModeKind::AdditiveSine { wave: 2 }, scale: 0.25 },
            ],
            x0,
        )
        .expect("default p-laplacian config is valid")
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

    pub fn node(&self, i: usize) -> f64 {
        (i as f64 + 1.0) * self.mesh
    }

    pub fn with_eps_reg(mut self, eps_reg: f64) -> Self {
        self.eps_reg = eps_reg;
        self
    }

    pub fn flux_value(&self, r: f64) -> f64 {
        match self.flux {
            FluxKind::PowerLaw => r.abs().powf(self.q1 - 2.0) * r,
            FluxKind::Exponential => r.exp() - 1.0,
        }
    }

    fn flux_deriv_reg(&self, r: f64) -> f64 {
        match self.flux {
            FluxKind::PowerLaw => {
                (self.q1 - 1.0) * (r * r + self.eps_reg * self.eps_reg).powf((self.q1 - 2.0) / 2.0)
            }
            FluxKind::Exponential => r.exp(),
        }
    }

    pub fn reaction_value(&self, r: f64) -> f64 {
        match self.reaction {
            ReactionKind::OddPower => r * r.abs().powf(self.q2 - 2.0),
            ReactionKind::None => 0.0,
        }
    }

    fn reaction_deriv_reg(&self, r: f64) -> f64 {
        match self.reaction {
            ReactionKind::OddPower => {
                (self.q2 - 1.0) * (r * r + self.eps_reg * self.eps_reg).powf((self.q2 - 2.0) / 2.0)
            }
            ReactionKind::None => 0.0,
        }
    }

    /// Forward differences over the d+1 cells with zero boundary.
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let mut g = vec![0.0; d + 1];
        for j in 0..=d {
            let left = if j == 0 { 0.0 } else { x[j - 1] };
            let right = if j == d { 0.0 } else { x[j] };
            g[j] = (right - left) / self.mesh;
        }
        g
    }

    fn sigma_value(&self, mode: &RdMode, xi: f64, r: f64) -> f64 {
        match mode.kind {
            RdModeKind::AdditiveSine { wave } => {
                mode.scale * (wave as f64 * std::f64::consts::PI * xi).sin()
            }
            RdModeKind::MultiplicativeTanh { wave } => {
                mode.scale * (wave as f64 * std::f64::consts::PI * xi).sin() * r.tanh()
            }
            RdModeKind::QuadraticGrowth => mode.scale * r * r,
        }
    }

    fn sigma_deriv(&self, mode: &RdMode, xi: f64, r: f64) -> f64 {
        match mode.kind {
            RdModeKind::AdditiveSine { .. } => 0.0,
            RdModeKind::MultiplicativeTanh { wave } => {
                let t = r.tanh();
                mode.scale * (wave as f64 * std::f64::consts::PI * xi).sin() * (1.0 - t * t)
            }
            RdModeKind::QuadraticGrowth => 2.0 * mode.scale * r,
        }
    }
}

impl MonotoneModel for ReactionDiffusion {
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

    /// Conservative divergence of the flux of the discrete gradient:
    /// `(a(g_{i+1}) - a(g_i)) / mesh` at node i.
    fn apply_a1(&self, _t: f64, x: &StateVec) -> DualVec {
        let g = self.gradient(x.coeffs());
        let flux: Vec<f64> = g.iter().map(|&r| self.flux_value(r)).collect();
        let mut out = vec![0.0; self.dim];
        for (i, o) in out.iter_mut().enumerate() {
            *o = (flux[i + 1] - flux[i]) / self.mesh;
        }
        DualVec::new(out)
    }

    fn apply_a2(&self, _t: f64, x: &StateVec) -> DualVec {
        DualVec::new(x.coeffs().iter().map(|&r| -self.reaction_value(r)).collect())
    }

    fn apply_b(&self, _t: f64, x: &StateVec, u: &[f64]) -> StateVec {
        let mut out = vec![0.0; self.dim];
        for (i, o) in out.iter_mut().enumerate() {
            let xi = self.node(i);
            let r = x.coeffs()[i];
            *o = self
                .modes
                .iter()
                .zip(u)
                .map(|(mode, &uj)| self.sigma_value(mode, xi, r) * uj)
                .sum();
        }
        StateVec::new(out)
    }

    fn b_hs_norm_sq(&self, _t: f64, x: &StateVec) -> f64 {
        let mut acc = 0.0;
        for mode in &self.modes {
            let mut col = 0.0;
            for i in 0..self.dim {
                let s = self.sigma_value(mode, self.node(i), x.coeffs()[i]);
                col += s * s;
            }
            acc += self.mesh * col;
        }
        acc
    }

    fn drift_jacobian(&self, _t: f64, x: &StateVec) -> Option<DMat> {
        let d = self.dim;
        let g = self.gradient(x.coeffs());
        let ap: Vec<f64> = g.iter().map(|&r| self.flux_deriv_reg(r)).collect();
        let h2 = self.mesh * self.mesh;
        let mut jac = DMat::zeros(d, d);
        for i in 0..d {
            jac[(i, i)] = -(ap[i] + ap[i + 1]) / h2 - self.reaction_deriv_reg(x.coeffs()[i]);
            if i + 1 < d {
                jac[(i, i + 1)] = ap[i + 1] / h2;
            }
            if i > 0 {
                jac[(i, i - 1)] = ap[i] / h2;
            }
        }
        Some(jac)
    }

    fn control_jacobian(&self, _t: f64, x: &StateVec, u: &[f64]) -> Option<DMat> {
        let d = self.dim;
        let mut jac = DMat::zeros(d, d);
        for i in 0..d {
            let xi = self.node(i);
            let r = x.coeffs()[i];
            jac[(i, i)] = self
                .modes
                .iter()
                .zip(u)
                .map(|(mode, &uj)| self.sigma_deriv(mode, xi, r) * uj)
                .sum();
        }
        Some(jac)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{apply_a, fd_drift_jacobian};
    use crate::triple::NormPart;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn laplacian_model() -> ReactionDiffusion {
        // q1 = 2 reduces the flux to the identity: pure discrete Laplacian.
        ReactionDiffusion::new(
            3,
            2.0,
            2.0,
            FluxKind::PowerLaw,
            ReactionKind::None,
            vec![RdMode { kind: RdModeKind::AdditiveSine { wave: 1 }, scale: 1.0 }],
            vec![0.0; 3],
        )
        .unwrap()
    }

    #[test]
    fn q1_two_gives_discrete_laplacian() {
        // Hand finite-difference oracle on 3 interior nodes, mesh 1/4:
        // x = (0,1,0) maps to (16, -32, 16).
        let m = laplacian_model();
        let a = m.apply_a1(0.0, &StateVec::new(vec![0.0, 1.0, 0.0]));
        assert_eq!(a.coeffs(), &[16.0, -32.0, 16.0]);
    }

    #[test]
    fn coercivity_identity_is_exact() {
        // [u, A(u)] = -||u||_X1^q1 - ||u||_X2^q2 by discrete integration by
        // parts; verify on random states.
        let m = ReactionDiffusion::default_p_laplacian(6, 3.0, 3.0);
        let space = m.space();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let x = StateVec::new(
                (0..6).map(|_| 2.0 * rng.sample::<f64, _>(StandardNormal)).collect(),
            );
            let a = apply_a(&m, 0.0, &x).unwrap();
            let lhs = space.pairing(&x, &a).unwrap();
            let n1 = space.x_norm(&x, NormPart::X1).unwrap();
            let n2 = space.x_norm(&x, NormPart::X2).unwrap();
            let rhs = -n1.powf(3.0) - n2.powf(3.0);
            assert!(
                (lhs - rhs).abs() <= 1e-9 * (1.0 + lhs.abs()),
                "lhs {lhs} rhs {rhs}"
            );
        }
    }

    #[test]
    fn monotonicity_defect_nonpositive_sampled() {
        // 1000 random pairs: [x-y, A(x)-A(y)] <= 0 for the p-Laplacian and
        // odd-power reaction.
        let m = ReactionDiffusion::default_p_laplacian(8, 3.0, 4.0);
        let space = m.space();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut worst = f64::NEG_INFINITY;
        for _ in 0..1000 {
            let x = StateVec::new(
                (0..8).map(|_| 3.0 * rng.sample::<f64, _>(StandardNormal)).collect(),
            );
            let y = StateVec::new(
                (0..8).map(|_| 3.0 * rng.sample::<f64, _>(StandardNormal)).collect(),
            );
            let ax = apply_a(&m, 0.0, &x).unwrap();
            let ay = apply_a(&m, 0.0, &y).unwrap();
            let mut da = ax;
            da.add_scaled(-1.0, &ay);
            let diff = x.minus(&y);
            let val = space.pairing(&diff, &da).unwrap();
            worst = worst.max(val);
        }
        assert!(worst <= 1e-10, "worst monotonicity value {worst}");
    }

    #[test]
    fn analytic_jacobian_matches_fd() {
        let m = ReactionDiffusion::default_p_laplacian(5, 3.0, 4.0);
        let x = StateVec::new(vec![0.5, -0.25, 0.8, 0.1, -0.6]);
        let ja = m.drift_jacobian(0.0, &x).unwrap();
        let jf = fd_drift_jacobian(&m, 0.0, &x).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let scale = 1.0 + ja[(i, j)].abs();
                assert!(
                    (ja[(i, j)] - jf[(i, j)]).abs() < 1e-4 * scale,
                    "({i},{j}): {} vs {}",
                    ja[(i, j)],
                    jf[(i, j)]
                );
            }
        }
    }

    #[test]
    fn hs_norm_matches_mode_sum() {
        let m = ReactionDiffusion::default_p_laplacian(4, 3.0, 3.0);
        let x = StateVec::new(vec![0.2, -0.4, 0.6, -0.8]);
        // Column-by-column oracle: apply to each coordinate direction.
        let mut acc = 0.0;
        for j in 0..m.noise_dim() {
            let mut e = vec![0.0; m.noise_dim()];
            e[j] = 1.0;
            let col = m.apply_b(0.0, &x, &e);
            acc += m.space().h_norm_sq(&col).unwrap();
        }
        let hs = m.b_hs_norm_sq(0.0, &x);
        assert!((acc - hs).abs() < 1e-12 * (1.0 + hs));
    }

    #[test]
    fn growth_bound_on_samples() {
        // ||B(x)||_HS^2 <= beta1^2 (1 + ||x||_H)^2.
        let m = ReactionDiffusion::default_p_laplacian(8, 3.0, 3.0);
        let beta = m.constants().beta1;
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..500 {
            let x = StateVec::new(
                (0..8).map(|_| 10.0 * rng.sample::<f64, _>(StandardNormal)).collect(),
            );
            let hs = m.b_hs_norm_sq(0.0, &x);
            let bound = beta * (1.0 + m.space().h_norm(&x).unwrap());
            assert!(hs.sqrt() <= bound + 1e-12);
        }
    }

    #[test]
    fn flux_growth_conditions_sampled() {
        // a(ξ,r) r >= c1 |r|^{q1} - c2 and |a(ξ,r)| <= c3 (|r|^{q1-1} + 1).
        let m = ReactionDiffusion::default_p_laplacian(4, 3.0, 3.0);
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for _ in 0..1000 {
            let r = 10.0 * rng.sample::<f64, _>(StandardNormal);
            let a = m.flux_value(r);
            assert!(a * r >= m.c1 * r.abs().powf(m.q1) - m.c2 - 1e-9);
            assert!(a.abs() <= m.c3 * (r.abs().powf(m.q1 - 1.0) + 1.0) + 1e-9);
            // Non-decreasing on sampled pairs.
            let r2 = r + rng.sample::<f64, _>(StandardNormal).abs();
            assert!(m.flux_value(r2) >= a - 1e-12);
        }
    }
}
