//! Discrete evolution triple `X = X1 ∩ X2 ⊂ H ⊂ X*`.
//!
//! States are coefficient vectors in a fixed Galerkin basis. The pivot-space
//! inner product is a Gram matrix, the `X`-norms are weighted discrete `L^q`
//! or gradient-`L^q` recipes, and functionals in `X*` are stored through
//! their `H`-representer, so the dual pairing reduces to the `H` inner
//! product of coefficient vectors.

use crate::error::CoreError;
use crate::linalg::{self, cholesky, DMat};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// State in the Galerkin basis (coordinates of an element of `X ⊂ H`).
#[derive(Clone, Debug, PartialEq)]
pub struct StateVec {
    coeffs: Vec<f64>,
}

impl StateVec {
    pub fn new(coeffs: Vec<f64>) -> Self {
        StateVec { coeffs }
    }

    pub fn zeros(dim: usize) -> Self {
        StateVec { coeffs: vec![0.0; dim] }
    }

    pub fn dim(&self) -> usize {
        self.coeffs.len()
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    pub fn all_finite(&self) -> bool {
        self.coeffs.iter().all(|v| v.is_finite())
    }

    /// self += alpha * other
    pub fn add_scaled(&mut self, alpha: f64, other: &StateVec) {
        linalg::axpy(alpha, &other.coeffs, &mut self.coeffs);
    }

    pub fn scaled(&self, alpha: f64) -> StateVec {
        StateVec::new(self.coeffs.iter().map(|v| alpha * v).collect())
    }

    pub fn minus(&self, other: &StateVec) -> StateVec {
        StateVec::new(
            self.coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| a - b)
                .collect(),
        )
    }
}

/// Functional on `X` stored through its `H`-representer coordinates: the
/// pairing with a state is the `H` inner product of the two coefficient
/// vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct DualVec {
    coeffs: Vec<f64>,
}

impl DualVec {
    pub fn new(coeffs: Vec<f64>) -> Self {
        DualVec { coeffs }
    }

    pub fn zeros(dim: usize) -> Self {
        DualVec { coeffs: vec![0.0; dim] }
    }

    pub fn dim(&self) -> usize {
        self.coeffs.len()
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn all_finite(&self) -> bool {
        self.coeffs.iter().all(|v| v.is_finite())
    }

    pub fn add_scaled(&mut self, alpha: f64, other: &DualVec) {
        linalg::axpy(alpha, &other.coeffs, &mut self.coeffs);
    }

    pub fn from_state(x: &StateVec) -> DualVec {
        DualVec { coeffs: x.coeffs().to_vec() }
    }
}

/// Which of the two component norms of `X` (or their sum) to use.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormPart {
    X1,
    X2,
    /// `‖x‖_X = ‖x‖_X1 + ‖x‖_X2`
    Full,
}

/// Recipe for a discrete component norm of `X`.
#[derive(Clone, Debug, PartialEq)]
pub enum NormRecipe {
    /// Weighted discrete Lebesgue norm `(Σ_i w_i |x_i|^q)^{1/q}` with the
    /// space's quadrature weights.
    Lq { q: f64 },
    /// `L^q` norm of the forward-difference gradient on a uniform mesh with
    /// zero Dirichlet boundary: `(Σ_{cells} mesh · |Δx/mesh|^q)^{1/q}`.
    /// A seminorm recipe in general; with Dirichlet boundary it is a norm.
    GradLq { q: f64, mesh: f64 },
}

impl NormRecipe {
    pub fn exponent(&self) -> f64 {
        match self {
            NormRecipe::Lq { q } => *q,
            NormRecipe::GradLq { q, .. } => *q,
        }
    }
}

/// Discretized evolution triple: Galerkin dimension, `H` Gram matrix, the
/// two `X`-norm recipes, and quadrature weights for spatial integrals.
#[derive(Clone, Debug)]
pub struct SpaceSpec {
    dim: usize,
    gram_h: DMat,
    norm_x1: NormRecipe,
    norm_x2: NormRecipe,
    weights: Vec<f64>,
    embed_const: f64,
}

/// Controls the fixed-iteration ascent used by [`SpaceSpec::dual_norm_estimate`].
#[derive(Clone, Copy, Debug)]
pub struct DualAscentConfig {
    pub iterations: usize,
    pub random_starts: usize,
    pub seed: u64,
}

impl Default for DualAscentConfig {
    fn default() -> Self {
        DualAscentConfig {
            iterations: 60,
            random_starts: 4,
            seed: 0x5eed_0d0a,
        }
    }
}

impl SpaceSpec {
    /// Builds a space after validating the Gram matrix (symmetric positive
    /// definite), exponents (`q >= 2`) and weights (positive).
    pub fn new(
        dim: usize,
        gram_h: DMat,
        norm_x1: NormRecipe,
        norm_x2: NormRecipe,
        weights: Vec<f64>,
        embed_const: f64,
    ) -> Result<Self, CoreError> {
        if dim == 0 {
            return Err(CoreError::InvalidArgument("dim must be positive".into()));
        }
        if gram_h.rows() != dim || gram_h.cols() != dim {
            return Err(CoreError::DimensionMismatch { expected: dim, got: gram_h.rows() });
        }
        for i in 0..dim {
            for j in 0..i {
                if (gram_h[(i, j)] - gram_h[(j, i)]).abs()
                    > 1e-12 * (1.0 + gram_h[(i, j)].abs())
                {
                    return Err(CoreError::InvalidArgument(format!(
                        "gram matrix not symmetric at ({i},{j})"
                    )));
                }
            }
        }
        cholesky(&gram_h).map_err(|_| {
            CoreError::InvalidArgument("gram matrix not positive definite".into())
        })?;
        for recipe in [&norm_x1, &norm_x2] {
            if recipe.exponent() < 2.0 {
                return Err(CoreError::InvalidArgument(format!(
                    "norm exponent {} below 2",
                    recipe.exponent()
                )));
            }
        }
        if weights.len() != dim {
            return Err(CoreError::DimensionMismatch { expected: dim, got: weights.len() });
        }
        if weights.iter().any(|w| !(*w > 0.0)) {
            return Err(CoreError::InvalidArgument("weights must be positive".into()));
        }
        if !(embed_const > 0.0) {
            return Err(CoreError::InvalidArgument("embedding constant must be positive".into()));
        }
        Ok(SpaceSpec { dim, gram_h, norm_x1, norm_x2, weights, embed_const })
    }

    /// Euclidean triple `X1 = X2 = H = R^d` with unit weights (for SDE models).
    pub fn euclidean(dim: usize) -> SpaceSpec {
        SpaceSpec::new(
            dim,
            DMat::identity(dim),
            NormRecipe::Lq { q: 2.0 },
            NormRecipe::Lq { q: 2.0 },
            vec![1.0; dim],
            // ||x||_X = 2 |x| >= 2 ||x||_H.
            2.0,
        )
        .expect("euclidean space spec is valid")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn gram_h(&self) -> &DMat {
        &self.gram_h
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn norm_recipe(&self, part: NormPart) -> &NormRecipe {
        match part {
            NormPart::X1 => &self.norm_x1,
            NormPart::X2 => &self.norm_x2,
            NormPart::Full => &self.norm_x1,
        }
    }

    pub fn q1(&self) -> f64 {
        self.norm_x1.exponent()
    }

    pub fn q2(&self) -> f64 {
        self.norm_x2.exponent()
    }

    pub fn embed_const(&self) -> f64 {
        self.embed_const
    }

    fn check_dim(&self, got: usize) -> Result<(), CoreError> {
        if got != self.dim {
            Err(CoreError::DimensionMismatch { expected: self.dim, got })
        } else {
            Ok(())
        }
    }

    /// Inner product of the pivot space: `x^T G y`.
    pub fn h_inner(&self, x: &StateVec, y: &StateVec) -> Result<f64, CoreError> {
        self.check_dim(x.dim())?;
        self.check_dim(y.dim())?;
        Ok(self.gram_h.bilinear(x.coeffs(), y.coeffs()))
    }

    pub fn h_norm_sq(&self, x: &StateVec) -> Result<f64, CoreError> {
        self.h_inner(x, x)
    }

    pub fn h_norm(&self, x: &StateVec) -> Result<f64, CoreError> {
        Ok(self.h_norm_sq(x)?.max(0.0).sqrt())
    }

    /// Dual pairing `[x, f]`. Functionals are stored by `H`-representer, so
    /// this coincides with the `H` inner product of the coefficient vectors.
    pub fn pairing(&self, x: &StateVec, f: &DualVec) -> Result<f64, CoreError> {
        self.check_dim(x.dim())?;
        self.check_dim(f.dim())?;
        Ok(self.gram_h.bilinear(x.coeffs(), f.coeffs()))
    }

    /// Component norm `‖x‖_{X_which}` (or the full sum norm).
    pub fn x_norm(&self, x: &StateVec, part: NormPart) -> Result<f64, CoreError> {
        self.check_dim(x.dim())?;
        Ok(match part {
            NormPart::X1 => self.recipe_norm(&self.norm_x1, x.coeffs()),
            NormPart::X2 => self.recipe_norm(&self.norm_x2, x.coeffs()),
            NormPart::Full => {
                self.recipe_norm(&self.norm_x1, x.coeffs())
                    + self.recipe_norm(&self.norm_x2, x.coeffs())
            }
        })
    }

    fn recipe_norm(&self, recipe: &NormRecipe, x: &[f64]) -> f64 {
        match recipe {
            NormRecipe::Lq { q } => {
                let sum: f64 = x
                    .iter()
                    .zip(&self.weights)
                    .map(|(v, w)| w * v.abs().powf(*q))
                    .sum();
                sum.powf(1.0 / q)
            }
            NormRecipe::GradLq { q, mesh } => {
                let mut sum = 0.0;
                let n = x.len();
                for j in 0..=n {
                    let left = if j == 0 { 0.0 } else { x[j - 1] };
                    let right = if j == n { 0.0 } else { x[j] };
                    let grad = (right - left) / mesh;
                    sum += mesh * grad.abs().powf(*q);
                }
                sum.powf(1.0 / q)
            }
        }
    }

    /// Euclidean gradient of a component norm (zero at the origin, a
    /// subgradient choice). `Full` sums the two component gradients.
    pub fn x_norm_grad(&self, x: &StateVec, part: NormPart) -> Result<Vec<f64>, CoreError> {
        self.check_dim(x.dim())?;
        Ok(match part {
            NormPart::X1 => self.recipe_norm_grad(&self.norm_x1, x.coeffs()),
            NormPart::X2 => self.recipe_norm_grad(&self.norm_x2, x.coeffs()),
            NormPart::Full => {
                let mut g = self.recipe_norm_grad(&self.norm_x1, x.coeffs());
                let g2 = self.recipe_norm_grad(&self.norm_x2, x.coeffs());
                linalg::axpy(1.0, &g2, &mut g);
                g
            }
        })
    }

    /// Euclidean gradient of `x ↦ ‖x‖_{recipe}`; zero at the origin
    /// (a subgradient choice).
    fn recipe_norm_grad(&self, recipe: &NormRecipe, x: &[f64]) -> Vec<f64> {
        let norm = self.recipe_norm(recipe, x);
        let n = x.len();
        if norm <= 0.0 {
            return vec![0.0; n];
        }
        match recipe {
            NormRecipe::Lq { q } => {
                // d/dx_i (Σ w |x|^q)^{1/q} = norm^{1-q} w_i |x_i|^{q-1} sign(x_i)
                let scale = norm.powf(1.0 - q);
                x.iter()
                    .zip(&self.weights)
                    .map(|(v, w)| scale * w * v.abs().powf(q - 1.0) * v.signum())
                    .collect()
            }
            NormRecipe::GradLq { q, mesh } => {
                // dN/dx_i = norm^{1-q} (|g_i|^{q-1}sgn(g_i) - |g_{i+1}|^{q-1}sgn(g_{i+1}))
                // with g_j the forward difference over cell j.
                let scale = norm.powf(1.0 - q);
                let mut grad = vec![0.0; n];
                for j in 0..=n {
                    let left = if j == 0 { 0.0 } else { x[j - 1] };
                    let right = if j == n { 0.0 } else { x[j] };
                    let g = (right - left) / mesh;
                    let dg = scale * g.abs().powf(q - 1.0) * g.signum();
                    if j > 0 {
                        grad[j - 1] -= dg;
                    }
                    if j < n {
                        grad[j] += dg;
                    }
                }
                grad
            }
        }
    }

    /// Gram-dual norm estimate `sup_{x≠0} [x,f] / ‖x‖_part`, approximated by
    /// a fixed-iteration normalized ascent from deterministic and seeded
    /// starting points. Always a lower bound on the true supremum;
    /// deterministic for a fixed config.
    pub fn dual_norm_estimate(&self, f: &DualVec) -> Result<f64, CoreError> {
        self.dual_norm_estimate_on(f, NormPart::Full, &DualAscentConfig::default())
    }

    pub fn dual_norm_estimate_on(
        &self,
        f: &DualVec,
        part: NormPart,
        cfg: &DualAscentConfig,
    ) -> Result<f64, CoreError> {
        self.check_dim(f.dim())?;
        if f.coeffs().iter().all(|v| *v == 0.0) {
            return Ok(0.0);
        }
        let gf = self.gram_h.mul_vec(f.coeffs());

        let ratio = |x: &[f64]| -> f64 {
            let denom = match part {
                NormPart::X1 => self.recipe_norm(&self.norm_x1, x),
                NormPart::X2 => self.recipe_norm(&self.norm_x2, x),
                NormPart::Full => {
                    self.recipe_norm(&self.norm_x1, x) + self.recipe_norm(&self.norm_x2, x)
                }
            };
            if denom <= 0.0 {
                return 0.0;
            }
            linalg::dot(&gf, x) / denom
        };

        let mut starts: Vec<Vec<f64>> = Vec::new();
        // H-representer direction of f: optimal when the X norms match H.
        starts.push(gf.clone());
        starts.push(f.coeffs().to_vec());
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        for _ in 0..cfg.random_starts {
            let v: Vec<f64> = (0..self.dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            starts.push(v);
        }

        let mut best = 0.0f64;
        for start in starts {
            if start.iter().all(|v| *v == 0.0) {
                continue;
            }
            let mut x = start;
            let nrm = linalg::norm2(&x);
            if !(nrm > 0.0) {
                continue;
            }
            linalg::scale(1.0 / nrm, &mut x);
            let mut val = ratio(&x);
            let mut step = 0.5;
            for _ in 0..cfg.iterations {
                // Gradient of the ratio r(x) = <gf,x> / N(x):
                // (gf - r * dN) / N; the 1/N factor folds into the step.
                let (nval, ngrad) = match part {
                    NormPart::X1 => (
                        self.recipe_norm(&self.norm_x1, &x),
                        self.recipe_norm_grad(&self.norm_x1, &x),
                    ),
                    NormPart::X2 => (
                        self.recipe_norm(&self.norm_x2, &x),
                        self.recipe_norm_grad(&self.norm_x2, &x),
                    ),
                    NormPart::Full => {
                        let n1 = self.recipe_norm(&self.norm_x1, &x);
                        let n2 = self.recipe_norm(&self.norm_x2, &x);
                        let mut g = self.recipe_norm_grad(&self.norm_x1, &x);
                        let g2 = self.recipe_norm_grad(&self.norm_x2, &x);
                        linalg::axpy(1.0, &g2, &mut g);
                        (n1 + n2, g)
                    }
                };
                if !(nval > 0.0) {
                    break;
                }
                let r = linalg::dot(&gf, &x) / nval;
                let mut dir: Vec<f64> = gf.iter().zip(&ngrad).map(|(g, dn)| g - r * dn).collect();
                let dn = linalg::norm2(&dir);
                if dn <= 1e-15 * (1.0 + r.abs()) {
                    break;
                }
                linalg::scale(1.0 / dn, &mut dir);
                let mut trial = x.clone();
                linalg::axpy(step, &dir, &mut trial);
                let tn = linalg::norm2(&trial);
                if tn > 0.0 {
                    linalg::scale(1.0 / tn, &mut trial);
                }
                let tval = ratio(&trial);
                if tval > val {
                    x = trial;
                    val = tval;
                    step *= 1.2;
                } else {
                    step *= 0.5;
                    if step < 1e-12 {
                        break;
                    }
                }
            }
            if val > best {
                best = val;
            }
        }
        Ok(best)
    }

    /// Worst sampled defect of the continuous embedding `‖x‖_X ≥ c ‖x‖_H`
    /// (positive means violated). Deterministic in the seed; includes basis
    /// vectors besides Gaussian samples.
    pub fn embedding_defect(&self, n_samples: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst = f64::NEG_INFINITY;
        let mut probe = |coeffs: Vec<f64>| {
            let x = StateVec::new(coeffs);
            let h = self.h_norm(&x).expect("dims match");
            if h <= 0.0 {
                return;
            }
            let xn = self.x_norm(&x, NormPart::Full).expect("dims match");
            let defect = self.embed_const * h - xn;
            if defect > worst {
                worst = defect;
            }
        };
        for i in 0..self.dim {
            let mut e = vec![0.0; self.dim];
            e[i] = 1.0;
            probe(e);
        }
        for _ in 0..n_samples {
            let v: Vec<f64> = (0..self.dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            probe(v);
        }
        worst
    }
}
