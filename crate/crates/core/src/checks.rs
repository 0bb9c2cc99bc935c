//! Randomized empirical verification of the structural hypotheses of a
//! model: hemicontinuity, weak coercivity, weak monotonicity, boundedness
//! of the operator parts, and the Lipschitz/growth bounds of the noise
//! coefficient.
//!
//! Every check reports the worst sampled defect (pass means `<= 0`), the
//! witness sample achieving it, and fitted constants: the smallest values
//! that would make the defect non-positive over the drawn sample. Reports
//! are replayable bit-identically from the stored seed.

use crate::error::CoreError;
use crate::models::{self, MonotoneModel};
use crate::triple::{DualAscentConfig, NormPart, StateVec};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Hypothesis {
    Hemicontinuity,
    Coercivity,
    Monotonicity,
    Boundedness,
    NoiseLipschitz,
}

impl Hypothesis {
    pub const ALL: [Hypothesis; 5] = [
        Hypothesis::Hemicontinuity,
        Hypothesis::Coercivity,
        Hypothesis::Monotonicity,
        Hypothesis::Boundedness,
        Hypothesis::NoiseLipschitz,
    ];

    pub fn id(&self) -> &'static str {
        match self {
            Hypothesis::Hemicontinuity => "hemicontinuity",
            Hypothesis::Coercivity => "coercivity",
            Hypothesis::Monotonicity => "monotonicity",
            Hypothesis::Boundedness => "boundedness",
            Hypothesis::NoiseLipschitz => "noise_lipschitz",
        }
    }
}

/// Sampling and tolerance knobs shared by all checks.
#[derive(Clone, Copy, Debug)]
pub struct CheckConfig {
    pub n_samples: usize,
    /// Target pivot-space radius of the Gaussian cloud.
    pub radius: f64,
    pub seed: u64,
    /// Hemicontinuity refinement levels: jumps are measured on dyadic grids
    /// `2^coarse .. 2^fine` and expected to shrink like `ratio` per level.
    pub hemi_level_coarse: u32,
    pub hemi_level_fine: u32,
    pub hemi_ratio: f64,
    /// Absolute round-off allowance for the hemicontinuity defect, scaled
    /// by the sampled value range.
    pub hemi_atol: f64,
}

impl Default for CheckConfig {
    fn default() -> Self {
        CheckConfig {
            n_samples: 1000,
            radius: 10.0,
            seed: 0xc0ffee,
            hemi_level_coarse: 4,
            hemi_level_fine: 9,
            hemi_ratio: std::f64::consts::FRAC_1_SQRT_2,
            hemi_atol: 1e-9,
        }
    }
}

/// The sample achieving the worst defect, replayable from the seed.
#[derive(Clone, Debug)]
pub struct Witness {
    pub sample_index: usize,
    pub t: f64,
    pub x: StateVec,
    /// Second state for pairwise checks.
    pub y: Option<StateVec>,
}

#[derive(Clone, Debug)]
pub struct CheckReport {
    pub hypothesis: Hypothesis,
    pub n_samples: usize,
    /// Max over samples of the defect; `<= 0` means the hypothesis held on
    /// every sample with the declared constants.
    pub worst_violation: f64,
    pub witness: Witness,
    /// `(name, value)` pairs of the smallest constants that cover the drawn
    /// sample.
    pub fitted: Vec<(&'static str, f64)>,
    pub seed: u64,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.worst_violation <= 0.0
    }
}

/// Deterministic sample stream: zero, the scaled basis vectors, then a
/// Gaussian cloud with pivot-space radius about `radius`.
struct Sampler {
    dim: usize,
    radius: f64,
    rng: ChaCha8Rng,
    emitted: usize,
}

impl Sampler {
    fn new(dim: usize, radius: f64, seed: u64) -> Self {
        Sampler { dim, radius, rng: ChaCha8Rng::seed_from_u64(seed), emitted: 0 }
    }

    fn next_state(&mut self) -> StateVec {
        let idx = self.emitted;
        self.emitted += 1;
        if idx == 0 {
            return StateVec::zeros(self.dim);
        }
        if idx <= self.dim {
            let mut e = vec![0.0; self.dim];
            e[idx - 1] = self.radius / (self.dim as f64).sqrt();
            return StateVec::new(e);
        }
        let scale = self.radius / (self.dim as f64).sqrt();
        StateVec::new(
            (0..self.dim)
                .map(|_| scale * self.rng.sample::<f64, _>(StandardNormal))
                .collect(),
        )
    }
}

/// Runs one hypothesis check.
pub fn check_hypothesis(
    model: &dyn MonotoneModel,
    hypothesis: Hypothesis,
    cfg: &CheckConfig,
) -> Result<CheckReport, CoreError> {
    if cfg.n_samples == 0 {
        return Err(CoreError::InvalidArgument("need n_samples >= 1".into()));
    }
    match hypothesis {
        Hypothesis::Hemicontinuity => check_hemicontinuity(model, cfg),
        Hypothesis::Coercivity => check_coercivity(model, cfg),
        Hypothesis::Monotonicity => check_monotonicity(model, cfg),
        Hypothesis::Boundedness => check_boundedness(model, cfg),
        Hypothesis::NoiseLipschitz => check_noise_lipschitz(model, cfg),
    }
}

/// Runs all five checks with the same config.
pub fn check_all(
    model: &dyn MonotoneModel,
    cfg: &CheckConfig,
) -> Result<Vec<CheckReport>, CoreError> {
    Hypothesis::ALL
        .iter()
        .map(|h| check_hypothesis(model, *h, cfg))
        .collect()
}

/// Hemicontinuity: for sampled (t, x, y, z), the scalar map
/// `e ↦ [x, A(t, y + e z)]` on [0,1] is probed on dyadic grids. A continuous
/// map's maximal jump shrinks by about `hemi_ratio` per refinement level;
/// the defect is the finest-grid jump minus the jump the coarse grid
/// predicts under that ratio (plus a range-scaled round-off allowance).
fn check_hemicontinuity(
    model: &dyn MonotoneModel,
    cfg: &CheckConfig,
) -> Result<CheckReport, CoreError> {
    let space = model.space();
    let mut sampler = Sampler::new(space.dim(), cfg.radius, cfg.seed);
    let mut worst = f64::NEG_INFINITY;
    let mut witness = None;
    let mut worst_ratio = 0.0f64;
    let levels = cfg.hemi_level_fine.saturating_sub(cfg.hemi_level_coarse);
    if levels == 0 {
        return Err(CoreError::InvalidArgument(
            "hemi_level_fine must exceed hemi_level_coarse".into(),
        ));
    }

    for idx in 0..cfg.n_samples {
        let x = sampler.next_state();
        let y = sampler.next_state();
        let z = sampler.next_state();
        let t = 0.0;

        let eval = |e: f64| -> Result<f64, CoreError> {
            let mut point = y.clone();
            point.add_scaled(e, &z);
            let a = models::apply_a(model, t, &point)?;
            space.pairing(&x, &a)
        };

        // Evaluate once on the finest grid; coarser grids are subsets.
        let fine_n = 1usize << cfg.hemi_level_fine;
        let mut values = Vec::with_capacity(fine_n + 1);
        for i in 0..=fine_n {
            values.push(eval(i as f64 / fine_n as f64)?);
        }
        let max_jump = |stride: usize| -> f64 {
            let mut m: f64 = 0.0;
            let mut i = 0;
            while i + stride <= fine_n {
                m = m.max((values[i + stride] - values[i]).abs());
                i += stride;
            }
            m
        };
        let coarse_stride = 1usize << (cfg.hemi_level_fine - cfg.hemi_level_coarse);
        let j_coarse = max_jump(coarse_stride);
        let j_fine = max_jump(1);
        let range = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let range = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - range;
        let predicted = j_coarse * cfg.hemi_ratio.powi(levels as i32);
        let defect = j_fine - predicted - cfg.hemi_atol * (1.0 + range);
        if j_coarse > 0.0 {
            worst_ratio = worst_ratio.max((j_fine / j_coarse).powf(1.0 / levels as f64));
        }
        if defect > worst {
            worst = defect;
            witness = Some(Witness { sample_index: idx, t, x: x.clone(), y: Some(y.clone()) });
        }
    }
    Ok(CheckReport {
        hypothesis: Hypothesis::Hemicontinuity,
        n_samples: cfg.n_samples,
        worst_violation: worst,
        witness: witness.expect("n_samples >= 1"),
        fitted: vec![("halving_ratio", worst_ratio)],
        seed: cfg.seed,
    })
}

/// Coercivity: defect of
/// `[x, A(t,x)] + l1 ||x||_X1^q1 + l2 ||x||_X2^q2 - l3 (||x||_H^2 + 1) <= 0`.
fn check_coercivity(model: &dyn MonotoneModel, cfg: &CheckConfig) -> Result<CheckReport, CoreError> {
    let space = model.space();
    let c = model.constants();
    let mut sampler = Sampler::new(space.dim(), cfg.radius, cfg.seed);
    let mut worst = f64::NEG_INFINITY;
    let mut witness = None;
    let mut lambda3_fit = 0.0f64;
    for idx in 0..cfg.n_samples {
        let x = sampler.next_state();
        let a = models::apply_a(model, 0.0, &x)?;
        let pair = space.pairing(&x, &a)?;
        let n1 = space.x_norm(&x, NormPart::X1)?;
        let n2 = space.x_norm(&x, NormPart::X2)?;
        let h2 = space.h_norm_sq(&x)?;
        let defect =
            pair + c.lambda1 * n1.powf(c.q1) + c.lambda2 * n2.powf(c.q2) - c.lambda3 * (h2 + 1.0);
        lambda3_fit = lambda3_fit
            .max((pair + c.lambda1 * n1.powf(c.q1) + c.lambda2 * n2.powf(c.q2)) / (h2 + 1.0));
        if defect > worst {
            worst = defect;
            witness = Some(Witness { sample_index: idx, t: 0.0, x: x.clone(), y: None });
        }
    }
    Ok(CheckReport {
        hypothesis: Hypothesis::Coercivity,
        n_samples: cfg.n_samples,
        worst_violation: worst,
        witness: witness.expect("n_samples >= 1"),
        fitted: vec![("lambda3_fit", lambda3_fit)],
        seed: cfg.seed,
    })
}

/// Monotonicity: defect of
/// `[x-y, A(x)-A(y)] + l1' ||x-y||_X1^q1 + l2' ||x-y||_X2^q2 - l0 ||x-y||_H^2 <= 0`
/// on sampled pairs.
fn check_monotonicity(
    model: &dyn MonotoneModel,
    cfg: &CheckConfig,
) -> Result<CheckReport, CoreError> {
    let space = model.space();
    let c = model.constants();
    let mut sampler = Sampler::new(space.dim(), cfg.radius, cfg.seed);
    let mut worst = f64::NEG_INFINITY;
    let mut witness = None;
    let mut lambda0_fit = 0.0f64;
    for idx in 0..cfg.n_samples {
        let x = sampler.next_state();
        let y = sampler.next_state();
        let mut da = models::apply_a(model, 0.0, &x)?;
        da.add_scaled(-1.0, &models::apply_a(model, 0.0, &y)?);
        let diff = x.minus(&y);
        let pair = space.pairing(&diff, &da)?;
        let n1 = space.x_norm(&diff, NormPart::X1)?;
        let n2 = space.x_norm(&diff, NormPart::X2)?;
        let h2 = space.h_norm_sq(&diff)?;
        let defect = pair + c.lambda1_mono * n1.powf(c.q1) + c.lambda2_mono * n2.powf(c.q2)
            - c.lambda0 * h2;
        if h2 > 0.0 {
            lambda0_fit = lambda0_fit.max(
                (pair + c.lambda1_mono * n1.powf(c.q1) + c.lambda2_mono * n2.powf(c.q2)) / h2,
            );
        }
        if defect > worst {
            worst = defect;
            witness = Some(Witness { sample_index: idx, t: 0.0, x: x.clone(), y: Some(y.clone()) });
        }
    }
    Ok(CheckReport {
        hypothesis: Hypothesis::Monotonicity,
        n_samples: cfg.n_samples,
        worst_violation: worst,
        witness: witness.expect("n_samples >= 1"),
        fitted: vec![("lambda0_fit", lambda0_fit)],
        seed: cfg.seed,
    })
}

/// Boundedness: per part i, defect of
/// `||A_i(t,x)||_{X_i*,est} - c_ai (||x||_{X_i}^{q_i - 1} + 1) <= 0`,
/// with the dual norm approximated by the fixed-iteration ascent (a lower
/// bound on the true dual norm).
fn check_boundedness(
    model: &dyn MonotoneModel,
    cfg: &CheckConfig,
) -> Result<CheckReport, CoreError> {
    let space = model.space();
    let c = model.constants();
    let mut sampler = Sampler::new(space.dim(), cfg.radius, cfg.seed);
    let ascent = DualAscentConfig::default();
    let mut worst = f64::NEG_INFINITY;
    let mut witness = None;
    let mut c1_fit = 0.0f64;
    let mut c2_fit = 0.0f64;
    for idx in 0..cfg.n_samples {
        let x = sampler.next_state();
        let a1 = model.apply_a1(0.0, &x);
        let a2 = model.apply_a2(0.0, &x);
        if !a1.all_finite() || !a2.all_finite() {
            return Err(CoreError::NumericRange {
                context: format!("boundedness sample {idx}"),
                norm: space.h_norm(&x)?,
            });
        }
        let est1 = space.dual_norm_estimate_on(&a1, NormPart::X1, &ascent)?;
        let est2 = space.dual_norm_estimate_on(&a2, NormPart::X2, &ascent)?;
        let n1 = space.x_norm(&x, NormPart::X1)?;
        let n2 = space.x_norm(&x, NormPart::X2)?;
        let cap1 = n1.powf(c.q1 - 1.0) + 1.0;
        let cap2 = n2.powf(c.q2 - 1.0) + 1.0;
        let defect = (est1 - c.c_a1 * cap1).max(est2 - c.c_a2 * cap2);
        c1_fit = c1_fit.max(est1 / cap1);
        c2_fit = c2_fit.max(est2 / cap2);
        if defect > worst {
            worst = defect;
            witness = Some(Witness { sample_index: idx, t: 0.0, x: x.clone(), y: None });
        }
    }
    Ok(CheckReport {
        hypothesis: Hypothesis::Boundedness,
        n_samples: cfg.n_samples,
        worst_violation: worst,
        witness: witness.expect("n_samples >= 1"),
        fitted: vec![("c_a1_fit", c1_fit), ("c_a2_fit", c2_fit)],
        seed: cfg.seed,
    })
}

/// Noise bounds: Lipschitz defect `||B(x)-B(y)||_HS - beta1 ||x-y||_H` on
/// pairs and growth defect `||B(x)||_HS - beta1 (1 + ||x||_H)`; the HS norms
/// come from mode sums against coordinate directions.
fn check_noise_lipschitz(
    model: &dyn MonotoneModel,
    cfg: &CheckConfig,
) -> Result<CheckReport, CoreError> {
    let space = model.space();
    let c = model.constants();
    let m = model.noise_dim();
    let mut sampler = Sampler::new(space.dim(), cfg.radius, cfg.seed);
    let mut worst = f64::NEG_INFINITY;
    let mut witness = None;
    let mut beta_fit = 0.0f64;

    let hs_diff = |x: &StateVec, y: &StateVec| -> Result<f64, CoreError> {
        let mut acc = 0.0;
        let mut e = vec![0.0; m];
        for j in 0..m {
            e[j] = 1.0;
            let bx = models::apply_b_vec(model, 0.0, x, &e)?;
            let by = models::apply_b_vec(model, 0.0, y, &e)?;
            acc += space.h_norm_sq(&bx.minus(&by))?;
            e[j] = 0.0;
        }
        Ok(acc.sqrt())
    };

    for idx in 0..cfg.n_samples {
        let x = sampler.next_state();
        let y = sampler.next_state();
        let hs_x = model.b_hs_norm_sq(0.0, &x).sqrt();
        let hx = space.h_norm(&x)?;
        let growth_defect = hs_x - c.beta1 * (1.0 + hx);
        beta_fit = beta_fit.max(hs_x / (1.0 + hx));
        let dxy = space.h_norm(&x.minus(&y))?;
        let lip = hs_diff(&x, &y)?;
        let lip_defect = if dxy > 0.0 {
            beta_fit = beta_fit.max(lip / dxy);
            lip - c.beta1 * dxy
        } else {
            f64::NEG_INFINITY
        };
        let defect = growth_defect.max(lip_defect);
        if defect > worst {
            worst = defect;
            witness = Some(Witness { sample_index: idx, t: 0.0, x: x.clone(), y: Some(y.clone()) });
        }
    }
    Ok(CheckReport {
        hypothesis: Hypothesis::NoiseLipschitz,
        n_samples: cfg.n_samples,
        worst_violation: worst,
        witness: witness.expect("n_samples >= 1"),
        fitted: vec![("beta1_fit", beta_fit)],
        seed: cfg.seed,
    })
}
