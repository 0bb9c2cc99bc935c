//! Monte Carlo estimation of small-noise event probabilities and Laplace
//! functionals, with optional importance sampling by a deterministic
//! Girsanov shift.
//!
//! Replicas own independent seeded streams derived from the master seed, so
//! runs are reproducible bit-for-bit; parallel execution stores per-replica
//! results by index and reduces in a fixed order, which keeps the output
//! independent of the thread schedule.

use crate::error::CoreError;
use crate::linalg;
use crate::models::MonotoneModel;
use crate::noise::{replica_seed, sample_brownian, ControlPath, QWienerSpec};
use crate::solver::{simulate_sde, PathSample, StepConfig};
use crate::triple::{NormPart, SpaceSpec, StateVec};
use std::sync::Arc;

/// Measurable event on path space. Terminal events use the pivot norm;
/// path events use the path-space norm.
#[derive(Clone)]
pub enum PathEvent {
    AlwaysTrue,
    /// `x(T)_coord >= level`
    TerminalCoordGe { coord: usize, level: f64 },
    /// `||x(T) - target||_H <= radius`
    TerminalBallH { target: StateVec, radius: f64 },
    /// `||x(T)||_H >= level`
    TerminalNormGe { level: f64 },
    /// `||x - target||_S <= radius` in the path norm
    /// `sup_t ||.||_H + Σ_i (∫||.||_{X_i}^{q_i})^{1/q_i}`.
    PathBallS { target: Arc<PathSample>, radius: f64 },
    Custom(Arc<dyn Fn(&SpaceSpec, &PathSample) -> bool + Send + Sync>),
}

impl PathEvent {
    pub fn eval(&self, space: &SpaceSpec, path: &PathSample) -> Result<bool, CoreError> {
        Ok(match self {
            PathEvent::AlwaysTrue => true,
            PathEvent::TerminalCoordGe { coord, level } => {
                path.terminal().coeffs()[*coord] >= *level
            }
            PathEvent::TerminalBallH { target, radius } => {
                space.h_norm(&path.terminal().minus(target))? <= *radius
            }
            PathEvent::TerminalNormGe { level } => space.h_norm(path.terminal())? >= *level,
            PathEvent::PathBallS { target, radius } => {
                s_distance(space, path, target)? <= *radius
            }
            PathEvent::Custom(f) => f(space, path),
        })
    }
}

/// Path-space distance `sup_t ||.||_H + Σ_i (Σ_k Δt ||.||_{X_i}^{q_i})^{1/q_i}`.
pub fn s_distance(
    space: &SpaceSpec,
    path: &PathSample,
    target: &PathSample,
) -> Result<f64, CoreError> {
    if path.states.len() != target.states.len() {
        return Err(CoreError::InvalidArgument("path grids do not match".into()));
    }
    let mut sup = 0.0f64;
    for (a, b) in path.states.iter().zip(&target.states) {
        sup = sup.max(space.h_norm(&a.minus(b))?);
    }
    let q1 = space.q1();
    let q2 = space.q2();
    let mut s1 = 0.0;
    let mut s2 = 0.0;
    for k in 0..path.steps() {
        let dt = path.grid[k + 1] - path.grid[k];
        let d = path.states[k].minus(&target.states[k]);
        s1 += dt * space.x_norm(&d, NormPart::X1)?.powf(q1);
        s2 += dt * space.x_norm(&d, NormPart::X2)?.powf(q2);
    }
    Ok(sup + s1.powf(1.0 / q1) + s2.powf(1.0 / q2))
}

/// Bounded functional on path space for the exponential-integral mode.
#[derive(Clone)]
pub enum PathFunctional {
    Zero,
    Constant { c: f64 },
    /// `min(cap, ||x(T) - target||_H^2)`
    TerminalSqDistCapped { target: StateVec, cap: f64 },
    Custom {
        f: Arc<dyn Fn(&SpaceSpec, &PathSample) -> f64 + Send + Sync>,
        bound: f64,
    },
}

impl PathFunctional {
    pub fn bound(&self) -> f64 {
        match self {
            PathFunctional::Zero => 0.0,
            PathFunctional::Constant { c } => c.abs(),
            PathFunctional::TerminalSqDistCapped { cap, .. } => *cap,
            PathFunctional::Custom { bound, .. } => *bound,
        }
    }

    /// Value clipped to the declared bound; the flag reports clipping.
    pub fn eval(&self, space: &SpaceSpec, path: &PathSample) -> Result<(f64, bool), CoreError> {
        let raw = match self {
            PathFunctional::Zero => 0.0,
            PathFunctional::Constant { c } => *c,
            PathFunctional::TerminalSqDistCapped { target, cap } => {
                let d2 = space.h_norm_sq(&path.terminal().minus(target))?;
                d2.min(*cap)
            }
            PathFunctional::Custom { f, .. } => f(space, path),
        };
        let bound = self.bound();
        if raw.abs() > bound && bound > 0.0 {
            Ok((raw.clamp(-bound, bound), true))
        } else {
            Ok((raw, false))
        }
    }
}

#[derive(Clone)]
pub enum Estimand {
    Probability(PathEvent),
    Laplace(PathFunctional),
}

/// A full small-noise Monte Carlo experiment across a decreasing list of
/// noise levels.
#[derive(Clone)]
pub struct LdpExperiment<'m> {
    pub model: &'m dyn MonotoneModel,
    pub estimand: Estimand,
    /// Strictly decreasing noise levels in (0, 1].
    pub eps_list: Vec<f64>,
    pub n_samples: usize,
    pub master_seed: u64,
    /// Girsanov shift for importance sampling.
    pub shift: Option<ControlPath>,
    /// Use the shift only at noise levels at or below this threshold.
    pub shift_eps_max: f64,
    pub grid: Vec<f64>,
    pub step: StepConfig,
    /// Worker threads for the replica loop (<= 1 means sequential).
    pub threads: usize,
}

impl LdpExperiment<'_> {
    pub fn validate(&self) -> Result<(), CoreError> {
        if self.n_samples < 100 {
            return Err(CoreError::InvalidArgument("need n_samples >= 100".into()));
        }
        if self.eps_list.is_empty() {
            return Err(CoreError::InvalidArgument("eps_list must be non-empty".into()));
        }
        for w in self.eps_list.windows(2) {
            if !(w[1] < w[0]) {
                return Err(CoreError::InvalidArgument(
                    "eps_list must be strictly decreasing".into(),
                ));
            }
        }
        if self
            .eps_list
            .iter()
            .any(|e| !(*e > 0.0 && *e <= 1.0))
        {
            return Err(CoreError::InvalidArgument("eps values must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

/// Plain Monte Carlo estimate of an event probability.
#[derive(Clone, Copy, Debug)]
pub struct ProbEstimate {
    pub p: f64,
    pub stderr: f64,
    /// Set when no replica hit the event; `p` is 0 and the one-sided
    /// 95% style bound `3/n` applies.
    pub zero_hits: bool,
    /// Effective sample size (equals n for unweighted sampling).
    pub ess: f64,
}

/// One replica: simulate, and return the path with its log importance
/// weight (0 when no shift drives the dynamics).
fn run_replica(
    model: &dyn MonotoneModel,
    eps: f64,
    grid: &[f64],
    step: &StepConfig,
    shift: Option<&ControlPath>,
    seed: u64,
) -> Result<(PathSample, f64), CoreError> {
    let t_end = *grid.last().expect("grid non-empty");
    let steps = grid.len() - 1;
    let spec = QWienerSpec::new(model.noise_dim(), t_end, steps)?;
    let noise = sample_brownian(&spec, seed);
    let path = simulate_sde(model, eps, step, &noise, shift)?;
    let mut log_w = 0.0;
    if let Some(h) = shift {
        let mut dot_sum = 0.0;
        for k in 0..steps {
            dot_sum += linalg::dot(h.hdot_at(k), noise.increment_at(k));
        }
        log_w = -dot_sum / eps.sqrt() - h.cm_norm_sq() / (2.0 * eps);
    }
    Ok((path, log_w))
}

/// Indexed parallel map with deterministic output order.
fn parallel_map<T: Send>(
    n: usize,
    threads: usize,
    f: impl Fn(usize) -> Result<T, CoreError> + Sync,
) -> Result<Vec<T>, CoreError> {
    if threads <= 1 || n < 2 * threads {
        return (0..n).map(&f).collect();
    }
    let mut slots: Vec<Option<Result<T, CoreError>>> = Vec::with_capacity(n);
    slots.resize_with(n, || None);
    let chunk = n.div_ceil(threads);
    std::thread::scope(|scope| {
        for (w, block) in slots.chunks_mut(chunk).enumerate() {
            let f = &f;
            scope.spawn(move || {
                for (i, slot) in block.iter_mut().enumerate() {
                    *slot = Some(f(w * chunk + i));
                }
            });
        }
    });
    slots
        .into_iter()
        .map(|s| s.expect("all slots filled"))
        .collect()
}

/// Plain Monte Carlo probability of the experiment's event at one noise
/// level: binomial mean and standard error over independent replicas.
pub fn estimate_event_prob(exp: &LdpExperiment, eps: f64) -> Result<ProbEstimate, CoreError> {
    let event = match &exp.estimand {
        Estimand::Probability(e) => e,
        Estimand::Laplace(_) => {
            return Err(CoreError::InvalidArgument(
                "experiment is in Laplace mode; no event to estimate".into(),
            ))
        }
    };
    let space = exp.model.space();
    let n = exp.n_samples;
    let hits: Vec<bool> = parallel_map(n, exp.threads, |r| {
        let seed = replica_seed(exp.master_seed, r as u64);
        let (path, _) = run_replica(exp.model, eps, &exp.grid, &exp.step, None, seed)?;
        event.eval(space, &path)
    })?;
    let count = hits.iter().filter(|h| **h).count();
    let p = count as f64 / n as f64;
    let stderr = (p * (1.0 - p) / n as f64).sqrt();
    Ok(ProbEstimate { p, stderr, zero_hits: count == 0, ess: n as f64 })
}

/// Importance-sampled probability: paths are driven with the shift added to
/// the drift, each replica weighted by
/// `exp(-(1/sqrt(eps)) Σ <hdot_k, ΔW_k> - ||h||^2/(2 eps))`.
/// Weights accumulate in log space; the effective sample size is
/// `(Σ w)^2 / Σ w^2`.
pub fn estimate_event_prob_is(
    exp: &LdpExperiment,
    eps: f64,
    shift: &ControlPath,
) -> Result<ProbEstimate, CoreError> {
    let event = match &exp.estimand {
        Estimand::Probability(e) => e,
        Estimand::Laplace(_) => {
            return Err(CoreError::InvalidArgument(
                "experiment is in Laplace mode; no event to estimate".into(),
            ))
        }
    };
    let space = exp.model.space();
    let n = exp.n_samples;
    let rows: Vec<(bool, f64)> = parallel_map(n, exp.threads, |r| {
        let seed = replica_seed(exp.master_seed, r as u64);
        let (path, log_w) =
            run_replica(exp.model, eps, &exp.grid, &exp.step, Some(shift), seed)?;
        Ok((event.eval(space, &path)?, log_w))
    })?;
    let max_lw = rows
        .iter()
        .map(|(_, lw)| *lw)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut sum_w = 0.0;
    let mut sum_w2 = 0.0;
    let mut sum_zw = 0.0;
    let mut sum_zw2 = 0.0;
    let mut hit_count = 0usize;
    for (hit, lw) in &rows {
        let w = (lw - max_lw).exp();
        sum_w += w;
        sum_w2 += w * w;
        if *hit {
            hit_count += 1;
            sum_zw += w;
            sum_zw2 += w * w;
        }
    }
    let scale = max_lw.exp();
    let nf = n as f64;
    let p = scale * sum_zw / nf;
    // Sample variance of the weighted indicator, back in natural scale.
    let mean_shifted = sum_zw / nf;
    let var_shifted = (sum_zw2 / nf - mean_shifted * mean_shifted).max(0.0);
    let stderr = scale * (var_shifted / nf).sqrt();
    let ess = if sum_w2 > 0.0 { sum_w * sum_w / sum_w2 } else { 0.0 };
    Ok(ProbEstimate { p, stderr, zero_hits: hit_count == 0, ess })
}

/// Monte Carlo mean of `exp(-g/eps)` (optionally importance-sampled),
/// accumulated in log space.
#[derive(Clone, Copy, Debug)]
pub struct LaplaceEstimate {
    pub value: f64,
    pub stderr: f64,
    /// Number of replicas whose functional value exceeded the declared
    /// bound and was clipped.
    pub clipped: usize,
    pub ess: f64,
}

pub fn laplace_functional(
    exp: &LdpExperiment,
    eps: f64,
    shift: Option<&ControlPath>,
) -> Result<LaplaceEstimate, CoreError> {
    let g = match &exp.estimand {
        Estimand::Laplace(g) => g,
        Estimand::Probability(_) => {
            return Err(CoreError::InvalidArgument(
                "experiment is in probability mode; no functional to average".into(),
            ))
        }
    };
    let space = exp.model.space();
    let n = exp.n_samples;
    let rows: Vec<(f64, bool, f64)> = parallel_map(n, exp.threads, |r| {
        let seed = replica_seed(exp.master_seed, r as u64);
        let (path, log_w) = run_replica(exp.model, eps, &exp.grid, &exp.step, shift, seed)?;
        let (gv, clipped) = g.eval(space, &path)?;
        Ok((gv, clipped, log_w))
    })?;
    // log terms: -g/eps + log w
    let terms: Vec<f64> = rows.iter().map(|(gv, _, lw)| -gv / eps + lw).collect();
    let max_t = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let nf = n as f64;
    let mut sum = 0.0;
    let mut sum2 = 0.0;
    for t in &terms {
        let v = (t - max_t).exp();
        sum += v;
        sum2 += v * v;
    }
    let scale = max_t.exp();
    let mean_shifted = sum / nf;
    let var_shifted = (sum2 / nf - mean_shifted * mean_shifted).max(0.0);
    let value = scale * mean_shifted;
    let stderr = scale * (var_shifted / nf).sqrt();
    let clipped = rows.iter().filter(|(_, c, _)| *c).count();
    let mut sum_w = 0.0;
    let mut sum_w2 = 0.0;
    let max_lw = rows
        .iter()
        .map(|(_, _, lw)| *lw)
        .fold(f64::NEG_INFINITY, f64::max);
    for (_, _, lw) in &rows {
        let w = (lw - max_lw).exp();
        sum_w += w;
        sum_w2 += w * w;
    }
    let ess = if sum_w2 > 0.0 { sum_w * sum_w / sum_w2 } else { 0.0 };
    Ok(LaplaceEstimate { value, stderr, clipped, ess })
}

/// One row of the small-noise scaling curve.
#[derive(Clone, Debug)]
pub struct EpsEstimate {
    pub eps: f64,
    /// Probability or Laplace mean, per the experiment mode.
    pub estimate: f64,
    pub stderr: f64,
    /// `eps * log(estimate)`; for zero-hit probability rows this uses the
    /// one-sided bound `3/n` and `zero_hits` is set.
    pub eps_log: f64,
    /// Delta-method error bar on `eps_log` (infinite for zero hits).
    pub eps_log_stderr: f64,
    pub ess: f64,
    pub used_is: bool,
    pub zero_hits: bool,
}

#[derive(Clone, Debug)]
pub enum EpsRow {
    Ok(EpsEstimate),
    Failed { eps: f64, reason: String },
}

#[derive(Clone, Debug)]
pub struct LdpCurve {
    pub rows: Vec<EpsRow>,
}

impl LdpCurve {
    pub fn ok_rows(&self) -> impl Iterator<Item = &EpsEstimate> {
        self.rows.iter().filter_map(|r| match r {
            EpsRow::Ok(e) => Some(e),
            EpsRow::Failed { .. } => None,
        })
    }
}

/// Runs the configured estimator across the eps list, auto-selecting
/// importance sampling (with the configured shift) at noise levels at or
/// below `shift_eps_max`. Per-level failures are recorded and the sweep
/// continues.
pub fn ldp_curve(exp: &LdpExperiment) -> Result<LdpCurve, CoreError> {
    exp.validate()?;
    let mut rows = Vec::with_capacity(exp.eps_list.len());
    for (i, &eps) in exp.eps_list.iter().enumerate() {
        // Per-level master stream keeps levels independent.
        let level_seed = replica_seed(exp.master_seed, 0x10_000 + i as u64);
        let sub = LdpExperiment { master_seed: level_seed, ..exp.clone() };
        let use_is = exp.shift.is_some() && eps <= exp.shift_eps_max;
        let outcome = match &exp.estimand {
            Estimand::Probability(_) => {
                let est = if use_is {
                    estimate_event_prob_is(&sub, eps, exp.shift.as_ref().expect("use_is"))
                } else {
                    estimate_event_prob(&sub, eps)
                };
                est.map(|e| {
                    let (eps_log, eps_log_stderr) = if e.p > 0.0 {
                        (eps * e.p.ln(), eps * e.stderr / e.p)
                    } else {
                        (eps * (3.0 / exp.n_samples as f64).ln(), f64::INFINITY)
                    };
                    EpsEstimate {
                        eps,
                        estimate: e.p,
                        stderr: e.stderr,
                        eps_log,
                        eps_log_stderr,
                        ess: e.ess,
                        used_is: use_is,
                        zero_hits: e.zero_hits,
                    }
                })
            }
            Estimand::Laplace(_) => {
                let shift = if use_is { exp.shift.as_ref() } else { None };
                laplace_functional(&sub, eps, shift).map(|e| {
                    let (eps_log, eps_log_stderr) = if e.value > 0.0 {
                        (eps * e.value.ln(), eps * e.stderr / e.value)
                    } else {
                        (f64::NEG_INFINITY, f64::INFINITY)
                    };
                    EpsEstimate {
                        eps,
                        estimate: e.value,
                        stderr: e.stderr,
                        eps_log,
                        eps_log_stderr,
                        ess: e.ess,
                        used_is: use_is,
                        zero_hits: false,
                    }
                })
            }
        };
        rows.push(match outcome {
            Ok(e) => EpsRow::Ok(e),
            Err(err) => EpsRow::Failed { eps, reason: err.to_string() },
        });
    }
    Ok(LdpCurve { rows })
}
