//! Task runners: each resolves the config into core calls, writes its CSV
//! artifacts plus a manifest into the output directory, and prints a short
//! summary to stdout.

use crate::config::{ConfigError, ExperimentConfig};
use crate::manifest::{fmt, write_manifest};
use fwminact_core::ldp::{
    ldp_curve, Estimand, EpsRow, LdpExperiment, PathEvent, PathFunctional,
};
use fwminact_core::minaction::{
    minimize_action, MinActionProblem, OptimizerOptions, RateTarget,
};
use fwminact_core::models::MonotoneModel;
use fwminact_core::noise::{sample_brownian, ControlPath, QWienerSpec};
use fwminact_core::solver::{energy_residual, simulate_sde, solve_skeleton, PathSample};
use fwminact_core::triple::{NormPart, StateVec};
use fwminact_core::{checks, CoreError};
use std::io::Write;
use std::path::{Path, PathBuf};

/// Task failures carrying their exit code.
#[derive(Debug)]
pub enum AppError {
    /// exit 2
    Config(String),
    /// exit 3
    Solver(String),
    /// exit 4
    Optimizer(String),
    /// exit 5
    CheckFailure(String),
}

impl AppError {
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Config(_) => 2,
            AppError::Solver(_) => 3,
            AppError::Optimizer(_) => 4,
            AppError::CheckFailure(_) => 5,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            AppError::Config(m)
            | AppError::Solver(m)
            | AppError::Optimizer(m)
            | AppError::CheckFailure(m) => m,
        }
    }
}

impl From<ConfigError> for AppError {
    fn from(e: ConfigError) -> Self {
        AppError::Config(e.0)
    }
}

pub fn run(config: &ExperimentConfig, threads: usize) -> Result<(), AppError> {
    let out_dir = PathBuf::from(&config.output.dir);
    std::fs::create_dir_all(&out_dir)
        .map_err(|e| AppError::Config(format!("output dir '{}': {e}", config.output.dir)))?;
    match config.task.kind.as_str() {
        "simulate" => run_simulate(config, &out_dir),
        "skeleton" => run_skeleton(config, &out_dir),
        "minact" => run_minact(config, &out_dir),
        "mc-ldp" => run_mc_ldp(config, &out_dir, threads),
        "check-hypotheses" => run_checks(config, &out_dir),
        other => Err(AppError::Config(format!("unknown task '{other}'"))),
    }
}

fn load_control(
    path: &str,
    grid: &[f64],
    modes: usize,
) -> Result<ControlPath, AppError> {
    let control = ControlPath::read_csv(Path::new(path))
        .map_err(|e| AppError::Config(format!("control file '{path}': {e}")))?;
    if control.steps() + 1 != grid.len() || control.modes() != modes {
        return Err(AppError::Config(format!(
            "control file '{path}' shape ({} steps, {} modes) does not match the configured grid ({} steps, {} modes)",
            control.steps(),
            control.modes(),
            grid.len() - 1,
            modes
        )));
    }
    Ok(control)
}

fn path_summary(
    model: &dyn MonotoneModel,
    path: &PathSample,
) -> Result<(f64, f64, f64), CoreError> {
    let space = model.space();
    let terminal_h = space.h_norm(path.terminal())?;
    let q1 = space.q1();
    let q2 = space.q2();
    let mut int1 = 0.0;
    let mut int2 = 0.0;
    for k in 0..path.steps() {
        let dt = path.grid[k + 1] - path.grid[k];
        int1 += dt * space.x_norm(&path.states[k], NormPart::X1)?.powf(q1);
        int2 += dt * space.x_norm(&path.states[k], NormPart::X2)?.powf(q2);
    }
    Ok((terminal_h, int1, int2))
}

fn run_simulate(config: &ExperimentConfig, out_dir: &Path) -> Result<(), AppError> {
    let model = config.build_model()?;
    let grid = config.grid();
    let step = config.step_config();
    let eps = config
        .task
        .eps
        .ok_or_else(|| AppError::Config("task.eps is required for simulate".into()))?;
    let control = match &config.task.control_csv {
        Some(p) => Some(load_control(p, &grid, model.noise_dim())?),
        None => None,
    };
    let spec = QWienerSpec::new(model.noise_dim(), config.time.t_end, config.time.steps)
        .map_err(|e| AppError::Config(e.to_string()))?;
    let noise = sample_brownian(&spec, config.noise.master_seed);
    let path = simulate_sde(model.as_ref(), eps, &step, &noise, control.as_ref())
        .map_err(|e| AppError::Solver(e.to_string()))?;
    let residual = energy_residual(model.as_ref(), &path, Some(&noise), control.as_ref())
        .map_err(|e| AppError::Solver(e.to_string()))?;
    path.write_csv(&out_dir.join("path.csv"), config.output.precision)
        .map_err(|e| AppError::Solver(e.to_string()))?;
    write_manifest(config, out_dir)?;
    let (terminal_h, int1, int2) =
        path_summary(model.as_ref(), &path).map_err(|e| AppError::Solver(e.to_string()))?;
    println!(
        "simulate: terminal_h_norm={} x1_integral={} x2_integral={} energy_residual={}",
        fmt(terminal_h, 6),
        fmt(int1, 6),
        fmt(int2, 6),
        fmt(residual, 6)
    );
    Ok(())
}

fn run_skeleton(config: &ExperimentConfig, out_dir: &Path) -> Result<(), AppError> {
    let model = config.build_model()?;
    let grid = config.grid();
    let step = config.step_config();
    let control = match &config.task.control_csv {
        Some(p) => load_control(p, &grid, model.noise_dim())?,
        None => ControlPath::zeros(grid.clone(), model.noise_dim()),
    };
    let path = solve_skeleton(model.as_ref(), &control, &step)
        .map_err(|e| AppError::Solver(e.to_string()))?;
    let residual = energy_residual(model.as_ref(), &path, None, Some(&control))
        .map_err(|e| AppError::Solver(e.to_string()))?;
    path.write_csv(&out_dir.join("path.csv"), config.output.precision)
        .map_err(|e| AppError::Solver(e.to_string()))?;
    write_manifest(config, out_dir)?;
    let (terminal_h, int1, int2) =
        path_summary(model.as_ref(), &path).map_err(|e| AppError::Solver(e.to_string()))?;
    println!(
        "skeleton: terminal_h_norm={} x1_integral={} x2_integral={} energy_residual={}",
        fmt(terminal_h, 6),
        fmt(int1, 6),
        fmt(int2, 6),
        fmt(residual, 6)
    );
    Ok(())
}

fn run_minact(config: &ExperimentConfig, out_dir: &Path) -> Result<(), AppError> {
    let model = config.build_model()?;
    let grid = config.grid();
    let step = config.step_config();
    let target = match (&config.task.target, &config.task.target_path_csv) {
        (Some(y), None) => {
            if y.len() != model.space().dim() {
                return Err(AppError::Config(format!(
                    "task.target has {} entries; space.dim is {}",
                    y.len(),
                    model.space().dim()
                )));
            }
            RateTarget::Endpoint(StateVec::new(y.clone()))
        }
        (None, Some(p)) => {
            let path = PathSample::read_csv(Path::new(p))
                .map_err(|e| AppError::Config(format!("target path '{p}': {e}")))?;
            if path.states.len() != grid.len() || path.dim() != model.space().dim() {
                return Err(AppError::Config(format!(
                    "target path '{p}' shape does not match the configured grid/space"
                )));
            }
            RateTarget::Path(path)
        }
        (None, None) => {
            return Err(AppError::Config(
                "minact needs task.target or task.target_path_csv".into(),
            ))
        }
        (Some(_), Some(_)) => {
            return Err(AppError::Config(
                "task.target and task.target_path_csv are mutually exclusive".into(),
            ))
        }
    };
    let delta = config.task.delta.unwrap_or(1e-4);
    let problem = MinActionProblem {
        model: model.as_ref(),
        target,
        penalty_delta: delta,
        grid,
        step,
    };
    let schedule = match &config.task.delta_schedule {
        Some(s) => s.clone(),
        // Default continuation: two decades above the final weight.
        None => vec![delta * 100.0, delta * 10.0, delta],
    };
    let init = match &config.task.control_csv {
        Some(p) => Some(load_control(p, &problem.grid, model.noise_dim())?),
        None => None,
    };
    let opts = OptimizerOptions {
        max_iters: config.task.max_iters.unwrap_or(500),
        grad_tol: config.task.grad_tol.unwrap_or(1e-7),
        init,
        delta_schedule: schedule,
        ball_radius: config.task.ball_radius,
        ..OptimizerOptions::default()
    };
    let est = minimize_action(&problem, &opts).map_err(|e| AppError::Optimizer(e.to_string()))?;
    let prec = config.output.precision;
    let mut rate = std::fs::File::create(out_dir.join("rate.csv"))
        .map_err(|e| AppError::Optimizer(e.to_string()))?;
    writeln!(rate, "value,terminal_gap,iterations,converged,objective,grad_norm")
        .and_then(|_| {
            writeln!(
                rate,
                "{},{},{},{},{},{}",
                fmt(est.value, prec),
                fmt(est.terminal_gap, prec),
                est.iterations,
                est.converged,
                fmt(est.objective, prec),
                fmt(est.grad_norm, prec)
            )
        })
        .map_err(|e| AppError::Optimizer(e.to_string()))?;
    est.h_opt
        .write_csv(&out_dir.join("h_opt.csv"), prec)
        .map_err(|e| AppError::Optimizer(e.to_string()))?;
    write_manifest(config, out_dir)?;
    println!(
        "minact: value={} terminal_gap={} iterations={} converged={}",
        fmt(est.value, 6),
        fmt(est.terminal_gap, 6),
        est.iterations,
        est.converged
    );
    Ok(())
}

fn run_mc_ldp(config: &ExperimentConfig, out_dir: &Path, threads: usize) -> Result<(), AppError> {
    let model = config.build_model()?;
    let grid = config.grid();
    let step = config.step_config();
    let task = &config.task;
    let dim = model.space().dim();

    let estimand = match task.mode.as_deref().unwrap_or("prob") {
        "prob" => {
            let event = match task.event.as_deref().unwrap_or("terminal_coord_ge") {
                "terminal_coord_ge" => PathEvent::TerminalCoordGe {
                    coord: task.event_coord.unwrap_or(0),
                    level: task
                        .event_level
                        .ok_or_else(|| AppError::Config("event_level required".into()))?,
                },
                "terminal_ball_h" => {
                    let target = task
                        .event_target
                        .clone()
                        .ok_or_else(|| AppError::Config("event_target required".into()))?;
                    if target.len() != dim {
                        return Err(AppError::Config("event_target dimension mismatch".into()));
                    }
                    PathEvent::TerminalBallH {
                        target: StateVec::new(target),
                        radius: task
                            .event_radius
                            .ok_or_else(|| AppError::Config("event_radius required".into()))?,
                    }
                }
                "terminal_norm_ge" => PathEvent::TerminalNormGe {
                    level: task
                        .event_level
                        .ok_or_else(|| AppError::Config("event_level required".into()))?,
                },
                other => return Err(AppError::Config(format!("task.event '{other}' unknown"))),
            };
            Estimand::Probability(event)
        }
        "laplace" => {
            let g = match task.functional.as_deref().unwrap_or("terminal_sq_dist_capped") {
                "zero" => PathFunctional::Zero,
                "constant" => PathFunctional::Constant {
                    c: task
                        .functional_constant
                        .ok_or_else(|| AppError::Config("functional_constant required".into()))?,
                },
                "terminal_sq_dist_capped" => {
                    let target = task
                        .functional_target
                        .clone()
                        .ok_or_else(|| AppError::Config("functional_target required".into()))?;
                    if target.len() != dim {
                        return Err(AppError::Config(
                            "functional_target dimension mismatch".into(),
                        ));
                    }
                    PathFunctional::TerminalSqDistCapped {
                        target: StateVec::new(target),
                        cap: task.functional_cap.unwrap_or(1.0),
                    }
                }
                other => {
                    return Err(AppError::Config(format!("task.functional '{other}' unknown")))
                }
            };
            Estimand::Laplace(g)
        }
        other => return Err(AppError::Config(format!("task.mode '{other}' unknown"))),
    };

    let shift = match &task.shift_csv {
        Some(p) => Some(load_control(p, &grid, model.noise_dim())?),
        None => None,
    };
    let exp = LdpExperiment {
        model: model.as_ref(),
        estimand,
        eps_list: task
            .eps_list
            .clone()
            .ok_or_else(|| AppError::Config("task.eps_list required for mc-ldp".into()))?,
        n_samples: task.n_samples.unwrap_or(1000),
        master_seed: config.noise.master_seed,
        shift,
        shift_eps_max: task.shift_eps_max.unwrap_or(f64::INFINITY),
        grid,
        step,
        threads,
    };
    exp.validate().map_err(|e| AppError::Config(e.to_string()))?;
    let curve = ldp_curve(&exp).map_err(|e| AppError::Solver(e.to_string()))?;

    let prec = config.output.precision;
    let mut file = std::fs::File::create(out_dir.join("ldp_curve.csv"))
        .map_err(|e| AppError::Solver(e.to_string()))?;
    writeln!(file, "eps,estimate,stderr,eps_log,ess").map_err(|e| AppError::Solver(e.to_string()))?;
    let mut ok_rows = 0usize;
    for row in &curve.rows {
        match row {
            EpsRow::Ok(e) => {
                ok_rows += 1;
                writeln!(
                    file,
                    "{},{},{},{},{}",
                    fmt(e.eps, prec),
                    fmt(e.estimate, prec),
                    fmt(e.stderr, prec),
                    fmt(e.eps_log, prec),
                    fmt(e.ess, prec)
                )
                .map_err(|e| AppError::Solver(e.to_string()))?;
            }
            EpsRow::Failed { eps, reason } => {
                eprintln!("mc-ldp: level eps={eps} failed: {reason}");
            }
        }
    }
    write_manifest(config, out_dir)?;
    if ok_rows == 0 {
        return Err(AppError::Solver("every noise level failed".into()));
    }
    for row in curve.ok_rows() {
        println!(
            "mc-ldp: eps={} estimate={} stderr={} eps_log={} ess={}{}{}",
            fmt(row.eps, 6),
            fmt(row.estimate, 6),
            fmt(row.stderr, 6),
            fmt(row.eps_log, 6),
            fmt(row.ess, 3),
            if row.used_is { " is=yes" } else { "" },
            if row.zero_hits { " zero_hits=yes" } else { "" },
        );
    }
    if let Some(reference) = task.rate_reference {
        if let Some(last) = curve.ok_rows().last() {
            let dev = (last.eps_log - reference).abs() / reference.abs().max(1e-300);
            println!(
                "mc-ldp summary: eps_log({})={} reference={} relative_deviation={}",
                fmt(last.eps, 6),
                fmt(last.eps_log, 6),
                fmt(reference, 6),
                fmt(dev, 6)
            );
        }
    }
    Ok(())
}

fn run_checks(config: &ExperimentConfig, out_dir: &Path) -> Result<(), AppError> {
    let model = config.build_model()?;
    let cfg = checks::CheckConfig {
        n_samples: config.task.n_check.unwrap_or(1000),
        radius: config.task.radius.unwrap_or(10.0),
        seed: config.noise.master_seed,
        ..checks::CheckConfig::default()
    };
    let reports =
        checks::check_all(model.as_ref(), &cfg).map_err(|e| AppError::Solver(e.to_string()))?;
    let prec = config.output.precision;
    let mut file = std::fs::File::create(out_dir.join("checks.csv"))
        .map_err(|e| AppError::Solver(e.to_string()))?;
    writeln!(file, "hypothesis,n_samples,worst_violation,pass,witness_index,fitted")
        .map_err(|e| AppError::Solver(e.to_string()))?;
    let mut failures = Vec::new();
    for report in &reports {
        let fitted = report
            .fitted
            .iter()
            .map(|(name, v)| format!("{name}={}", fmt(*v, prec)))
            .collect::<Vec<_>>()
            .join("|");
        writeln!(
            file,
            "{},{},{},{},{},{}",
            report.hypothesis.id(),
            report.n_samples,
            fmt(report.worst_violation, prec),
            report.passed(),
            report.witness.sample_index,
            fitted
        )
        .map_err(|e| AppError::Solver(e.to_string()))?;
        println!(
            "check-hypotheses: {} {} worst_violation={}",
            report.hypothesis.id(),
            if report.passed() { "PASS" } else { "FAIL" },
            fmt(report.worst_violation, 6)
        );
        if !report.passed() {
            failures.push(report.hypothesis.id());
        }
    }
    write_manifest(config, out_dir)?;
    if !failures.is_empty() {
        return Err(AppError::CheckFailure(format!(
            "hypothesis check failed: {}",
            failures.join(", ")
        )));
    }
    Ok(())
}
