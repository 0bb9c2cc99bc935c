//! Truncated Q-Wiener increments, square-integrable controls, and the
//! radius-N control ball.
//!
//! All noise quantities are expressed in an orthonormal basis of the
//! covariance-weighted noise space, so coordinate vectors carry Euclidean
//! norms and the model's diffusion operator absorbs the covariance root.

use crate::error::CoreError;
use crate::linalg;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

/// Uniform time grid on `[0, T]` with `K` steps.
pub fn uniform_grid(t_end: f64, steps: usize) -> Vec<f64> {
    assert!(steps >= 1 && t_end > 0.0);
    (0..=steps).map(|k| t_end * k as f64 / steps as f64).collect()
}

/// Truncated noise specification: retained modes, per-mode scales, horizon
/// and step count.
#[derive(Clone, Debug)]
pub struct QWienerSpec {
    pub modes: usize,
    pub mode_scales: Vec<f64>,
    pub t_end: f64,
    pub steps: usize,
}

impl QWienerSpec {
    pub fn new(modes: usize, t_end: f64, steps: usize) -> Result<Self, CoreError> {
        if modes == 0 || steps == 0 || !(t_end > 0.0) {
            return Err(CoreError::InvalidArgument(
                "need modes >= 1, steps >= 1, t_end > 0".into(),
            ));
        }
        Ok(QWienerSpec { modes, mode_scales: vec![1.0; modes], t_end, steps })
    }

    pub fn with_scales(mut self, scales: Vec<f64>) -> Result<Self, CoreError> {
        if scales.len() != self.modes {
            return Err(CoreError::DimensionMismatch { expected: self.modes, got: scales.len() });
        }
        self.mode_scales = scales;
        Ok(self)
    }

    pub fn grid(&self) -> Vec<f64> {
        uniform_grid(self.t_end, self.steps)
    }
}

/// Piecewise-constant control derivative on a time grid, valued in noise
/// coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlPath {
    grid: Vec<f64>,
    modes: usize,
    /// Row k holds the derivative on `[t_k, t_{k+1})`; K*m flat, row-major.
    hdot: Vec<f64>,
}

impl ControlPath {
    pub fn new(grid: Vec<f64>, modes: usize, hdot: Vec<f64>) -> Result<Self, CoreError> {
        if grid.len() < 2 {
            return Err(CoreError::InvalidArgument("grid needs at least 2 points".into()));
        }
        let steps = grid.len() - 1;
        if hdot.len() != steps * modes {
            return Err(CoreError::DimensionMismatch { expected: steps * modes, got: hdot.len() });
        }
        if !hdot.iter().all(|v| v.is_finite()) || !grid.iter().all(|v| v.is_finite()) {
            return Err(CoreError::InvalidArgument("control entries must be finite".into()));
        }
        Ok(ControlPath { grid, modes, hdot })
    }

    pub fn zeros(grid: Vec<f64>, modes: usize) -> Self {
        let steps = grid.len() - 1;
        ControlPath { grid, modes, hdot: vec![0.0; steps * modes] }
    }

    /// Constant-in-time control with the given coordinate vector.
    pub fn constant(grid: Vec<f64>, value: &[f64]) -> Self {
        let steps = grid.len() - 1;
        let modes = value.len();
        let mut hdot = Vec::with_capacity(steps * modes);
        for _ in 0..steps {
            hdot.extend_from_slice(value);
        }
        ControlPath { grid, modes, hdot }
    }

    pub fn from_fn(grid: Vec<f64>, modes: usize, mut f: impl FnMut(f64) -> Vec<f64>) -> Self {
        let steps = grid.len() - 1;
        let mut hdot = Vec::with_capacity(steps * modes);
        for k in 0..steps {
            let v = f(grid[k]);
            assert_eq!(v.len(), modes);
            hdot.extend_from_slice(&v);
        }
        ControlPath { grid, modes, hdot }
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn steps(&self) -> usize {
        self.grid.len() - 1
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn dt(&self, k: usize) -> f64 {
        self.grid[k + 1] - self.grid[k]
    }

    pub fn hdot_at(&self, k: usize) -> &[f64] {
        &self.hdot[k * self.modes..(k + 1) * self.modes]
    }

    pub fn hdot_at_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.hdot[k * self.modes..(k + 1) * self.modes]
    }

    pub fn hdot_flat(&self) -> &[f64] {
        &self.hdot
    }

    pub fn hdot_flat_mut(&mut self) -> &mut [f64] {
        &mut self.hdot
    }

    pub fn scaled(&self, alpha: f64) -> ControlPath {
        ControlPath {
            grid: self.grid.clone(),
            modes: self.modes,
            hdot: self.hdot.iter().map(|v| alpha * v).collect(),
        }
    }

    /// Squared Cameron-Martin norm `Σ_k |hdot_k|^2 Δt_k` (exact for
    /// piecewise-constant derivatives).
    pub fn cm_norm_sq(&self) -> f64 {
        let mut acc = 0.0;
        for k in 0..self.steps() {
            let row = self.hdot_at(k);
            acc += linalg::dot(row, row) * self.dt(k);
        }
        acc
    }

    /// Radial projection onto the ball of squared norm `n_radius`: inputs
    /// inside the ball are returned unchanged, outside ones are rescaled to
    /// the boundary. The boundary test carries a relative epsilon so the
    /// projection is exactly idempotent despite rounding.
    pub fn project_ball(&self, n_radius: f64) -> ControlPath {
        assert!(n_radius > 0.0, "ball radius must be positive");
        let sq = self.cm_norm_sq();
        if sq <= n_radius * (1.0 + 8.0 * f64::EPSILON) {
            self.clone()
        } else {
            self.scaled((n_radius / sq).sqrt())
        }
    }

    /// Writes `t, hdot_1..hdot_m` rows. The final row carries the terminal
    /// grid time with the last step's derivative repeated so the full grid
    /// round-trips; it is ignored on read.
    pub fn write_csv(&self, path: &Path, precision: usize) -> Result<(), CoreError> {
        let mut out = std::fs::File::create(path)?;
        let mut header = String::from("t");
        for j in 1..=self.modes {
            header.push_str(&format!(",hdot_{j}"));
        }
        writeln!(out, "{header}")?;
        for k in 0..=self.steps() {
            let row = self.hdot_at(k.min(self.steps() - 1));
            let mut line = format!("{:.*e}", precision, self.grid[k]);
            for v in row {
                line.push_str(&format!(",{:.*e}", precision, v));
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<ControlPath, CoreError> {
        let file = std::fs::File::open(path)?;
        let reader = BufReader::new(file);
        let mut lines = reader.lines();
        let header = lines
            .next()
            .ok_or_else(|| CoreError::Parse("empty control file".into()))??;
        let cols: Vec<&str> = header.split(',').collect();
        if cols.is_empty() || cols[0] != "t" {
            return Err(CoreError::Parse("control header must start with 't'".into()));
        }
        let modes = cols.len() - 1;
        if modes == 0 {
            return Err(CoreError::Parse("control file has no hdot columns".into()));
        }
        let mut grid = Vec::new();
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != modes + 1 {
                return Err(CoreError::Parse(format!(
                    "row {}: expected {} fields, got {}",
                    i + 2,
                    modes + 1,
                    fields.len()
                )));
            }
            let mut vals = Vec::with_capacity(modes + 1);
            for f in &fields {
                vals.push(f.trim().parse::<f64>().map_err(|e| {
                    CoreError::Parse(format!("row {}: {}", i + 2, e))
                })?);
            }
            grid.push(vals[0]);
            rows.push(vals[1..].to_vec());
        }
        if grid.len() < 2 {
            return Err(CoreError::Parse("control file needs at least 2 rows".into()));
        }
        // Last row's derivative is the terminal-time placeholder.
        rows.pop();
        let hdot: Vec<f64> = rows.into_iter().flatten().collect();
        ControlPath::new(grid, modes, hdot)
    }
}

/// A sampled increment array of the truncated Wiener process.
#[derive(Clone, Debug)]
pub struct BrownianPath {
    grid: Vec<f64>,
    modes: usize,
    /// Row k holds the increment over `[t_k, t_{k+1}]`; K*m flat, row-major.
    increments: Vec<f64>,
    pub seed: u64,
}

impl BrownianPath {
    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn steps(&self) -> usize {
        self.grid.len() - 1
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn dt(&self, k: usize) -> f64 {
        self.grid[k + 1] - self.grid[k]
    }

    pub fn increment_at(&self, k: usize) -> &[f64] {
        &self.increments[k * self.modes..(k + 1) * self.modes]
    }

    /// All-zero increments (used to run the deterministic flow through the
    /// stochastic integrator).
    pub fn zeros(grid: Vec<f64>, modes: usize) -> Self {
        let steps = grid.len() - 1;
        BrownianPath { grid, modes, increments: vec![0.0; steps * modes], seed: 0 }
    }

    /// Coarsens increments by summing pairs of adjacent steps; `steps` must
    /// be even. Refinement studies use this to drive two resolutions with
    /// the same underlying path.
    pub fn coarsen(&self) -> BrownianPath {
        assert!(self.steps() % 2 == 0, "need an even number of steps");
        let steps = self.steps() / 2;
        let grid: Vec<f64> = (0..=steps).map(|k| self.grid[2 * k]).collect();
        let mut increments = vec![0.0; steps * self.modes];
        for k in 0..steps {
            for j in 0..self.modes {
                increments[k * self.modes + j] = self.increments[2 * k * self.modes + j]
                    + self.increments[(2 * k + 1) * self.modes + j];
            }
        }
        BrownianPath { grid, modes: self.modes, increments, seed: self.seed }
    }
}

/// Draws the K*m increment array: independent centered Gaussians with
/// variance `Δt_k` per coordinate, times the per-mode scale. Deterministic
/// in the seed.
pub fn sample_brownian(spec: &QWienerSpec, seed: u64) -> BrownianPath {
    let grid = spec.grid();
    let steps = spec.steps;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut increments = vec![0.0; steps * spec.modes];
    for k in 0..steps {
        let sdt = (grid[k + 1] - grid[k]).sqrt();
        for j in 0..spec.modes {
            let g: f64 = rng.sample(StandardNormal);
            increments[k * spec.modes + j] = spec.mode_scales[j] * sdt * g;
        }
    }
    BrownianPath { grid, modes: spec.modes, increments, seed }
}

/// Derives an independent per-replica seed from a master seed (splitmix64
/// of the pair), so Monte Carlo replicas own disjoint streams.
pub fn replica_seed(master: u64, replica: u64) -> u64 {
    let mut z = master
        .wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(replica.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
