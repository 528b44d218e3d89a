//! One-dimensional heat conduction through a single-layer wall.
//!
//! The wall is mapped to the unit interval, where the temperature obeys
//! `∂T/∂t = a ∂²T/∂s²` with `a = 1 / (R ρC)`. Time stepping is backward Euler
//! at the measurement cadence. The state vector holds every node including
//! both surfaces, `[T_int, T_1, ..., T_{n-1}, T_ext]`, and the two control
//! channels are the surface temperatures at the current step.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::statespace::{ModelDims, ModelOperators, ModelProvider, ParameterVector, StateVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WallConfig {
    /// Number of cells; the grid has `n_cells + 1` nodes.
    pub n_cells: usize,
    /// Seconds per step.
    pub dt: f64,
    /// Mid-wall temperature used by the initial profile, °C.
    pub tau0: f64,
    /// Isotropic variance of the initial state prior, °C².
    pub state_prior_var: f64,
    /// Flux measurement noise variances `(F_int, F_ext)`, (W/m²)².
    pub flux_noise_var: [f64; 2],
    /// Process noise `W = process_noise_var * I`.
    pub process_noise_var: f64,
    /// Physical thickness in metres. Not used by the normalized model.
    pub thickness_m: f64,
}

impl Default for WallConfig {
    fn default() -> Self {
        Self {
            n_cells: 20,
            dt: 60.0,
            tau0: 16.1,
            state_prior_var: 0.01,
            flux_noise_var: [20.0, 5.0],
            process_noise_var: 0.0,
            thickness_m: 0.215,
        }
    }
}

impl WallConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_cells < 4 {
            return Err(Error::config(format!(
                "n_cells must be at least 4, got {}",
                self.n_cells
            )));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::config("dt must be positive"));
        }
        if !self.tau0.is_finite() {
            return Err(Error::config("tau0 must be finite"));
        }
        if self.state_prior_var.is_nan() || self.state_prior_var < 0.0 {
            return Err(Error::config("state_prior_var must be non-negative"));
        }
        if !self
            .flux_noise_var
            .iter()
            .all(|v| *v > 0.0 && v.is_finite())
        {
            return Err(Error::config("flux noise variances must be positive"));
        }
        if self.process_noise_var.is_nan() || self.process_noise_var < 0.0 {
            return Err(Error::config("process_noise_var must be non-negative"));
        }
        Ok(())
    }

    pub fn nodes(&self) -> usize {
        self.n_cells + 1
    }

    pub fn spacing(&self) -> f64 {
        1.0 / self.n_cells as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WallParameters {
    /// Thermal resistance, m²K/W.
    #[serde(rename = "R")]
    pub r: f64,
    /// Heat capacity per unit area, J/m²K.
    #[serde(rename = "rhoC")]
    pub rho_c: f64,
}

impl WallParameters {
    pub fn new(r: f64, rho_c: f64) -> Result<Self> {
        if !(r > 0.0 && rho_c > 0.0 && r.is_finite() && rho_c.is_finite()) {
            return Err(Error::config(format!(
                "wall parameters must be positive, got R = {r}, rhoC = {rho_c}"
            )));
        }
        Ok(Self { r, rho_c })
    }

    /// Diffusion coefficient on the normalized domain, 1/s.
    pub fn diffusivity(&self) -> f64 {
        1.0 / (self.r * self.rho_c)
    }

    pub fn from_log(theta: &ParameterVector) -> Result<Self> {
        if theta.len() != 2 {
            return Err(Error::Dimension {
                context: "wall parameter vector",
                expected: 2,
                actual: theta.len(),
            });
        }
        let (r, rho_c) = (theta.0[0].exp(), theta.0[1].exp());
        if !(r > 0.0 && rho_c > 0.0 && r.is_finite() && rho_c.is_finite()) {
            return Err(Error::NonFinite(
                "wall parameters from log-space ensemble member",
            ));
        }
        Ok(Self { r, rho_c })
    }

    pub fn to_log(&self) -> ParameterVector {
        ParameterVector::from_slice(&[self.r.ln(), self.rho_c.ln()])
    }
}

/// Inverse of the interior backward-Euler matrix `I - λ D₂`, where `D₂` is
/// the Dirichlet second-difference matrix of size `m`.
fn implicit_inverse(m: usize, lambda: f64) -> Matrix {
    // Thomas elimination with constant coefficients; the forward sweep is
    // shared by all right-hand sides.
    let diag = 1.0 + 2.0 * lambda;
    let off = -lambda;
    let mut c_prime = vec![0.0; m];
    let mut denom = vec![0.0; m];
    denom[0] = diag;
    c_prime[0] = off / diag;
    for i in 1..m {
        denom[i] = diag - off * c_prime[i - 1];
        c_prime[i] = off / denom[i];
    }
    let mut inv = Matrix::zeros(m, m);
    let mut d = vec![0.0; m];
    for j in 0..m {
        for (i, di) in d.iter_mut().enumerate() {
            let rhs = if i == j { 1.0 } else { 0.0 };
            let prev = if i == 0 { 0.0 } else { inv[(i - 1, j)] };
            *di = (rhs - off * prev) / denom[i];
            inv[(i, j)] = *di;
        }
        for i in (0..m - 1).rev() {
            inv[(i, j)] = d[i] - c_prime[i] * inv[(i + 1, j)];
            d[i] = inv[(i, j)];
        }
    }
    inv
}

/// Dimensionless step `λ = a Δt / Δs²`.
pub fn implicit_lambda(cfg: &WallConfig, params: &WallParameters) -> f64 {
    let ds = cfg.spacing();
    params.diffusivity() * cfg.dt / (ds * ds)
}

/// Interior propagation block `(I - λ D₂)⁻¹`.
pub fn interior_transition(cfg: &WallConfig, params: &WallParameters) -> Matrix {
    implicit_inverse(cfg.n_cells - 1, implicit_lambda(cfg, params))
}

/// Flux stencil without the `1/R` factor.
pub fn flux_operator(cfg: &WallConfig) -> Matrix {
    let n = cfg.nodes();
    let scale = 1.0 / (2.0 * cfg.spacing());
    let mut h = Matrix::zeros(2, n);
    h[(0, 0)] = 3.0 * scale;
    h[(0, 1)] = -4.0 * scale;
    h[(0, 2)] = scale;
    h[(1, n - 3)] = scale;
    h[(1, n - 2)] = -4.0 * scale;
    h[(1, n - 1)] = 3.0 * scale;
    h
}

pub fn build_operators(cfg: &WallConfig, params: &WallParameters) -> Result<ModelOperators> {
    cfg.validate()?;
    let n = cfg.nodes();
    let interior = n - 2;
    let lambda = implicit_lambda(cfg, params);
    let inv = implicit_inverse(interior, lambda);

    let mut a = Matrix::zeros(n, n);
    a.view_mut((1, 1), (interior, interior)).copy_from(&inv);

    let mut b = Matrix::zeros(n, 2);
    b[(0, 0)] = 1.0;
    b[(n - 1, 1)] = 1.0;
    for i in 0..interior {
        b[(i + 1, 0)] = lambda * inv[(i, 0)];
        b[(i + 1, 1)] = lambda * inv[(i, interior - 1)];
    }

    let w = Matrix::identity(n, n) * cfg.process_noise_var;
    let v = Matrix::from_diagonal(&Vector::from_column_slice(&cfg.flux_noise_var));
    ModelOperators::new(a, b, flux_operator(cfg), w, v)
}

/// Boundary heat fluxes `(F_int, F_ext) = (1/R) H T`.
pub fn flux_observe(state: &StateVector, r: f64, cfg: &WallConfig) -> (f64, f64) {
    let f = flux_operator(cfg) * &state.0 / r;
    (f[0], f[1])
}

/// Piecewise-linear profile through `T_int0` at the interior surface, `tau0`
/// at mid-wall and `T_ext0` at the exterior surface.
pub fn initial_condition(t_int0: f64, t_ext0: f64, cfg: &WallConfig) -> StateVector {
    let n = cfg.n_cells;
    let values = Vector::from_fn(n + 1, |i, _| {
        if 2 * i <= n {
            let s = i as f64 / n as f64;
            t_int0 + 2.0 * (cfg.tau0 - t_int0) * s
        } else {
            let s = (i as f64 - n as f64 / 2.0) / n as f64;
            cfg.tau0 + 2.0 * (t_ext0 - cfg.tau0) * s
        }
    });
    StateVector(values)
}

/// Provider over log-space parameters `(log R, log ρC)`.
#[derive(Debug, Clone)]
pub struct WallProvider {
    cfg: WallConfig,
}

impl WallProvider {
    pub fn new(cfg: WallConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg })
    }

    pub fn config(&self) -> &WallConfig {
        &self.cfg
    }
}

impl ModelProvider for WallProvider {
    fn dims(&self) -> ModelDims {
        ModelDims {
            params: 2,
            state: self.cfg.nodes(),
            control: 2,
            obs: 2,
            dt: self.cfg.dt,
        }
    }

    fn operators(&self, theta: &ParameterVector) -> Result<ModelOperators> {
        let params = WallParameters::from_log(theta)?;
        build_operators(&self.cfg, &params)
    }
}
