//! Joint state/parameter ensemble filters.
//!
//! Two prediction schemes share one perturbed-observation analysis:
//!
//! * **EnMKF** propagates every member with the filtered control mean
//!   `u_{k|k}` and accounts for the control uncertainty analytically, adding
//!   `(1/M) Σ_i B_{θ_i} P^u B_{θ_i}ᵀ + W` to the state block of the sample
//!   covariance.
//! * **EnKF** (modified) draws a control `u^i ~ N(u_{k|k}, P^u)` per member and
//!   uses the sample covariance plus `W`.
//!
//! Members are stored as columns `[theta; state]` of a dense matrix. Each
//! member owns a reproducible random stream, so runs of the two filters with
//! the same seed use paired draws.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kalman::{kf_predict, kf_update, ControlFilterState, ControlModel, ControlPosterior};
use crate::linalg::{
    ensure_finite_vec, ensure_len, ensure_square, kalman_gain, sample_covariance, symmetrize,
    GaussianFactor, Matrix, Vector,
};
use crate::statespace::{
    AugmentedState, ModelOperators, ModelProvider, ParameterVector, StateVector,
};

/// Prior of one scalar parameter, expressed in physical units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParamPrior {
    Uniform {
        low: f64,
        high: f64,
    },
    /// Log-normal with the given mean and standard deviation of the variable
    /// itself (not of its logarithm).
    LogNormal {
        mean: f64,
        std: f64,
    },
    PointMass {
        value: f64,
    },
}

impl ParamPrior {
    pub fn validate(&self, log_space: bool) -> Result<()> {
        let ok = match *self {
            ParamPrior::Uniform { low, high } => {
                low.is_finite() && high.is_finite() && low < high && (!log_space || low > 0.0)
            }
            ParamPrior::LogNormal { mean, std } => mean > 0.0 && std > 0.0 && mean.is_finite(),
            ParamPrior::PointMass { value } => value.is_finite() && (!log_space || value > 0.0),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::config(format!("invalid parameter prior {self:?}")))
        }
    }

    /// Draws a value in physical units.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            ParamPrior::Uniform { low, high } => rng.random_range(low..high),
            ParamPrior::LogNormal { mean, std } => {
                let s2 = (1.0 + (std / mean).powi(2)).ln();
                let mu = mean.ln() - 0.5 * s2;
                let z: f64 = rng.sample(StandardNormal);
                (mu + s2.sqrt() * z).exp()
            }
            ParamPrior::PointMass { value } => value,
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            ParamPrior::Uniform { low, high } => 0.5 * (low + high),
            ParamPrior::LogNormal { mean, .. } => mean,
            ParamPrior::PointMass { value } => value,
        }
    }

    pub fn std(&self) -> f64 {
        match *self {
            ParamPrior::Uniform { low, high } => (high - low) / 12f64.sqrt(),
            ParamPrior::LogNormal { std, .. } => std,
            ParamPrior::PointMass { .. } => 0.0,
        }
    }
}

/// Whether the parameter block stores physical values or their logarithms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamSpace {
    Linear,
    Log,
}

impl ParamSpace {
    pub fn to_physical(self, x: f64) -> f64 {
        match self {
            ParamSpace::Linear => x,
            ParamSpace::Log => x.exp(),
        }
    }

    pub fn from_physical(self, x: f64) -> f64 {
        match self {
            ParamSpace::Linear => x,
            ParamSpace::Log => x.ln(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriorSpec {
    pub params: Vec<ParamPrior>,
    pub space: ParamSpace,
    pub state_mean: StateVector,
    /// Isotropic variance of the initial state.
    pub state_var: f64,
}

impl PriorSpec {
    pub fn validate(&self) -> Result<()> {
        let log = self.space == ParamSpace::Log;
        for p in &self.params {
            p.validate(log)?;
        }
        if !(self.state_var >= 0.0 && self.state_var.is_finite()) {
            return Err(Error::config("state prior variance must be non-negative"));
        }
        if self.state_mean.is_empty() {
            return Err(Error::config("state prior mean is empty"));
        }
        ensure_finite_vec(&self.state_mean.0, "state prior mean")
    }
}

#[derive(Debug, Clone)]
pub struct Ensemble {
    members: Matrix,
    param_dim: usize,
    space: ParamSpace,
    rngs: Vec<ChaCha8Rng>,
    control_rngs: Vec<ChaCha8Rng>,
}

/// Random stream of member `index` under `seed`: initial draws and
/// observation perturbations.
pub fn member_stream(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Sub-stream of member `index` reserved for sampled controls, so that the
/// observation perturbations of EnMKF and EnKF runs stay paired.
pub fn member_control_stream(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((1u64 << 32) | index as u64);
    rng
}

pub fn init_ensemble(prior: &PriorSpec, size: usize, seed: u64) -> Result<Ensemble> {
    if size < 2 {
        return Err(Error::config(format!(
            "ensemble size must be at least 2, got {size}"
        )));
    }
    prior.validate()?;
    let p = prior.params.len();
    let n = prior.state_mean.len();
    let sd = prior.state_var.sqrt();
    let mut members = Matrix::zeros(p + n, size);
    let mut rngs = Vec::with_capacity(size);
    for i in 0..size {
        let mut rng = member_stream(seed, i);
        for (j, pr) in prior.params.iter().enumerate() {
            members[(j, i)] = prior.space.from_physical(pr.sample(&mut rng));
        }
        for j in 0..n {
            let z: f64 = rng.sample(StandardNormal);
            members[(p + j, i)] = prior.state_mean.0[j] + sd * z;
        }
        rngs.push(rng);
    }
    Ok(Ensemble {
        members,
        param_dim: p,
        space: prior.space,
        rngs,
        control_rngs: (0..size).map(|i| member_control_stream(seed, i)).collect(),
    })
}

impl Ensemble {
    /// Builds an ensemble from explicit members (columns) and per-member
    /// streams derived from `seed`.
    pub fn from_members(
        members: Matrix,
        param_dim: usize,
        space: ParamSpace,
        seed: u64,
    ) -> Result<Self> {
        if members.ncols() < 2 {
            return Err(Error::config("ensemble size must be at least 2"));
        }
        if members.nrows() <= param_dim {
            return Err(Error::Dimension {
                context: "ensemble members (no state block)",
                expected: param_dim + 1,
                actual: members.nrows(),
            });
        }
        let size = members.ncols();
        Ok(Self {
            members,
            param_dim,
            space,
            rngs: (0..size).map(|i| member_stream(seed, i)).collect(),
            control_rngs: (0..size).map(|i| member_control_stream(seed, i)).collect(),
        })
    }

    pub fn size(&self) -> usize {
        self.members.ncols()
    }

    pub fn param_dim(&self) -> usize {
        self.param_dim
    }

    pub fn state_dim(&self) -> usize {
        self.members.nrows() - self.param_dim
    }

    pub fn space(&self) -> ParamSpace {
        self.space
    }

    pub fn members(&self) -> &Matrix {
        &self.members
    }

    pub fn rngs(&self) -> &[ChaCha8Rng] {
        &self.rngs
    }

    pub fn control_rngs(&self) -> &[ChaCha8Rng] {
        &self.control_rngs
    }

    pub fn member(&self, i: usize) -> AugmentedState {
        AugmentedState::from_vector(self.members.column(i).into_owned(), self.param_dim)
            .expect("ensemble always has a state block")
    }

    pub fn theta(&self, i: usize) -> ParameterVector {
        ParameterVector(
            self.members
                .view((0, i), (self.param_dim, 1))
                .column(0)
                .into_owned(),
        )
    }

    pub fn state(&self, i: usize) -> StateVector {
        StateVector(
            self.members
                .view((self.param_dim, i), (self.state_dim(), 1))
                .column(0)
                .into_owned(),
        )
    }

    pub fn mean(&self) -> Vector {
        self.members.column_mean()
    }

    pub fn state_mean(&self) -> Vector {
        self.mean()
            .rows(self.param_dim, self.state_dim())
            .into_owned()
    }

    /// Member parameters in physical units, one row per parameter.
    pub fn physical_params(&self) -> Matrix {
        let space = self.space;
        self.members
            .rows(0, self.param_dim)
            .map(|x| space.to_physical(x))
    }

    /// Scale applied to the observation in [`InnovationMode::ScaledByR`].
    fn innovation_scale(&self, i: usize) -> f64 {
        self.space.to_physical(self.members[(0, i)])
    }
}

/// Operators of every member for the current parameter values.
pub fn member_operators(e: &Ensemble, provider: &dyn ModelProvider) -> Result<Vec<ModelOperators>> {
    let dims = provider.dims();
    if dims.params != e.param_dim || dims.state != e.state_dim() {
        return Err(Error::Dimension {
            context: "provider vs ensemble dimensions",
            expected: e.param_dim + e.state_dim(),
            actual: dims.params + dims.state,
        });
    }
    (0..e.size())
        .map(|i| provider.operators(&e.theta(i)))
        .collect()
}

fn check_ops(e: &Ensemble, ops: &[ModelOperators], control: &ControlPosterior) -> Result<()> {
    if ops.len() != e.size() {
        return Err(Error::Dimension {
            context: "member operator count",
            expected: e.size(),
            actual: ops.len(),
        });
    }
    let l = ops[0].control_dim();
    ensure_len(&control.mean, l, "control posterior mean")?;
    ensure_square(&control.cov, l, "control posterior covariance")
}

/// EnMKF prediction: every member uses the filtered control mean.
pub fn enmkf_predict(
    e: &Ensemble,
    ops: &[ModelOperators],
    control: &ControlPosterior,
) -> Result<Ensemble> {
    check_ops(e, ops, control)?;
    let p = e.param_dim;
    let n = e.state_dim();
    let mut out = e.clone();
    for (i, op) in ops.iter().enumerate() {
        let t = e.members.view((p, i), (n, 1)).column(0).into_owned();
        let next = op.propagate(&t, &control.mean);
        out.members.view_mut((p, i), (n, 1)).copy_from(&next);
    }
    Ok(out)
}

/// EnKF prediction: member `i` draws its own control from
/// `N(u_{k|k}, P^u)` on its control stream.
pub fn enkf_predict(
    e: &Ensemble,
    ops: &[ModelOperators],
    control: &ControlPosterior,
) -> Result<Ensemble> {
    check_ops(e, ops, control)?;
    let factor = GaussianFactor::new(&control.cov, "control posterior covariance")?;
    let p = e.param_dim;
    let n = e.state_dim();
    let mut out = e.clone();
    for (i, op) in ops.iter().enumerate() {
        let u = &control.mean + factor.draw(&mut out.control_rngs[i]);
        let t = e.members.view((p, i), (n, 1)).column(0).into_owned();
        let next = op.propagate(&t, &u);
        out.members.view_mut((p, i), (n, 1)).copy_from(&next);
    }
    Ok(out)
}

/// Prediction covariance of the augmented vector.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionCovariance {
    matrix: Matrix,
    param_dim: usize,
}

impl PredictionCovariance {
    pub fn from_matrix(matrix: Matrix, param_dim: usize) -> Result<Self> {
        ensure_square(&matrix, matrix.nrows(), "prediction covariance")?;
        if matrix.nrows() <= param_dim {
            return Err(Error::Dimension {
                context: "prediction covariance (no state block)",
                expected: param_dim + 1,
                actual: matrix.nrows(),
            });
        }
        Ok(Self { matrix, param_dim })
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn param_dim(&self) -> usize {
        self.param_dim
    }

    fn add_state_block(&mut self, block: &Matrix) {
        let p = self.param_dim;
        let n = self.matrix.nrows() - p;
        let mut view = self.matrix.view_mut((p, p), (n, n));
        view += block;
    }
}

/// `(1/M) Σ_i (B_i P^u B_iᵀ + W_i)`: the state-block inflation of the EnMKF.
pub fn control_inflation(ops: &[ModelOperators], control: &ControlPosterior) -> Matrix {
    let n = ops[0].state_dim();
    let mut acc = Matrix::zeros(n, n);
    for op in ops {
        let b = op.control();
        acc += b * &control.cov * b.transpose() + op.process_noise();
    }
    acc /= ops.len() as f64;
    symmetrize(&mut acc);
    acc
}

pub fn enmkf_covariance(
    e_pred: &Ensemble,
    ops: &[ModelOperators],
    control: &ControlPosterior,
) -> Result<PredictionCovariance> {
    check_ops(e_pred, ops, control)?;
    let mut cov = PredictionCovariance {
        matrix: sample_covariance(&e_pred.members),
        param_dim: e_pred.param_dim,
    };
    cov.add_state_block(&control_inflation(ops, control));
    Ok(cov)
}

pub fn enkf_covariance(e_pred: &Ensemble, process_noise: &Matrix) -> Result<PredictionCovariance> {
    ensure_square(
        process_noise,
        e_pred.state_dim(),
        "process noise covariance",
    )?;
    let mut cov = PredictionCovariance {
        matrix: sample_covariance(&e_pred.members),
        param_dim: e_pred.param_dim,
    };
    cov.add_state_block(process_noise);
    Ok(cov)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnovationMode {
    /// `y + v^i - H T^i`.
    Plain,
    /// `R^i (y + v^i) - H T^i` where `R^i` is the first parameter in physical
    /// units. Used when the observation operator is `(1/R) H`.
    ScaledByR,
}

/// Observation perturbations in the analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Perturbation {
    /// `v^i ~ N(0, V)` drawn from each member's stream.
    Sampled,
    /// `v^i = 0`; for testing only.
    Disabled,
}

pub fn analyze(
    e_pred: &Ensemble,
    cov: &PredictionCovariance,
    y: &Vector,
    ops: &ModelOperators,
    mode: InnovationMode,
) -> Result<Ensemble> {
    analyze_with(e_pred, cov, y, ops, mode, Perturbation::Sampled)
}

/// Perturbed-observation analysis with a single gain
/// `K = P 𝓗ᵀ (𝓗 P 𝓗ᵀ + V)⁻¹`, `𝓗 = [0 H]`.
pub fn analyze_with(
    e_pred: &Ensemble,
    cov: &PredictionCovariance,
    y: &Vector,
    ops: &ModelOperators,
    mode: InnovationMode,
    perturbation: Perturbation,
) -> Result<Ensemble> {
    let p = e_pred.param_dim;
    let n = e_pred.state_dim();
    let d = p + n;
    ensure_square(cov.matrix(), d, "prediction covariance")?;
    if cov.param_dim != p {
        return Err(Error::Dimension {
            context: "prediction covariance parameter block",
            expected: p,
            actual: cov.param_dim,
        });
    }
    if ops.state_dim() != n {
        return Err(Error::Dimension {
            context: "observation operator columns",
            expected: n,
            actual: ops.state_dim(),
        });
    }
    ensure_len(y, ops.obs_dim(), "observation")?;
    ensure_finite_vec(y, "observation")?;

    let m = ops.obs_dim();
    let h = ops.observation();
    let mut obs_aug = Matrix::zeros(m, d);
    obs_aug.view_mut((0, p), (m, n)).copy_from(h);
    let mut innovation_cov =
        &obs_aug * cov.matrix() * obs_aug.transpose() + ops.observation_noise();
    symmetrize(&mut innovation_cov);
    let gain = kalman_gain(cov.matrix(), &obs_aug, &innovation_cov)?;

    let noise = match perturbation {
        Perturbation::Sampled => Some(GaussianFactor::new(
            ops.observation_noise(),
            "observation noise covariance",
        )?),
        Perturbation::Disabled => None,
    };

    let mut out = e_pred.clone();
    for i in 0..e_pred.size() {
        let mut obs = y.clone();
        if let Some(f) = &noise {
            obs += f.draw(&mut out.rngs[i]);
        }
        if mode == InnovationMode::ScaledByR {
            obs *= e_pred.innovation_scale(i);
        }
        let t = e_pred.members.view((p, i), (n, 1));
        let innovation = obs - h * t;
        let increment = &gain * innovation;
        let mut col = out.members.column_mut(i);
        col += increment;
    }
    if out.members.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("analyzed ensemble"));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterKind {
    Enmkf,
    Enkf,
}

impl std::fmt::Display for FilterKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FilterKind::Enmkf => "enmkf",
            FilterKind::Enkf => "enkf",
        })
    }
}

impl std::str::FromStr for FilterKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "enmkf" => Ok(FilterKind::Enmkf),
            "enkf" => Ok(FilterKind::Enkf),
            other => Err(Error::config(format!("unknown method `{other}`"))),
        }
    }
}

/// Per-step summary of the analyzed ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterDiagnostics {
    pub step: usize,
    /// Parameter ensemble mean in physical units.
    pub param_mean: Vector,
    /// Parameter ensemble standard deviation in physical units.
    pub param_std: Vector,
    pub state_mean: Vector,
    /// Mean of the per-member observation estimates (fluxes for the wall).
    pub obs_mean: Vector,
    /// Sample covariance of the per-member observation estimates.
    pub obs_cov: Matrix,
}

pub fn diagnostics(
    e: &Ensemble,
    h: &Matrix,
    mode: InnovationMode,
    step: usize,
) -> FilterDiagnostics {
    let size = e.size();
    let params = e.physical_params();
    let param_mean = params.column_mean();
    let param_std = if e.param_dim == 0 {
        Vector::zeros(0)
    } else {
        let cov = sample_covariance(&params);
        cov.diagonal().map(|v| v.max(0.0).sqrt())
    };
    let p = e.param_dim;
    let n = e.state_dim();
    let mut obs = Matrix::zeros(h.nrows(), size);
    for i in 0..size {
        let t = e.members.view((p, i), (n, 1));
        let mut f = h * t;
        if mode == InnovationMode::ScaledByR {
            f /= e.innovation_scale(i);
        }
        obs.column_mut(i).copy_from(&f);
    }
    FilterDiagnostics {
        step,
        param_mean,
        param_std,
        state_mean: e.state_mean(),
        obs_mean: obs.column_mean(),
        obs_cov: sample_covariance(&obs),
    }
}

#[derive(Debug, Clone)]
pub struct StepOutput {
    pub ensemble: Ensemble,
    pub control: ControlFilterState,
    pub diagnostics: FilterDiagnostics,
}

/// One assimilation cycle: control KF, prediction, covariance, analysis.
#[allow(clippy::too_many_arguments)]
pub fn step(
    kind: FilterKind,
    e: &Ensemble,
    provider: &dyn ModelProvider,
    control_state: &ControlFilterState,
    control_model: &ControlModel,
    z: &Vector,
    y: &Vector,
    mode: InnovationMode,
) -> Result<StepOutput> {
    let control_pred = kf_predict(control_state, control_model)?;
    let control = kf_update(&control_pred, z, control_model)?;
    let posterior = control.observed(control_model);

    let ops = member_operators(e, provider)?;
    let (e_pred, cov) = match kind {
        FilterKind::Enmkf => {
            let e_pred = enmkf_predict(e, &ops, &posterior)?;
            let cov = enmkf_covariance(&e_pred, &ops, &posterior)?;
            (e_pred, cov)
        }
        FilterKind::Enkf => {
            let e_pred = enkf_predict(e, &ops, &posterior)?;
            let cov = enkf_covariance(&e_pred, ops[0].process_noise())?;
            (e_pred, cov)
        }
    };
    let ensemble = analyze(&e_pred, &cov, y, &ops[0], mode)?;
    let diagnostics = diagnostics(&ensemble, ops[0].observation(), mode, control.step_index);
    Ok(StepOutput {
        ensemble,
        control,
        diagnostics,
    })
}
