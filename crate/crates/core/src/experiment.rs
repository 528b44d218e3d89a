//! Orchestration of filter runs on wall data: single runs, method
//! comparisons, ensemble-size studies and the stopping rule.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{generate_synthetic, load_csv, MeasurementRecord, SyntheticSpec, TruthRecord};
use crate::ensemble::{
    init_ensemble, step, Ensemble, FilterDiagnostics, FilterKind, InnovationMode, ParamPrior,
    ParamSpace, PriorSpec,
};
use crate::error::{Error, Result};
use crate::kalman::{model_from_series, ArOrder, ControlFilterState, ControlModel};
use crate::linalg::{Matrix, Vector};
use crate::wall::{initial_condition, WallConfig, WallProvider};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WallPriors {
    #[serde(rename = "R")]
    pub r: ParamPrior,
    #[serde(rename = "rhoC")]
    pub rho_c: ParamPrior,
}

impl Default for WallPriors {
    fn default() -> Self {
        Self {
            r: ParamPrior::Uniform {
                low: 0.28,
                high: 0.36,
            },
            rho_c: ParamPrior::Uniform {
                low: 301_000.0,
                high: 376_000.0,
            },
        }
    }
}

/// Process noise of the boundary-temperature model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ControlProcessNoise {
    /// `Q = lambda * diag(Var(Δz))` over the whole input series.
    FromDifferences { lambda: f64 },
    /// `Q = diag(var)`.
    Fixed { var: [f64; 2] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlNoiseConfig {
    /// Diagonal of the temperature measurement noise `C`, `(T_int, T_ext)`.
    pub measurement_var: [f64; 2],
    pub process: ControlProcessNoise,
}

impl Default for ControlNoiseConfig {
    fn default() -> Self {
        Self {
            measurement_var: [0.01, 0.01],
            process: ControlProcessNoise::FromDifferences { lambda: 1.0 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    Csv { path: PathBuf },
    Synthetic(SyntheticSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub method: FilterKind,
    pub ensemble_size: usize,
    pub seed: u64,
    pub ar_order: u8,
    pub priors: WallPriors,
    /// Filter model of the wall, including `V` and `W`.
    pub wall: WallConfig,
    pub control_noise: ControlNoiseConfig,
    pub innovation: InnovationMode,
    pub data: DataSource,
    /// Assimilate at most this many records.
    pub steps: Option<usize>,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            method: FilterKind::Enmkf,
            ensemble_size: 100,
            seed: 0,
            ar_order: 1,
            priors: WallPriors::default(),
            wall: WallConfig::default(),
            control_noise: ControlNoiseConfig::default(),
            innovation: InnovationMode::ScaledByR,
            data: DataSource::Synthetic(SyntheticSpec::default()),
            steps: None,
            output_dir: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.ensemble_size < 2 {
            return Err(Error::config(format!(
                "ensemble_size must be at least 2, got {}",
                self.ensemble_size
            )));
        }
        self.ar()?;
        self.wall.validate()?;
        self.priors.r.validate(true)?;
        self.priors.rho_c.validate(true)?;
        let c = self.control_noise.measurement_var;
        if !c.iter().all(|v| *v > 0.0 && v.is_finite()) {
            return Err(Error::config(
                "control measurement variances must be positive",
            ));
        }
        match self.control_noise.process {
            ControlProcessNoise::FromDifferences { lambda }
                if lambda >= 0.0 && lambda.is_finite() => {}
            ControlProcessNoise::Fixed { var }
                if var.iter().all(|v| *v >= 0.0 && v.is_finite()) => {}
            ref other => {
                return Err(Error::config(format!(
                    "invalid control process noise {other:?}"
                )))
            }
        }
        if self.steps == Some(0) {
            return Err(Error::config("steps must be positive"));
        }
        if let DataSource::Synthetic(spec) = &self.data {
            spec.validate()?;
        }
        Ok(())
    }

    pub fn ar(&self) -> Result<ArOrder> {
        match self.ar_order {
            1 => Ok(ArOrder::One),
            2 => Ok(ArOrder::Two),
            other => Err(Error::config(format!(
                "ar_order must be 1 or 2, got {other}"
            ))),
        }
    }

    /// Records to assimilate and, for synthetic sources, the noiseless truth.
    pub fn load_data(&self) -> Result<(Vec<MeasurementRecord>, Option<Vec<TruthRecord>>)> {
        let (mut records, mut truth) = match &self.data {
            DataSource::Csv { path } => (load_csv(path)?, None),
            DataSource::Synthetic(spec) => {
                let data = generate_synthetic(spec)?;
                (data.records, Some(data.truth))
            }
        };
        if let Some(n) = self.steps {
            records.truncate(n);
            if let Some(t) = truth.as_mut() {
                t.truncate(n);
            }
        }
        if records.is_empty() {
            return Err(Error::config("no records to assimilate"));
        }
        Ok((records, truth))
    }

    fn with_method_seed(&self, method: FilterKind, seed: u64) -> Self {
        let mut c = self.clone();
        c.method = method;
        c.seed = seed;
        c
    }
}

/// Step-by-step driver of one filter over a record stream.
#[derive(Debug, Clone)]
pub struct FilterRunner {
    method: FilterKind,
    mode: InnovationMode,
    provider: WallProvider,
    control_model: ControlModel,
    control: ControlFilterState,
    ensemble: Ensemble,
    initial_param_std: [f64; 2],
}

impl FilterRunner {
    /// Builds the ensemble and the boundary-temperature model. `calibration`
    /// supplies the initial temperatures (first record) and, when `Q` is
    /// estimated, the temperature series used for it.
    pub fn new(cfg: &RunConfig, calibration: &[MeasurementRecord]) -> Result<Self> {
        cfg.validate()?;
        let first = calibration
            .first()
            .ok_or_else(|| Error::config("calibration series is empty"))?;
        let zs: Vec<Vector> = calibration.iter().map(MeasurementRecord::control).collect();
        let c = Matrix::from_diagonal(&Vector::from_column_slice(
            &cfg.control_noise.measurement_var,
        ));
        let (q, lambda) = match cfg.control_noise.process {
            ControlProcessNoise::FromDifferences { lambda } => {
                if zs.len() < 3 {
                    return Err(Error::config(
                        "estimating Q needs at least 3 calibration records",
                    ));
                }
                (None, lambda)
            }
            ControlProcessNoise::Fixed { var } => (
                Some(Matrix::from_diagonal(&Vector::from_column_slice(&var))),
                1.0,
            ),
        };
        let control_model = model_from_series(cfg.ar()?, &zs, c, q, lambda)?;

        let provider = WallProvider::new(cfg.wall.clone())?;
        let prior = PriorSpec {
            params: vec![cfg.priors.r, cfg.priors.rho_c],
            space: ParamSpace::Log,
            state_mean: initial_condition(first.t_int, first.t_ext, &cfg.wall),
            state_var: cfg.wall.state_prior_var,
        };
        let ensemble = init_ensemble(&prior, cfg.ensemble_size, cfg.seed)?;
        let initial_param_std = param_std(&ensemble);
        Ok(Self {
            method: cfg.method,
            mode: cfg.innovation,
            provider,
            control: control_model.initial_state(),
            control_model,
            ensemble,
            initial_param_std,
        })
    }

    pub fn assimilate(&mut self, record: &MeasurementRecord) -> Result<DiagnosticsRow> {
        let k = self.control.step_index + 1;
        let out = step(
            self.method,
            &self.ensemble,
            &self.provider,
            &self.control,
            &self.control_model,
            &record.control(),
            &record.flux(),
            self.mode,
        )
        .map_err(|e| e.at_step(k))?;
        self.ensemble = out.ensemble;
        self.control = out.control;
        Ok(DiagnosticsRow::new(record.t_min, &out.diagnostics))
    }

    pub fn ensemble(&self) -> &Ensemble {
        &self.ensemble
    }

    pub fn control(&self) -> &ControlFilterState {
        &self.control
    }

    /// Parameter standard deviations `(R, ρC)` of the initial ensemble.
    pub fn initial_param_std(&self) -> [f64; 2] {
        self.initial_param_std
    }
}

fn param_std(e: &Ensemble) -> [f64; 2] {
    let p = e.physical_params();
    let m = p.ncols() as f64;
    let mut out = [0.0; 2];
    for (j, slot) in out.iter_mut().enumerate() {
        let row = p.row(j);
        let mean = row.mean();
        *slot = (row.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt();
    }
    out
}

/// One line of `diagnostics.csv`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRow {
    pub t_min: i64,
    #[serde(rename = "R_mean")]
    pub r_mean: f64,
    #[serde(rename = "R_std")]
    pub r_std: f64,
    #[serde(rename = "rhoC_mean")]
    pub rho_c_mean: f64,
    #[serde(rename = "rhoC_std")]
    pub rho_c_std: f64,
    #[serde(rename = "Fint_mean")]
    pub fint_mean: f64,
    #[serde(rename = "Fext_mean")]
    pub fext_mean: f64,
    #[serde(rename = "Fint_var")]
    pub fint_var: f64,
    #[serde(rename = "Fext_var")]
    pub fext_var: f64,
}

pub const DIAGNOSTICS_HEADER: [&str; 9] = [
    "t_min",
    "R_mean",
    "R_std",
    "rhoC_mean",
    "rhoC_std",
    "Fint_mean",
    "Fext_mean",
    "Fint_var",
    "Fext_var",
];

impl DiagnosticsRow {
    pub fn new(t_min: i64, d: &FilterDiagnostics) -> Self {
        Self {
            t_min,
            r_mean: d.param_mean[0],
            r_std: d.param_std[0],
            rho_c_mean: d.param_mean[1],
            rho_c_std: d.param_std[1],
            fint_mean: d.obs_mean[0],
            fext_mean: d.obs_mean[1],
            fint_var: d.obs_cov[(0, 0)],
            fext_var: d.obs_cov[(1, 1)],
        }
    }

    fn means(&self) -> [f64; 2] {
        [self.r_mean, self.rho_c_mean]
    }

    fn stds(&self) -> [f64; 2] {
        [self.r_std, self.rho_c_std]
    }
}

/// Assimilates `records` in order and returns one row per record.
pub fn run_series(cfg: &RunConfig, records: &[MeasurementRecord]) -> Result<Vec<DiagnosticsRow>> {
    let mut runner = FilterRunner::new(cfg, records)?;
    records.iter().map(|r| runner.assimilate(r)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub steps: usize,
    #[serde(rename = "R_mean")]
    pub r_mean: f64,
    #[serde(rename = "R_std")]
    pub r_std: f64,
    #[serde(rename = "rhoC_mean")]
    pub rho_c_mean: f64,
    #[serde(rename = "rhoC_std")]
    pub rho_c_std: f64,
    pub wall_clock_s: f64,
    pub config: RunConfig,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub rows: Vec<DiagnosticsRow>,
    pub summary: RunSummary,
}

/// Runs the configured filter and writes `diagnostics.csv` and
/// `summary.json` into `cfg.output_dir`.
pub fn run_filter(cfg: &RunConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let (records, _) = cfg.load_data()?;
    let start = Instant::now();
    let rows = run_series(cfg, &records)?;
    let last = rows
        .last()
        .copied()
        .ok_or_else(|| Error::config("no records to assimilate"))?;
    let summary = RunSummary {
        steps: rows.len(),
        r_mean: last.r_mean,
        r_std: last.r_std,
        rho_c_mean: last.rho_c_mean,
        rho_c_std: last.rho_c_std,
        wall_clock_s: start.elapsed().as_secs_f64(),
        config: cfg.clone(),
    };
    fs::create_dir_all(&cfg.output_dir)?;
    write_rows(cfg.output_dir.join("diagnostics.csv"), &rows)?;
    write_json(cfg.output_dir.join("summary.json"), &summary)?;
    Ok(RunOutput { rows, summary })
}

pub fn write_rows<T: Serialize>(path: impl AsRef<Path>, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref()).map_err(|e| csv_error(path.as_ref(), e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_error(path.as_ref(), e))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a `diagnostics.csv` file back.
pub fn read_diagnostics(path: impl AsRef<Path>) -> Result<Vec<DiagnosticsRow>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let header = r.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.iter().ne(DIAGNOSTICS_HEADER) {
        return Err(Error::Data {
            path: path.to_path_buf(),
            line: 1,
            message: format!("expected header `{}`", DIAGNOSTICS_HEADER.join(",")),
        });
    }
    r.deserialize()
        .enumerate()
        .map(|(i, row)| {
            row.map_err(|e| Error::Data {
                path: path.to_path_buf(),
                line: i + 2,
                message: e.to_string(),
            })
        })
        .collect()
}

fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::Data {
        path: path.to_path_buf(),
        line: e.position().map_or(0, |p| p.line() as usize),
        message: e.to_string(),
    }
}

/// Declares a campaign complete when the parameter means and standard
/// deviations have stabilized over a trailing window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoppingRule {
    pub rel_tol: f64,
    pub window_min: usize,
}

impl Default for StoppingRule {
    fn default() -> Self {
        Self {
            rel_tol: 1e-3,
            window_min: 500,
        }
    }
}

impl StoppingRule {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.rel_tol.is_finite()) || self.window_min < 2 {
            return Err(Error::config(format!("invalid stopping rule {self:?}")));
        }
        Ok(())
    }
}

fn relative_change(now: f64, before: f64) -> f64 {
    let diff = (now - before).abs();
    if diff == 0.0 {
        0.0
    } else {
        diff / now.abs()
    }
}

/// True when, for both parameters, the mean moved by less than `rel_tol` and
/// the standard deviation by less than `10 rel_tol` (relative to the values
/// at minute `k`) since minute `k - window_min`.
pub fn stopping_check(history: &[DiagnosticsRow], rule: &StoppingRule, k: i64) -> Result<bool> {
    rule.validate()?;
    let find = |t: i64| {
        history
            .binary_search_by_key(&t, |r| r.t_min)
            .map(|i| history[i])
            .map_err(|_| Error::config(format!("minute {t} is not in the history")))
    };
    let now = find(k)?;
    let before = find(k - rule.window_min as i64)?;
    let means = now
        .means()
        .iter()
        .zip(before.means())
        .all(|(a, b)| relative_change(*a, b) < rule.rel_tol);
    let stds = now
        .stds()
        .iter()
        .zip(before.stds())
        .all(|(a, b)| relative_change(*a, b) < 10.0 * rule.rel_tol);
    Ok(means && stds)
}

/// Evaluates the rule at every minute where the trailing window is available.
pub fn stopping_series(
    history: &[DiagnosticsRow],
    rule: &StoppingRule,
) -> Result<Vec<(i64, bool)>> {
    let first = match history.first() {
        Some(r) => r.t_min,
        None => return Ok(Vec::new()),
    };
    history
        .iter()
        .filter(|r| r.t_min - first >= rule.window_min as i64)
        .map(|r| Ok((r.t_min, stopping_check(history, rule, r.t_min)?)))
        .collect()
}

/// Final estimates of one study cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub method: FilterKind,
    #[serde(rename = "M")]
    pub m: usize,
    pub seed: u64,
    #[serde(rename = "R_mean")]
    pub r_mean: f64,
    #[serde(rename = "R_std")]
    pub r_std: f64,
    #[serde(rename = "rhoC_mean")]
    pub rho_c_mean: f64,
    #[serde(rename = "rhoC_std")]
    pub rho_c_std: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudyAggregate {
    pub method: FilterKind,
    #[serde(rename = "M")]
    pub m: usize,
    pub replicates: usize,
    #[serde(rename = "R_mae")]
    pub r_mae: f64,
    #[serde(rename = "rhoC_mae")]
    pub rho_c_mae: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceStudy {
    pub rows: Vec<StudyRow>,
    pub aggregate: Vec<StudyAggregate>,
}

impl ConvergenceStudy {
    pub fn mae(&self, method: FilterKind, m: usize) -> Option<&StudyAggregate> {
        self.aggregate
            .iter()
            .find(|a| a.method == method && a.m == m)
    }

    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        fs::create_dir_all(dir.as_ref())?;
        write_rows(dir.as_ref().join("convergence.csv"), &self.rows)?;
        write_rows(
            dir.as_ref().join("convergence_summary.csv"),
            &self.aggregate,
        )
    }
}

fn synthetic_spec(cfg: &RunConfig) -> Result<&SyntheticSpec> {
    match &cfg.data {
        DataSource::Synthetic(spec) => Ok(spec),
        DataSource::Csv { .. } => Err(Error::config(
            "this study needs a synthetic data source for the truth",
        )),
    }
}

/// Runs both methods for every ensemble size and replicate seed
/// `base.seed + r` up to minute `t_eval`, on one shared synthetic data set.
pub fn convergence_study(
    base: &RunConfig,
    sizes: &[usize],
    t_eval: i64,
    replicates: usize,
) -> Result<ConvergenceStudy> {
    let spec = synthetic_spec(base)?;
    if replicates == 0 || sizes.is_empty() {
        return Err(Error::config(
            "need at least one ensemble size and one replicate",
        ));
    }
    let (records, _) = base.load_data()?;
    let end = records.partition_point(|r| r.t_min <= t_eval);
    if end == 0 || records[end - 1].t_min != t_eval {
        return Err(Error::config(format!(
            "t_eval {t_eval} is outside the data horizon"
        )));
    }
    let records = &records[..end];
    let mut rows = Vec::new();
    for &m in sizes {
        for r in 0..replicates {
            let seed = base.seed + r as u64;
            for method in [FilterKind::Enmkf, FilterKind::Enkf] {
                let mut cfg = base.with_method_seed(method, seed);
                cfg.ensemble_size = m;
                let last = *run_series(&cfg, records)?
                    .last()
                    .expect("non-empty records");
                rows.push(StudyRow {
                    method,
                    m,
                    seed,
                    r_mean: last.r_mean,
                    r_std: last.r_std,
                    rho_c_mean: last.rho_c_mean,
                    rho_c_std: last.rho_c_std,
                });
            }
        }
    }
    let mut aggregate = Vec::new();
    for &m in sizes {
        for method in [FilterKind::Enmkf, FilterKind::Enkf] {
            let cell: Vec<&StudyRow> = rows
                .iter()
                .filter(|r| r.m == m && r.method == method)
                .collect();
            let n = cell.len() as f64;
            aggregate.push(StudyAggregate {
                method,
                m,
                replicates: cell.len(),
                r_mae: cell
                    .iter()
                    .map(|r| (r.r_mean - spec.truth.r).abs())
                    .sum::<f64>()
                    / n,
                rho_c_mae: cell
                    .iter()
                    .map(|r| (r.rho_c_mean - spec.truth.rho_c).abs())
                    .sum::<f64>()
                    / n,
            });
        }
    }
    Ok(ConvergenceStudy { rows, aggregate })
}

/// Outcome of one filter run in a paired comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub method: FilterKind,
    pub seed: u64,
    #[serde(rename = "R_bias")]
    pub r_bias: f64,
    #[serde(rename = "rhoC_bias")]
    pub rho_c_bias: f64,
    #[serde(rename = "R_std_initial")]
    pub r_std_initial: f64,
    #[serde(rename = "rhoC_std_initial")]
    pub rho_c_std_initial: f64,
    #[serde(rename = "R_std_final")]
    pub r_std_final: f64,
    #[serde(rename = "rhoC_std_final")]
    pub rho_c_std_final: f64,
    /// Some parameter's final std fell below 1% of its initial std.
    pub collapsed: bool,
    /// Variance over time of `F̂_int - F_int_true`.
    #[serde(rename = "Fint_residual_var")]
    pub fint_residual_var: f64,
    #[serde(rename = "Fext_residual_var")]
    pub fext_residual_var: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StdTrajectoryRow {
    pub method: FilterKind,
    pub seed: u64,
    pub t_min: i64,
    #[serde(rename = "R_std")]
    pub r_std: f64,
    #[serde(rename = "rhoC_std")]
    pub rho_c_std: f64,
}

/// Per-seed differences `second - first`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairDifference {
    pub seed: u64,
    #[serde(rename = "R_bias")]
    pub r_bias: f64,
    #[serde(rename = "rhoC_bias")]
    pub rho_c_bias: f64,
    #[serde(rename = "R_std_final")]
    pub r_std_final: f64,
    #[serde(rename = "rhoC_std_final")]
    pub rho_c_std_final: f64,
    #[serde(rename = "Fint_residual_var")]
    pub fint_residual_var: f64,
    #[serde(rename = "Fext_residual_var")]
    pub fext_residual_var: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: FilterKind,
    pub collapse_rate: f64,
    #[serde(rename = "median_R_std_final")]
    pub median_r_std_final: f64,
    #[serde(rename = "median_rhoC_std_final")]
    pub median_rho_c_std_final: f64,
    #[serde(rename = "mean_abs_R_bias")]
    pub mean_abs_r_bias: f64,
    #[serde(rename = "median_Fint_residual_var")]
    pub median_fint_residual_var: f64,
    #[serde(rename = "median_Fext_residual_var")]
    pub median_fext_residual_var: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub methods: [FilterKind; 2],
    pub seeds: Vec<u64>,
    pub runs: Vec<RunReport>,
    pub summaries: [MethodSummary; 2],
    pub differences: Vec<PairDifference>,
    #[serde(skip)]
    pub trajectories: Vec<StdTrajectoryRow>,
}

impl ComparisonReport {
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        write_json(dir.join("compare.json"), self)?;
        write_rows(dir.join("compare.csv"), &self.runs)?;
        write_rows(dir.join("compare_std.csv"), &self.trajectories)
    }
}

pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn residual_variance(
    estimates: impl Iterator<Item = f64>,
    truth: impl Iterator<Item = f64>,
) -> f64 {
    let res: Vec<f64> = estimates.zip(truth).map(|(e, t)| e - t).collect();
    let n = res.len() as f64;
    let mean = res.iter().sum::<f64>() / n;
    res.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

/// Paired-seed runs of two methods on one synthetic data set. Seeds are
/// `cfg.seed + r` for `r < replicates`.
pub fn compare_methods(
    cfg: &RunConfig,
    methods: [FilterKind; 2],
    replicates: usize,
) -> Result<ComparisonReport> {
    let spec = synthetic_spec(cfg)?;
    if replicates == 0 {
        return Err(Error::config("need at least one replicate"));
    }
    let (records, truth) = cfg.load_data()?;
    let truth = truth.expect("synthetic source has truth");
    if records.len() < 2 {
        return Err(Error::config("comparison needs at least 2 records"));
    }
    let seeds: Vec<u64> = (0..replicates as u64).map(|r| cfg.seed + r).collect();
    let mut runs = Vec::new();
    let mut trajectories = Vec::new();
    for &seed in &seeds {
        for method in methods {
            let c = cfg.with_method_seed(method, seed);
            let mut runner = FilterRunner::new(&c, &records)?;
            let init = runner.initial_param_std();
            let rows: Vec<DiagnosticsRow> = records
                .iter()
                .map(|r| runner.assimilate(r))
                .collect::<Result<_>>()?;
            let last = rows[rows.len() - 1];
            trajectories.extend(rows.iter().map(|r| StdTrajectoryRow {
                method,
                seed,
                t_min: r.t_min,
                r_std: r.r_std,
                rho_c_std: r.rho_c_std,
            }));
            runs.push(RunReport {
                method,
                seed,
                r_bias: last.r_mean - spec.truth.r,
                rho_c_bias: last.rho_c_mean - spec.truth.rho_c,
                r_std_initial: init[0],
                rho_c_std_initial: init[1],
                r_std_final: last.r_std,
                rho_c_std_final: last.rho_c_std,
                collapsed: last.r_std < 0.01 * init[0] || last.rho_c_std < 0.01 * init[1],
                fint_residual_var: residual_variance(
                    rows.iter().map(|r| r.fint_mean),
                    truth.iter().map(|t| t.f_int),
                ),
                fext_residual_var: residual_variance(
                    rows.iter().map(|r| r.fext_mean),
                    truth.iter().map(|t| t.f_ext),
                ),
            });
        }
    }

    let summary = |slot: usize| {
        let mine: Vec<&RunReport> = runs.iter().skip(slot).step_by(2).collect();
        let n = mine.len() as f64;
        let col =
            |f: fn(&RunReport) -> f64| median(&mut mine.iter().map(|r| f(r)).collect::<Vec<_>>());
        MethodSummary {
            method: methods[slot],
            collapse_rate: mine.iter().filter(|r| r.collapsed).count() as f64 / n,
            median_r_std_final: col(|r| r.r_std_final),
            median_rho_c_std_final: col(|r| r.rho_c_std_final),
            mean_abs_r_bias: mine.iter().map(|r| r.r_bias.abs()).sum::<f64>() / n,
            median_fint_residual_var: col(|r| r.fint_residual_var),
            median_fext_residual_var: col(|r| r.fext_residual_var),
        }
    };
    let summaries = [summary(0), summary(1)];
    let differences = runs
        .chunks(2)
        .map(|pair| {
            let (a, b) = (&pair[0], &pair[1]);
            PairDifference {
                seed: a.seed,
                r_bias: b.r_bias - a.r_bias,
                rho_c_bias: b.rho_c_bias - a.rho_c_bias,
                r_std_final: b.r_std_final - a.r_std_final,
                rho_c_std_final: b.rho_c_std_final - a.rho_c_std_final,
                fint_residual_var: b.fint_residual_var - a.fint_residual_var,
                fext_residual_var: b.fext_residual_var - a.fext_residual_var,
            }
        })
        .collect();
    Ok(ComparisonReport {
        methods,
        seeds,
        runs,
        summaries,
        differences,
        trajectories,
    })
}
