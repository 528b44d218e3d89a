//! Measurement series: CSV ingestion, synthetic campaigns and noise
//! estimation.
//!
//! CSV files carry one record per minute with the exact header
//! `t_min,T_int,T_ext,F_int,F_ext`. Synthetic campaigns also produce a truth
//! file with header `t_min,T_int_true,T_ext_true,F_int_true,F_ext_true`.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::statespace::StateVector;
use crate::wall::{build_operators, flux_observe, initial_condition, WallConfig, WallParameters};

pub const MEASUREMENT_HEADER: [&str; 5] = ["t_min", "T_int", "T_ext", "F_int", "F_ext"];
pub const TRUTH_HEADER: [&str; 5] = [
    "t_min",
    "T_int_true",
    "T_ext_true",
    "F_int_true",
    "F_ext_true",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub t_min: i64,
    #[serde(rename = "T_int")]
    pub t_int: f64,
    #[serde(rename = "T_ext")]
    pub t_ext: f64,
    #[serde(rename = "F_int")]
    pub f_int: f64,
    #[serde(rename = "F_ext")]
    pub f_ext: f64,
}

impl MeasurementRecord {
    /// Boundary temperatures `(T_int, T_ext)`.
    pub fn control(&self) -> Vector {
        Vector::from_column_slice(&[self.t_int, self.t_ext])
    }

    /// Heat fluxes `(F_int, F_ext)`.
    pub fn flux(&self) -> Vector {
        Vector::from_column_slice(&[self.f_int, self.f_ext])
    }

    fn is_finite(&self) -> bool {
        [self.t_int, self.t_ext, self.f_int, self.f_ext]
            .iter()
            .all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub t_min: i64,
    #[serde(rename = "T_int_true")]
    pub t_int: f64,
    #[serde(rename = "T_ext_true")]
    pub t_ext: f64,
    #[serde(rename = "F_int_true")]
    pub f_int: f64,
    #[serde(rename = "F_ext_true")]
    pub f_ext: f64,
}

fn data_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Data {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Reads and validates a measurement series.
pub fn load_csv(path: impl AsRef<Path>) -> Result<Vec<MeasurementRecord>> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| data_error(path, 0, e.to_string()))?;
    let header = reader
        .headers()
        .map_err(|e| data_error(path, 1, e.to_string()))?
        .clone();
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    for expected in MEASUREMENT_HEADER {
        if !names.contains(&expected) {
            return Err(data_error(path, 1, format!("missing column `{expected}`")));
        }
    }
    if names != MEASUREMENT_HEADER {
        return Err(data_error(
            path,
            1,
            format!(
                "header must be `{}`, got `{}`",
                MEASUREMENT_HEADER.join(","),
                names.join(",")
            ),
        ));
    }

    let mut out: Vec<MeasurementRecord> = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            data_error(path, line, e.to_string())
        })?;
        let line = row.position().map(|p| p.line() as usize).unwrap_or(0);
        let rec: MeasurementRecord = row
            .deserialize(Some(&header))
            .map_err(|e| data_error(path, line, format!("non-numeric cell: {e}")))?;
        if !rec.is_finite() {
            return Err(data_error(path, line, "non-finite value"));
        }
        if let Some(prev) = out.last() {
            if rec.t_min <= prev.t_min {
                return Err(data_error(
                    path,
                    line,
                    format!("t_min not increasing ({} after {})", rec.t_min, prev.t_min),
                ));
            }
            if rec.t_min != prev.t_min + 1 {
                return Err(data_error(
                    path,
                    line,
                    format!(
                        "gap in series: t_min jumps from {} to {}",
                        prev.t_min, rec.t_min
                    ),
                ));
            }
        }
        out.push(rec);
    }
    if out.is_empty() {
        return Err(data_error(path, 1, "no records"));
    }
    Ok(out)
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut writer =
        csv::Writer::from_path(path).map_err(|e| data_error(path, 0, e.to_string()))?;
    for r in rows {
        writer
            .serialize(r)
            .map_err(|e| data_error(path, 0, e.to_string()))?;
    }
    writer.flush()?;
    Ok(())
}

pub fn write_csv(path: impl AsRef<Path>, records: &[MeasurementRecord]) -> Result<()> {
    write_rows(path.as_ref(), records)
}

pub fn write_truth_csv(path: impl AsRef<Path>, truth: &[TruthRecord]) -> Result<()> {
    write_rows(path.as_ref(), truth)
}

/// `measurements.csv` -> `measurements_truth.csv`.
pub fn truth_path(path: &Path) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}_truth.csv"))
}

/// Noiseless boundary temperature as a function of time in minutes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoundaryProfile {
    Constant {
        value: f64,
    },
    Sinusoid {
        mean: f64,
        amplitude: f64,
        period_min: f64,
        phase: f64,
    },
    Sum {
        terms: Vec<BoundaryProfile>,
    },
}

impl BoundaryProfile {
    pub fn value(&self, t_min: f64) -> f64 {
        match self {
            BoundaryProfile::Constant { value } => *value,
            BoundaryProfile::Sinusoid {
                mean,
                amplitude,
                period_min,
                phase,
            } => mean + amplitude * (2.0 * std::f64::consts::PI * t_min / period_min + phase).sin(),
            BoundaryProfile::Sum { terms } => terms.iter().map(|p| p.value(t_min)).sum(),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            BoundaryProfile::Constant { value } if value.is_finite() => Ok(()),
            BoundaryProfile::Sinusoid { period_min, .. } if *period_min > 0.0 => Ok(()),
            BoundaryProfile::Sum { terms } => terms.iter().try_for_each(|t| t.validate()),
            other => Err(Error::config(format!("invalid boundary profile {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub var_t: f64,
    pub var_fint: f64,
    pub var_fext: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            var_t: 0.01,
            var_fint: 20.0,
            var_fext: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub truth: WallParameters,
    pub horizon_min: usize,
    pub t_int: BoundaryProfile,
    pub t_ext: BoundaryProfile,
    pub noise: NoiseSpec,
    pub seed: u64,
    pub wall: WallConfig,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            truth: WallParameters {
                r: 0.3106,
                rho_c: 3.2e5,
            },
            horizon_min: 3000,
            t_int: BoundaryProfile::Sinusoid {
                mean: 25.0,
                amplitude: 1.5,
                period_min: 1440.0,
                phase: 0.0,
            },
            t_ext: BoundaryProfile::Sinusoid {
                mean: 10.0,
                amplitude: 4.0,
                period_min: 1440.0,
                phase: std::f64::consts::FRAC_PI_3,
            },
            noise: NoiseSpec::default(),
            seed: 0,
            wall: WallConfig::default(),
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        WallParameters::new(self.truth.r, self.truth.rho_c)?;
        self.wall.validate()?;
        if self.horizon_min < 10 {
            return Err(Error::config(
                "synthetic horizon must be at least 10 minutes",
            ));
        }
        let n = &self.noise;
        if ![n.var_t, n.var_fint, n.var_fext]
            .iter()
            .all(|v| *v >= 0.0 && v.is_finite())
        {
            return Err(Error::config("noise variances must be non-negative"));
        }
        self.t_int.validate()?;
        self.t_ext.validate()
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    /// Noisy records for minutes `1..=horizon`.
    pub records: Vec<MeasurementRecord>,
    /// Noiseless values at the same minutes.
    pub truth: Vec<TruthRecord>,
    /// Noiseless states for minutes `0..=horizon`.
    pub states: Vec<StateVector>,
}

/// Forward-simulates the wall under noiseless boundary profiles and perturbs
/// temperatures and fluxes with independent Gaussian noise.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let ops = build_operators(&spec.wall, &spec.truth)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let sd = [
        spec.noise.var_t.sqrt(),
        spec.noise.var_t.sqrt(),
        spec.noise.var_fint.sqrt(),
        spec.noise.var_fext.sqrt(),
    ];

    let mut state = initial_condition(spec.t_int.value(0.0), spec.t_ext.value(0.0), &spec.wall);
    let mut states = Vec::with_capacity(spec.horizon_min + 1);
    states.push(state.clone());
    let mut records = Vec::with_capacity(spec.horizon_min);
    let mut truth = Vec::with_capacity(spec.horizon_min);
    for k in 1..=spec.horizon_min {
        let t = k as f64;
        let u = Vector::from_column_slice(&[spec.t_int.value(t), spec.t_ext.value(t)]);
        state = StateVector(ops.propagate(&state.0, &u));
        let (f_int, f_ext) = flux_observe(&state, spec.truth.r, &spec.wall);
        let clean = TruthRecord {
            t_min: k as i64,
            t_int: u[0],
            t_ext: u[1],
            f_int,
            f_ext,
        };
        let mut noise = [0.0; 4];
        for (slot, s) in noise.iter_mut().zip(sd) {
            let z: f64 = rng.sample(StandardNormal);
            *slot = if s > 0.0 { s * z } else { 0.0 };
        }
        records.push(MeasurementRecord {
            t_min: clean.t_min,
            t_int: clean.t_int + noise[0],
            t_ext: clean.t_ext + noise[1],
            f_int: clean.f_int + noise[2],
            f_ext: clean.f_ext + noise[3],
        });
        truth.push(clean);
        states.push(state.clone());
    }
    Ok(SyntheticData {
        records,
        truth,
        states,
    })
}

/// Noise variance of a series as the variance of its residual against a
/// centered moving average, corrected by `1 / (1 - 1/window)` for the sample's
/// own weight in the average.
pub fn estimate_noise_variance(series: &[f64], window: usize) -> Result<f64> {
    if window < 3 || window.is_multiple_of(2) {
        return Err(Error::config(format!(
            "window must be odd and at least 3, got {window}"
        )));
    }
    if series.len() < window + 2 {
        return Err(Error::config(format!(
            "series of length {} is too short for window {window}",
            series.len()
        )));
    }
    let half = window / 2;
    let mut running: f64 = series[..window].iter().sum();
    let mut residuals = Vec::with_capacity(series.len() - window + 1);
    for center in half..series.len() - half {
        if center > half {
            running += series[center + half] - series[center - half - 1];
        }
        residuals.push(series[center] - running / window as f64);
    }
    let n = residuals.len() as f64;
    let mean = residuals.iter().sum::<f64>() / n;
    let var = residuals.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(var / (1.0 - 1.0 / window as f64))
}
