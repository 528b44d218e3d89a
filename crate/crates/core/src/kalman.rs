//! Exact Kalman filter for the control (boundary) vector.
//!
//! The control follows `u_k = F u_{k-1} + q_k` and is observed as
//! `z_k = G u_k + c_k`. Autoregressive models of order one and two share the
//! same code: AR(2) is written in companion form over `[u_k; u_{k-1}]`.

use crate::error::{Error, Result};
use crate::linalg::{
    check_pd, check_psd, ensure_finite_vec, ensure_len, ensure_square, kalman_gain, symmetrize,
    Matrix, Vector,
};

#[derive(Debug, Clone)]
pub struct ControlModel {
    evolution: Matrix,
    process_noise: Matrix,
    measurement_noise: Matrix,
    selection: Matrix,
    initial_mean: Vector,
    initial_cov: Matrix,
}

impl ControlModel {
    pub fn new(
        evolution: Matrix,
        process_noise: Matrix,
        measurement_noise: Matrix,
        selection: Matrix,
        initial_mean: Vector,
        initial_cov: Matrix,
    ) -> Result<Self> {
        let la = evolution.nrows();
        ensure_square(&evolution, la, "control evolution")?;
        ensure_square(&process_noise, la, "control process noise")?;
        ensure_square(&initial_cov, la, "control initial covariance")?;
        ensure_len(&initial_mean, la, "control initial mean")?;
        if selection.ncols() != la {
            return Err(Error::Dimension {
                context: "control selection columns",
                expected: la,
                actual: selection.ncols(),
            });
        }
        let l = selection.nrows();
        ensure_square(&measurement_noise, l, "control measurement noise")?;
        check_psd(&process_noise, "control process noise")?;
        check_psd(&initial_cov, "control initial covariance")?;
        check_pd(&measurement_noise, "control measurement noise")?;
        ensure_finite_vec(&initial_mean, "control initial mean")?;
        Ok(Self {
            evolution,
            process_noise,
            measurement_noise,
            selection,
            initial_mean,
            initial_cov,
        })
    }

    /// Number of observed channels.
    pub fn observed_dim(&self) -> usize {
        self.selection.nrows()
    }

    /// Dimension of the (possibly augmented) filter state.
    pub fn state_dim(&self) -> usize {
        self.evolution.nrows()
    }

    pub fn evolution(&self) -> &Matrix {
        &self.evolution
    }

    pub fn process_noise(&self) -> &Matrix {
        &self.process_noise
    }

    pub fn measurement_noise(&self) -> &Matrix {
        &self.measurement_noise
    }

    pub fn selection(&self) -> &Matrix {
        &self.selection
    }

    pub fn initial_state(&self) -> ControlFilterState {
        ControlFilterState {
            mean: self.initial_mean.clone(),
            cov: self.initial_cov.clone(),
            step_index: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlFilterState {
    pub mean: Vector,
    pub cov: Matrix,
    pub step_index: usize,
}

/// Filtered mean and covariance of the observed control channels only.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlPosterior {
    pub mean: Vector,
    pub cov: Matrix,
}

impl ControlPosterior {
    pub fn deterministic(mean: Vector) -> Self {
        let l = mean.len();
        Self {
            mean,
            cov: Matrix::zeros(l, l),
        }
    }
}

impl ControlFilterState {
    /// Projects the filter state onto the physical channels (`G mean`,
    /// `G cov Gᵀ`).
    pub fn observed(&self, model: &ControlModel) -> ControlPosterior {
        let g = &model.selection;
        let mut cov = g * &self.cov * g.transpose();
        symmetrize(&mut cov);
        ControlPosterior {
            mean: g * &self.mean,
            cov,
        }
    }
}

fn check_state(s: &ControlFilterState, m: &ControlModel) -> Result<()> {
    let la = m.state_dim();
    ensure_len(&s.mean, la, "control filter mean")?;
    ensure_square(&s.cov, la, "control filter covariance")
}

pub fn kf_predict(s: &ControlFilterState, m: &ControlModel) -> Result<ControlFilterState> {
    check_state(s, m)?;
    let f = &m.evolution;
    let mut cov = f * &s.cov * f.transpose() + &m.process_noise;
    symmetrize(&mut cov);
    Ok(ControlFilterState {
        mean: f * &s.mean,
        cov,
        step_index: s.step_index,
    })
}

pub fn kf_update(
    s_pred: &ControlFilterState,
    z: &Vector,
    m: &ControlModel,
) -> Result<ControlFilterState> {
    check_state(s_pred, m)?;
    ensure_len(z, m.observed_dim(), "control observation")?;
    ensure_finite_vec(z, "control observation")?;
    let g = &m.selection;
    let mut innovation_cov = g * &s_pred.cov * g.transpose() + &m.measurement_noise;
    symmetrize(&mut innovation_cov);
    let gain = kalman_gain(&s_pred.cov, g, &innovation_cov)?;
    let innovation = z - g * &s_pred.mean;
    let mean = &s_pred.mean + &gain * innovation;
    let la = m.state_dim();
    let mut cov = (Matrix::identity(la, la) - &gain * g) * &s_pred.cov;
    symmetrize(&mut cov);
    Ok(ControlFilterState {
        mean,
        cov,
        step_index: s_pred.step_index + 1,
    })
}

/// Random walk `u_k = u_{k-1} + q_k`.
pub fn ar1_model(
    channels: usize,
    process_noise: Matrix,
    measurement_noise: Matrix,
    initial_mean: Vector,
    initial_cov: Matrix,
) -> Result<ControlModel> {
    let id = Matrix::identity(channels, channels);
    ControlModel::new(
        id.clone(),
        process_noise,
        measurement_noise,
        id,
        initial_mean,
        initial_cov,
    )
}

/// Random increment `u_k = 2u_{k-1} - u_{k-2} + q_k` over `[u_k; u_{k-1}]`.
///
/// `process_noise`, `initial_mean` and `initial_cov` are given for the
/// physical channels. The lagged block starts at the same mean with an
/// independent copy of the initial covariance.
pub fn ar2_model(
    channels: usize,
    process_noise: Matrix,
    measurement_noise: Matrix,
    initial_mean: Vector,
    initial_cov: Matrix,
) -> Result<ControlModel> {
    let l = channels;
    ensure_square(&process_noise, l, "control process noise")?;
    ensure_square(&initial_cov, l, "control initial covariance")?;
    ensure_len(&initial_mean, l, "control initial mean")?;
    let id = Matrix::identity(l, l);
    let mut f = Matrix::zeros(2 * l, 2 * l);
    f.view_mut((0, 0), (l, l)).copy_from(&(&id * 2.0));
    f.view_mut((0, l), (l, l)).copy_from(&(-&id));
    f.view_mut((l, 0), (l, l)).copy_from(&id);
    let mut g = Matrix::zeros(l, 2 * l);
    g.view_mut((0, 0), (l, l)).copy_from(&id);
    let mut q = Matrix::zeros(2 * l, 2 * l);
    q.view_mut((0, 0), (l, l)).copy_from(&process_noise);
    let mut mean = Vector::zeros(2 * l);
    mean.rows_mut(0, l).copy_from(&initial_mean);
    mean.rows_mut(l, l).copy_from(&initial_mean);
    let mut cov = Matrix::zeros(2 * l, 2 * l);
    cov.view_mut((0, 0), (l, l)).copy_from(&initial_cov);
    cov.view_mut((l, l), (l, l)).copy_from(&initial_cov);
    ControlModel::new(f, q, measurement_noise, g, mean, cov)
}

/// Runs predict/update over a whole series, one state per observation.
pub fn filter_series(m: &ControlModel, zs: &[Vector]) -> Result<Vec<ControlFilterState>> {
    if zs.is_empty() {
        return Err(Error::config("control series is empty"));
    }
    let mut state = m.initial_state();
    let mut out = Vec::with_capacity(zs.len());
    for (k, z) in zs.iter().enumerate() {
        let pred = kf_predict(&state, m).map_err(|e| e.at_step(k + 1))?;
        state = kf_update(&pred, z, m).map_err(|e| e.at_step(k + 1))?;
        out.push(state.clone());
    }
    Ok(out)
}

/// Per-channel variance of first differences of a series.
pub fn difference_variance(zs: &[Vector]) -> Result<Vector> {
    if zs.len() < 3 {
        return Err(Error::config(
            "need at least three observations to estimate control process noise",
        ));
    }
    let l = zs[0].len();
    let diffs: Vec<Vector> = zs.windows(2).map(|w| &w[1] - &w[0]).collect();
    let count = diffs.len() as f64;
    let mean = diffs.iter().fold(Vector::zeros(l), |acc, d| acc + d) / count;
    let var = diffs.iter().fold(Vector::zeros(l), |acc, d| {
        let c = d - &mean;
        acc + c.component_mul(&c)
    }) / (count - 1.0);
    Ok(var)
}

/// AR order of the control model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArOrder {
    One,
    Two,
}

/// Control model with data-driven defaults: `Q = lambda * diag(Var(Δz))`,
/// initial mean `z_1` and initial covariance `10 C`.
pub fn model_from_series(
    order: ArOrder,
    zs: &[Vector],
    measurement_noise: Matrix,
    process_noise: Option<Matrix>,
    lambda: f64,
) -> Result<ControlModel> {
    let first = zs
        .first()
        .ok_or_else(|| Error::config("control series is empty"))?
        .clone();
    let l = first.len();
    let q = match process_noise {
        Some(q) => q,
        None => Matrix::from_diagonal(&(difference_variance(zs)? * lambda)),
    };
    let p0 = &measurement_noise * 10.0;
    match order {
        ArOrder::One => ar1_model(l, q, measurement_noise, first, p0),
        ArOrder::Two => ar2_model(l, q, measurement_noise, first, p0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn scalar(v: f64) -> Matrix {
        Matrix::from_element(1, 1, v)
    }

    fn vec1(v: f64) -> Vector {
        Vector::from_element(1, v)
    }

    #[test]
    fn predict_identity_dynamics_adds_variance() {
        let m = ar1_model(1, scalar(0.5), scalar(1.0), vec1(5.0), scalar(2.0)).unwrap();
        let s = kf_predict(&m.initial_state(), &m).unwrap();
        assert_eq!(s.mean[0], 5.0);
        assert!((s.cov[(0, 0)] - 2.5).abs() < 1e-15);
        assert_eq!(s.step_index, 0);
    }

    #[test]
    fn predict_ar2_companion() {
        let m = ar2_model(1, scalar(0.1), scalar(1.0), vec1(0.0), scalar(1.0)).unwrap();
        assert_eq!(
            m.evolution(),
            &Matrix::from_row_slice(2, 2, &[2.0, -1.0, 1.0, 0.0])
        );
        assert_eq!(m.selection(), &Matrix::from_row_slice(1, 2, &[1.0, 0.0]));
        let cov = Matrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.5]);
        let s = ControlFilterState {
            mean: Vector::from_column_slice(&[3.0, 1.0]),
            cov: cov.clone(),
            step_index: 4,
        };
        let p = kf_predict(&s, &m).unwrap();
        assert_eq!(p.mean.as_slice(), &[5.0, 3.0]);
        let f = m.evolution();
        let expected = f * cov * f.transpose()
            + Matrix::from_diagonal(&Vector::from_column_slice(&[0.1, 0.0]));
        assert!((p.cov - expected).abs().max() < 1e-14);
    }

    #[test]
    fn predict_matches_literal_formula_random_2x2() {
        let f = Matrix::from_row_slice(2, 2, &[0.9, 0.2, -0.1, 1.1]);
        let q = Matrix::from_row_slice(2, 2, &[0.3, 0.05, 0.05, 0.2]);
        let cov = Matrix::from_row_slice(2, 2, &[1.2, -0.4, -0.4, 0.7]);
        let m = ControlModel::new(
            f,
            q,
            Matrix::identity(2, 2),
            Matrix::identity(2, 2),
            Vector::from_column_slice(&[0.7, -1.3]),
            cov,
        )
        .unwrap();
        let p = kf_predict(&m.initial_state(), &m).unwrap();
        // mean: (0.9*0.7 + 0.2*-1.3, -0.1*0.7 + 1.1*-1.3)
        let mean = [0.9 * 0.7 + 0.2 * -1.3, -0.1 * 0.7 + 1.1 * -1.3];
        // F P Fᵀ + Q written out element by element
        let (a, b, c, d) = (0.9, 0.2, -0.1, 1.1);
        let (p11, p12, p22) = (1.2, -0.4, 0.7);
        let fp11 = a * p11 + b * p12;
        let fp12 = a * p12 + b * p22;
        let fp21 = c * p11 + d * p12;
        let fp22 = c * p12 + d * p22;
        let c11 = fp11 * a + fp12 * b + 0.3;
        let c12 = fp11 * c + fp12 * d + 0.05;
        let c22 = fp21 * c + fp22 * d + 0.2;
        assert!((p.mean[0] - mean[0]).abs() < 1e-12);
        assert!((p.mean[1] - mean[1]).abs() < 1e-12);
        assert!((p.cov[(0, 0)] - c11).abs() < 1e-12);
        assert!((p.cov[(0, 1)] - c12).abs() < 1e-12);
        assert!((p.cov[(1, 0)] - c12).abs() < 1e-12);
        assert!((p.cov[(1, 1)] - c22).abs() < 1e-12);
    }

    #[test]
    fn update_uninformative_observation() {
        let m = ar1_model(1, scalar(0.0), scalar(1e12), vec1(3.0), scalar(2.0)).unwrap();
        let s = kf_update(&m.initial_state(), &vec1(100.0), &m).unwrap();
        assert!((s.mean[0] - 3.0).abs() / 3.0 < 1e-10);
        assert!((s.cov[(0, 0)] - 2.0).abs() / 2.0 < 1e-10);
    }

    #[test]
    fn update_equal_variances_halves() {
        let m = ar1_model(1, scalar(0.0), scalar(2.0), vec1(4.0), scalar(2.0)).unwrap();
        let s = kf_update(&m.initial_state(), &vec1(10.0), &m).unwrap();
        assert!((s.mean[0] - 7.0).abs() < 1e-14);
        assert!((s.cov[(0, 0)] - 1.0).abs() < 1e-14);
        assert_eq!(s.step_index, 1);
    }

    #[test]
    fn zero_innovation_keeps_mean_and_shrinks_trace() {
        let m = ar2_model(
            2,
            Matrix::identity(2, 2) * 0.1,
            Matrix::identity(2, 2) * 0.5,
            Vector::from_column_slice(&[1.0, 2.0]),
            Matrix::identity(2, 2),
        )
        .unwrap();
        let s0 = m.initial_state();
        let z = m.selection() * &s0.mean;
        let s1 = kf_update(&s0, &z, &m).unwrap();
        assert!((&s1.mean - &s0.mean).abs().max() < 1e-15);
        assert!(s1.cov.trace() < s0.cov.trace());
    }

    #[test]
    fn singular_innovation_reports_condition() {
        let m = ControlModel::new(
            Matrix::identity(1, 1),
            scalar(0.0),
            scalar(1.0),
            Matrix::identity(1, 1),
            vec1(0.0),
            scalar(1.0),
        )
        .unwrap();
        let mut s = m.initial_state();
        s.cov = scalar(-1.0);
        let err = kf_update(&s, &vec1(1.0), &m).unwrap_err();
        assert!(matches!(err, Error::Singular { .. }));
    }

    #[test]
    fn constructors_validate_noise() {
        assert!(ar1_model(1, scalar(-1.0), scalar(1.0), vec1(0.0), scalar(1.0)).is_err());
        assert!(ar1_model(1, scalar(1.0), scalar(0.0), vec1(0.0), scalar(1.0)).is_err());
        assert!(ar1_model(
            2,
            Matrix::identity(2, 2),
            scalar(1.0),
            vec1(0.0),
            scalar(1.0)
        )
        .is_err());
    }

    #[test]
    fn ar1_paper_noise_level() {
        let m = ar1_model(
            2,
            Matrix::identity(2, 2) * 0.05,
            Matrix::identity(2, 2) * 0.01,
            Vector::zeros(2),
            Matrix::identity(2, 2),
        )
        .unwrap();
        assert_eq!(m.evolution(), &Matrix::identity(2, 2));
        assert_eq!(m.selection(), &Matrix::identity(2, 2));
    }

    #[test]
    fn ar1_static_model_is_weighted_average() {
        // With Q = 0 the posterior is the conjugate normal posterior of a
        // constant: precision-weighted average of prior mean and data.
        let (m0, p0, c) = (1.0, 4.0, 0.5);
        let m = ar1_model(1, scalar(0.0), scalar(c), vec1(m0), scalar(p0)).unwrap();
        let zs: Vec<Vector> = [2.0, 2.5, 1.5, 3.0, 2.2].iter().map(|&z| vec1(z)).collect();
        let states = filter_series(&m, &zs).unwrap();
        for (k, s) in states.iter().enumerate() {
            let n = (k + 1) as f64;
            let sum: f64 = zs[..=k].iter().map(|z| z[0]).sum();
            let precision = 1.0 / p0 + n / c;
            let mean = (m0 / p0 + sum / c) / precision;
            assert!((s.mean[0] - mean).abs() < 1e-12);
            assert!((s.cov[(0, 0)] - 1.0 / precision).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_observation_is_fixed_point() {
        let m = ar1_model(
            2,
            Matrix::identity(2, 2) * 0.05,
            Matrix::identity(2, 2) * 0.01,
            Vector::from_column_slice(&[0.0, 100.0]),
            Matrix::identity(2, 2),
        )
        .unwrap();
        let z = Vector::from_column_slice(&[20.0, 10.0]);
        let zs = vec![z.clone(); 200];
        let last = filter_series(&m, &zs).unwrap().pop().unwrap();
        assert!((last.mean - z).abs().max() < 1e-9);
    }

    #[test]
    fn ar2_tracks_linear_ramp_without_lag() {
        let m = ar2_model(1, scalar(0.0), scalar(1e-8), vec1(0.0), scalar(100.0)).unwrap();
        let ramp = |k: usize| 3.0 + 0.25 * k as f64;
        let zs: Vec<Vector> = (1..=400).map(|k| vec1(ramp(k))).collect();
        let states = filter_series(&m, &zs).unwrap();
        let lag: Vec<f64> = states
            .iter()
            .enumerate()
            .map(|(k, s)| (s.mean[0] - ramp(k + 1)).abs())
            .collect();
        assert!(lag[399] < 1e-6, "final lag {}", lag[399]);
        assert!(lag[399] <= lag[10]);
    }

    #[test]
    fn ar2_constant_converges_to_pair() {
        // With Q = 0 the slope estimate is a regression over a growing window, so the
        // error decays polynomially rather than geometrically.
        let m = ar2_model(1, scalar(0.0), scalar(0.01), vec1(0.0), scalar(10.0)).unwrap();
        let zs = vec![vec1(7.5); 4000];
        let states = filter_series(&m, &zs).unwrap();
        let err = |k: usize| {
            let s: &ControlFilterState = &states[k];
            (s.mean[0] - 7.5).abs().max((s.mean[1] - 7.5).abs())
        };
        assert!(err(3999) < 1e-5, "{}", err(3999));
        assert!(err(3999) < err(499) && err(499) < err(49));
    }

    #[test]
    fn single_observation_with_vague_prior() {
        let m = ar1_model(1, scalar(0.1), scalar(0.01), vec1(0.0), scalar(1e10)).unwrap();
        let s = filter_series(&m, &[vec1(12.3)]).unwrap();
        assert!((s[0].mean[0] - 12.3).abs() < 1e-8);
    }

    #[test]
    fn series_matches_manual_loop() {
        let m = ar1_model(1, scalar(0.02), scalar(0.01), vec1(15.0), scalar(0.1)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let noise = Normal::new(0.0, 0.1).unwrap();
        let zs: Vec<Vector> = (0..100)
            .map(|k| vec1(15.0 + (k as f64 / 10.0).sin() + noise.sample(&mut rng)))
            .collect();
        let series = filter_series(&m, &zs).unwrap();
        let mut s = m.initial_state();
        for (k, z) in zs.iter().enumerate() {
            s = kf_update(&kf_predict(&s, &m).unwrap(), z, &m).unwrap();
            assert_eq!(series[k], s);
        }
    }

    #[test]
    fn temperature_like_series_has_bounded_positive_variance() {
        let c = 0.01;
        let m = ar1_model(
            2,
            Matrix::identity(2, 2) * 0.02,
            Matrix::identity(2, 2) * c,
            Vector::from_column_slice(&[25.0, 10.0]),
            Matrix::identity(2, 2) * (10.0 * c),
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let noise = Normal::new(0.0, c.sqrt()).unwrap();
        let zs: Vec<Vector> = (0..500)
            .map(|t| {
                let w = 2.0 * std::f64::consts::PI * t as f64 / 1440.0;
                Vector::from_column_slice(&[
                    25.0 + 1.5 * w.sin() + noise.sample(&mut rng),
                    10.0 + 4.0 * (w + 1.0).sin() + noise.sample(&mut rng),
                ])
            })
            .collect();
        let mut prior = m.initial_state();
        for z in &zs {
            let pred = kf_predict(&prior, &m).unwrap();
            let post = kf_update(&pred, z, &m).unwrap();
            for i in 0..2 {
                assert!(post.cov[(i, i)] > 0.0);
                assert!(post.cov[(i, i)] <= pred.cov[(i, i)]);
            }
            prior = post;
        }
    }

    #[test]
    fn default_process_noise_is_difference_variance() {
        let zs: Vec<Vector> = [0.0, 1.0, 3.0, 6.0].iter().map(|&z| vec1(z)).collect();
        // differences 1, 2, 3 -> sample variance 1
        let v = difference_variance(&zs).unwrap();
        assert!((v[0] - 1.0).abs() < 1e-15);
        let m = model_from_series(ArOrder::One, &zs, scalar(0.01), None, 2.0).unwrap();
        assert!((m.process_noise()[(0, 0)] - 2.0).abs() < 1e-15);
        assert_eq!(m.initial_state().mean[0], 0.0);
        assert!((m.initial_state().cov[(0, 0)] - 0.1).abs() < 1e-15);
    }
}
