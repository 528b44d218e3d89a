//! Kalman filter for the state conditioned on a fixed parameter value, with
//! the control uncertainty integrated out.
//!
//! The prediction uses the control posterior of the same step:
//! `T' = A T + B u_{k|k}`, `P' = A P Aᵀ + B P^u_{k|k} Bᵀ + W`.

use crate::error::Result;
use crate::kalman::ControlPosterior;
use crate::linalg::{
    check_psd, ensure_finite_vec, ensure_len, ensure_square, kalman_gain, symmetrize, Matrix,
    Vector,
};
use crate::statespace::ModelOperators;

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalStateFilter {
    pub mean: Vector,
    pub cov: Matrix,
    pub step_index: usize,
}

impl ConditionalStateFilter {
    pub fn new(mean: Vector, cov: Matrix) -> Result<Self> {
        ensure_square(&cov, mean.len(), "conditional state covariance")?;
        check_psd(&cov, "conditional state covariance")?;
        Ok(Self {
            mean,
            cov,
            step_index: 0,
        })
    }
}

pub fn mkf_predict(
    s: &ConditionalStateFilter,
    ops: &ModelOperators,
    control: &ControlPosterior,
) -> Result<ConditionalStateFilter> {
    let n = ops.state_dim();
    let l = ops.control_dim();
    ensure_len(&s.mean, n, "conditional state mean")?;
    ensure_square(&s.cov, n, "conditional state covariance")?;
    ensure_len(&control.mean, l, "control posterior mean")?;
    ensure_square(&control.cov, l, "control posterior covariance")?;
    check_psd(&control.cov, "control posterior covariance")?;

    let a = ops.transition();
    let b = ops.control();
    let mut cov =
        a * &s.cov * a.transpose() + b * &control.cov * b.transpose() + ops.process_noise();
    symmetrize(&mut cov);
    Ok(ConditionalStateFilter {
        mean: ops.propagate(&s.mean, &control.mean),
        cov,
        step_index: s.step_index,
    })
}

pub fn mkf_update(
    s_pred: &ConditionalStateFilter,
    y: &Vector,
    ops: &ModelOperators,
) -> Result<ConditionalStateFilter> {
    let n = ops.state_dim();
    ensure_len(&s_pred.mean, n, "conditional state mean")?;
    ensure_len(y, ops.obs_dim(), "observation")?;
    ensure_finite_vec(y, "observation")?;
    let h = ops.observation();
    let mut innovation_cov = h * &s_pred.cov * h.transpose() + ops.observation_noise();
    symmetrize(&mut innovation_cov);
    let gain = kalman_gain(&s_pred.cov, h, &innovation_cov)?;
    let mean = &s_pred.mean + &gain * (y - h * &s_pred.mean);
    let mut cov = (Matrix::identity(n, n) - &gain * h) * &s_pred.cov;
    symmetrize(&mut cov);
    Ok(ConditionalStateFilter {
        mean,
        cov,
        step_index: s_pred.step_index + 1,
    })
}
