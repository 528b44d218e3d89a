//! Data model for partially observed linear systems whose operators depend on
//! a static parameter vector and whose control input is observed separately.
//!
//! The augmented vector used by the ensemble filters is always laid out as
//! `[theta; state]`.

use crate::error::{Error, Result};
use crate::linalg::{check_pd, check_psd, ensure_square, Matrix, Vector};

/// Static model parameters (opaque to the generic filters).
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterVector(pub Vector);

/// Discretized state, e.g. node temperatures.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector(pub Vector);

impl ParameterVector {
    pub fn from_slice(values: &[f64]) -> Self {
        Self(Vector::from_column_slice(values))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl StateVector {
    pub fn from_slice(values: &[f64]) -> Self {
        Self(Vector::from_column_slice(values))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Joint parameter/state vector `[theta; state]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedState {
    values: Vector,
    param_dim: usize,
}

impl AugmentedState {
    pub fn from_vector(values: Vector, param_dim: usize) -> Result<Self> {
        if values.len() <= param_dim {
            return Err(Error::Dimension {
                context: "augmented state (no state block)",
                expected: param_dim + 1,
                actual: values.len(),
            });
        }
        Ok(Self { values, param_dim })
    }

    pub fn as_vector(&self) -> &Vector {
        &self.values
    }

    pub fn into_vector(self) -> Vector {
        self.values
    }

    pub fn param_dim(&self) -> usize {
        self.param_dim
    }

    pub fn state_dim(&self) -> usize {
        self.values.len() - self.param_dim
    }

    pub fn theta(&self) -> ParameterVector {
        ParameterVector(self.values.rows(0, self.param_dim).into_owned())
    }

    pub fn state(&self) -> StateVector {
        StateVector(
            self.values
                .rows(self.param_dim, self.state_dim())
                .into_owned(),
        )
    }
}

pub fn augment(theta: &ParameterVector, state: &StateVector) -> AugmentedState {
    let p = theta.len();
    let mut values = Vector::zeros(p + state.len());
    values.rows_mut(0, p).copy_from(&theta.0);
    values.rows_mut(p, state.len()).copy_from(&state.0);
    AugmentedState {
        values,
        param_dim: p,
    }
}

pub fn split(x: &Vector, param_dim: usize) -> Result<(ParameterVector, StateVector)> {
    if x.len() <= param_dim {
        return Err(Error::Dimension {
            context: "split (no state block)",
            expected: param_dim + 1,
            actual: x.len(),
        });
    }
    let n = x.len() - param_dim;
    Ok((
        ParameterVector(x.rows(0, param_dim).into_owned()),
        StateVector(x.rows(param_dim, n).into_owned()),
    ))
}

/// Operators of `T_k = A T_{k-1} + B u_k + w_k`, `y_k = H T_k + v_k` for one
/// parameter value. Stored densely; `control` holds one column per control
/// channel.
#[derive(Debug, Clone)]
pub struct ModelOperators {
    transition: Matrix,
    control: Matrix,
    observation: Matrix,
    process_noise: Matrix,
    observation_noise: Matrix,
}

impl ModelOperators {
    pub fn new(
        transition: Matrix,
        control: Matrix,
        observation: Matrix,
        process_noise: Matrix,
        observation_noise: Matrix,
    ) -> Result<Self> {
        let n = transition.nrows();
        ensure_square(&transition, n, "transition operator")?;
        if control.nrows() != n {
            return Err(Error::Dimension {
                context: "control operator rows",
                expected: n,
                actual: control.nrows(),
            });
        }
        if observation.ncols() != n {
            return Err(Error::Dimension {
                context: "observation operator columns",
                expected: n,
                actual: observation.ncols(),
            });
        }
        let m = observation.nrows();
        ensure_square(&process_noise, n, "process noise covariance")?;
        ensure_square(&observation_noise, m, "observation noise covariance")?;
        check_psd(&process_noise, "process noise covariance")?;
        check_pd(&observation_noise, "observation noise covariance")?;
        Ok(Self {
            transition,
            control,
            observation,
            process_noise,
            observation_noise,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.transition.nrows()
    }

    pub fn control_dim(&self) -> usize {
        self.control.ncols()
    }

    pub fn obs_dim(&self) -> usize {
        self.observation.nrows()
    }

    pub fn transition(&self) -> &Matrix {
        &self.transition
    }

    pub fn control(&self) -> &Matrix {
        &self.control
    }

    pub fn control_column(&self, channel: usize) -> Vector {
        self.control.column(channel).into_owned()
    }

    pub fn observation(&self) -> &Matrix {
        &self.observation
    }

    pub fn process_noise(&self) -> &Matrix {
        &self.process_noise
    }

    pub fn observation_noise(&self) -> &Matrix {
        &self.observation_noise
    }

    /// `A x + B u`.
    pub fn propagate(&self, state: &Vector, control: &Vector) -> Vector {
        &self.transition * state + &self.control * control
    }

    pub fn observe(&self, state: &Vector) -> Vector {
        &self.observation * state
    }
}

/// Sizes shared by every operator set a provider produces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelDims {
    pub params: usize,
    pub state: usize,
    pub control: usize,
    pub obs: usize,
    /// Seconds between consecutive steps.
    pub dt: f64,
}

/// Maps a parameter vector to its operators. Implementations must be
/// deterministic in `theta`.
pub trait ModelProvider {
    fn dims(&self) -> ModelDims;

    fn operators(&self, theta: &ParameterVector) -> Result<ModelOperators>;
}

/// A provider with the same operators for every parameter value.
#[derive(Debug, Clone)]
pub struct FixedProvider {
    ops: ModelOperators,
    params: usize,
    dt: f64,
}

impl FixedProvider {
    pub fn new(ops: ModelOperators, params: usize) -> Self {
        Self {
            ops,
            params,
            dt: 1.0,
        }
    }
}

impl ModelProvider for FixedProvider {
    fn dims(&self) -> ModelDims {
        ModelDims {
            params: self.params,
            state: self.ops.state_dim(),
            control: self.ops.control_dim(),
            obs: self.ops.obs_dim(),
            dt: self.dt,
        }
    }

    fn operators(&self, theta: &ParameterVector) -> Result<ModelOperators> {
        if theta.len() != self.params {
            return Err(Error::Dimension {
                context: "parameter vector",
                expected: self.params,
                actual: theta.len(),
            });
        }
        Ok(self.ops.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn augment_concatenates_in_theta_state_order() {
        let x = augment(
            &ParameterVector::from_slice(&[0.0]),
            &StateVector::from_slice(&[1.0, 2.0]),
        );
        assert_eq!(x.as_vector().as_slice(), &[0.0, 1.0, 2.0]);

        let x = augment(
            &ParameterVector::from_slice(&[]),
            &StateVector::from_slice(&[5.0]),
        );
        assert_eq!(x.as_vector().as_slice(), &[5.0]);

        let theta = ParameterVector::from_slice(&[0.31f64.ln(), 3.11e5f64.ln()]);
        let x = augment(&theta, &StateVector(Vector::from_element(21, 16.1)));
        assert_eq!(x.as_vector().len(), 23);
        assert_eq!(x.theta(), theta);
    }

    #[test]
    fn split_examples() {
        let (t, s) = split(&Vector::from_column_slice(&[0.0, 1.0, 2.0]), 1).unwrap();
        assert_eq!(t.0.as_slice(), &[0.0]);
        assert_eq!(s.0.as_slice(), &[1.0, 2.0]);

        let (t, s) = split(&Vector::from_column_slice(&[5.0]), 0).unwrap();
        assert!(t.is_empty());
        assert_eq!(s.0.as_slice(), &[5.0]);

        let err = split(&Vector::from_column_slice(&[7.0, 8.0]), 2).unwrap_err();
        assert!(matches!(err, Error::Dimension { .. }));
    }

    #[test]
    fn operators_reject_bad_noise() {
        let bad_v = ModelOperators::new(
            Matrix::identity(2, 2),
            Matrix::zeros(2, 1),
            Matrix::identity(1, 2),
            Matrix::zeros(2, 2),
            Matrix::zeros(1, 1),
        );
        assert!(bad_v.is_err());
        let bad_w = ModelOperators::new(
            Matrix::identity(2, 2),
            Matrix::zeros(2, 1),
            Matrix::identity(1, 2),
            -Matrix::identity(2, 2),
            Matrix::identity(1, 1),
        );
        assert!(bad_w.is_err());
        let bad_h = ModelOperators::new(
            Matrix::identity(2, 2),
            Matrix::zeros(2, 1),
            Matrix::identity(1, 3),
            Matrix::zeros(2, 2),
            Matrix::identity(1, 1),
        );
        assert!(matches!(bad_h, Err(Error::Dimension { .. })));
    }

    proptest! {
        #[test]
        fn split_inverts_augment(
            theta in prop::collection::vec(-1e6f64..1e6, 0..4),
            state in prop::collection::vec(-1e6f64..1e6, 1..8),
        ) {
            let t = ParameterVector::from_slice(&theta);
            let s = StateVector::from_slice(&state);
            let x = augment(&t, &s);
            let (t2, s2) = split(x.as_vector(), theta.len()).unwrap();
            prop_assert_eq!(t2, t);
            prop_assert_eq!(s2, s);
        }
    }
}
