#![allow(dead_code)]

use enmkf::ensemble::{init_ensemble, Ensemble, ParamPrior, ParamSpace, PriorSpec};
use enmkf::kalman::{ar1_model, ControlModel};
use enmkf::linalg::{Matrix, Vector};
use enmkf::statespace::{FixedProvider, ModelOperators, StateVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn scalar(v: f64) -> Matrix {
    Matrix::from_element(1, 1, v)
}

pub fn vec1(v: f64) -> Vector {
    Vector::from_element(1, v)
}

/// Scalar linear-Gaussian system `T' = a T + b u + w`, `y = h T + v`, with a
/// random-walk control `u' = u + q` observed as `z = u + c`.
#[derive(Debug, Clone, Copy)]
pub struct ScalarSystem {
    pub a: f64,
    pub b: f64,
    pub h: f64,
    pub w: f64,
    pub v: f64,
    pub q: f64,
    pub c: f64,
    pub t0_mean: f64,
    pub t0_var: f64,
    pub u0_mean: f64,
    pub u0_var: f64,
}

impl ScalarSystem {
    pub fn ops(&self) -> ModelOperators {
        ModelOperators::new(
            scalar(self.a),
            scalar(self.b),
            scalar(self.h),
            scalar(self.w),
            scalar(self.v),
        )
        .unwrap()
    }

    pub fn provider(&self) -> FixedProvider {
        FixedProvider::new(self.ops(), 1)
    }

    pub fn control_model(&self) -> ControlModel {
        ar1_model(
            1,
            scalar(self.q),
            scalar(self.c),
            vec1(self.u0_mean),
            scalar(self.u0_var),
        )
        .unwrap()
    }

    /// Observation pairs `(z_k, y_k)` for `k = 1..=steps`.
    pub fn simulate(&self, steps: usize, seed: u64) -> Vec<(f64, f64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut n = || -> f64 { rng.sample(StandardNormal) };
        let mut t = self.t0_mean + self.t0_var.sqrt() * n();
        let mut u = self.u0_mean + self.u0_var.sqrt() * n();
        let mut out = Vec::with_capacity(steps);
        for _ in 0..steps {
            u += self.q.sqrt() * n();
            let z = u + self.c.sqrt() * n();
            t = self.a * t + self.b * u + self.w.sqrt() * n();
            let y = self.h * t + self.v.sqrt() * n();
            out.push((z, y));
        }
        out
    }

    /// Ensemble with a point-mass parameter and Gaussian initial state.
    pub fn ensemble(&self, size: usize, seed: u64) -> Ensemble {
        let prior = PriorSpec {
            params: vec![ParamPrior::PointMass { value: 1.0 }],
            space: ParamSpace::Linear,
            state_mean: StateVector::from_slice(&[self.t0_mean]),
            state_var: self.t0_var,
        };
        init_ensemble(&prior, size, seed).unwrap()
    }
}

/// A scalar system with strong state persistence, where the conditional
/// state carries information across steps.
pub fn persistent_system() -> ScalarSystem {
    ScalarSystem {
        a: 0.9,
        b: 1.0,
        h: 1.0,
        w: 0.01,
        v: 1.0,
        q: 0.05,
        c: 0.1,
        t0_mean: 0.0,
        t0_var: 1.0,
        u0_mean: 0.0,
        u0_var: 1.0,
    }
}

pub fn sample_mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Least-squares slope of `y` on `x`.
pub fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}
