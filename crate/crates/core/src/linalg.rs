//! Small dense linear-algebra helpers shared by the filters.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Symmetry tolerance applied to every covariance the filters produce.
pub const SYMMETRY_TOL: f64 = 1e-10;

pub fn symmetrize(m: &mut Matrix) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

pub fn max_asymmetry(m: &Matrix) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

pub fn min_eigenvalue(m: &Matrix) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    let mut s = m.clone();
    symmetrize(&mut s);
    s.symmetric_eigenvalues().min()
}

fn relative_tol(m: &Matrix) -> f64 {
    let scale = m.abs().max().max(1.0);
    SYMMETRY_TOL * scale
}

pub fn ensure_square(m: &Matrix, n: usize, context: &'static str) -> Result<()> {
    if m.nrows() != n {
        return Err(Error::Dimension {
            context,
            expected: n,
            actual: m.nrows(),
        });
    }
    if m.ncols() != n {
        return Err(Error::Dimension {
            context,
            expected: n,
            actual: m.ncols(),
        });
    }
    Ok(())
}

pub fn ensure_len(v: &Vector, n: usize, context: &'static str) -> Result<()> {
    if v.len() != n {
        return Err(Error::Dimension {
            context,
            expected: n,
            actual: v.len(),
        });
    }
    Ok(())
}

pub fn ensure_finite_vec(v: &Vector, what: &'static str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

/// Symmetric, and smallest eigenvalue no lower than `-1e-10 * trace`.
pub fn check_psd(m: &Matrix, what: &'static str) -> Result<()> {
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite(what));
    }
    if max_asymmetry(m) > relative_tol(m) {
        return Err(Error::NotDefinite {
            what,
            property: "symmetric",
        });
    }
    let floor = -SYMMETRY_TOL * m.trace().abs();
    if min_eigenvalue(m) < floor {
        return Err(Error::NotDefinite {
            what,
            property: "positive semidefinite",
        });
    }
    Ok(())
}

pub fn check_pd(m: &Matrix, what: &'static str) -> Result<()> {
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite(what));
    }
    if max_asymmetry(m) > relative_tol(m) {
        return Err(Error::NotDefinite {
            what,
            property: "symmetric",
        });
    }
    if m.nrows() > 0 && m.clone().cholesky().is_none() {
        return Err(Error::NotDefinite {
            what,
            property: "positive definite",
        });
    }
    Ok(())
}

pub fn condition_estimate(m: &Matrix) -> f64 {
    let mut s = m.clone();
    symmetrize(&mut s);
    let eig = s.symmetric_eigenvalues();
    let hi = eig.iter().fold(0.0_f64, |a, x| a.max(x.abs()));
    let lo = eig.iter().fold(f64::INFINITY, |a, x| a.min(x.abs()));
    if lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Kalman gain `P Hᵀ S⁻¹` for symmetric `P` and SPD innovation covariance `S`,
/// obtained by a Cholesky solve of `S Kᵀ = H P`.
pub fn kalman_gain(cov: &Matrix, obs: &Matrix, innovation_cov: &Matrix) -> Result<Matrix> {
    let chol = innovation_cov
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular {
            what: "innovation covariance",
            condition: condition_estimate(innovation_cov),
        })?;
    let hp = obs * cov;
    Ok(chol.solve(&hp).transpose())
}

/// Unbiased (1/(M-1)) covariance of the columns of `members`.
pub fn sample_covariance(members: &Matrix) -> Matrix {
    let m = members.ncols();
    let mean = members.column_mean();
    let mut centered = members.clone();
    for mut col in centered.column_iter_mut() {
        col -= &mean;
    }
    let mut cov = &centered * centered.transpose() / (m as f64 - 1.0);
    symmetrize(&mut cov);
    cov
}

/// Square-root factor of a PSD covariance for sampling `N(0, cov)`.
///
/// Falls back to a symmetric eigendecomposition when Cholesky fails, which
/// covers singular (e.g. all-zero) covariances.
#[derive(Debug, Clone)]
pub struct GaussianFactor {
    factor: Matrix,
}

impl GaussianFactor {
    pub fn new(cov: &Matrix, what: &'static str) -> Result<Self> {
        check_psd(cov, what)?;
        if let Some(chol) = cov.clone().cholesky() {
            return Ok(Self { factor: chol.l() });
        }
        let mut s = cov.clone();
        symmetrize(&mut s);
        let eig = s.symmetric_eigen();
        let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
        let factor = &eig.eigenvectors * Matrix::from_diagonal(&roots);
        Ok(Self { factor })
    }

    pub fn dim(&self) -> usize {
        self.factor.nrows()
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector {
        let z = Vector::from_fn(self.dim(), |_, _| rng.sample(StandardNormal));
        &self.factor * z
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sample_covariance_two_members_is_single_outer_product() {
        let x = Matrix::from_column_slice(2, 2, &[1.0, 2.0, 3.0, 6.0]);
        let cov = sample_covariance(&x);
        // deviations are ±(1, 2); (1/(M-1)) * 2 * d dᵀ with M = 2
        let expected = Matrix::from_row_slice(2, 2, &[2.0, 4.0, 4.0, 8.0]);
        assert!((cov - expected).abs().max() < 1e-14);
    }

    #[test]
    fn psd_checks() {
        assert!(check_psd(&Matrix::zeros(3, 3), "zero").is_ok());
        let indefinite = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(check_psd(&indefinite, "m").is_err());
        let asym = Matrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(check_psd(&asym, "m").is_err());
        assert!(check_pd(&Matrix::identity(2, 2), "id").is_ok());
        assert!(check_pd(&Matrix::zeros(2, 2), "zero").is_err());
    }

    #[test]
    fn gain_fails_on_singular_innovation() {
        let err = kalman_gain(
            &Matrix::identity(2, 2),
            &Matrix::identity(2, 2),
            &Matrix::zeros(2, 2),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Singular { .. }));
    }

    #[test]
    fn degenerate_factor_draws_zero() {
        let f = GaussianFactor::new(&Matrix::zeros(2, 2), "zero").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(f.draw(&mut rng), Vector::zeros(2));
    }
}
