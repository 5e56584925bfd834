//! Small dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

pub(crate) const LN_2PI: f64 = 1.837_877_066_409_345_3;

pub fn cholesky(m: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    if !m.iter().all(|v| v.is_finite()) {
        return Err(Error::Numeric("matrix has non-finite entries".into()));
    }
    m.clone()
        .cholesky()
        .ok_or_else(|| Error::Numeric("matrix is not positive definite".into()))
}

/// Log-determinant from a Cholesky factor.
pub fn log_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

/// Inverse of a symmetric positive-definite matrix, symmetrized.
pub fn spd_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let inv = cholesky(m)?.inverse();
    Ok(symmetrize(inv))
}

pub fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    let t = m.transpose();
    (m + t) * 0.5
}

/// Log density of `N(mean, cov)` at `x`.
pub fn mvn_log_density(x: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> Result<f64> {
    if x.len() != mean.len() || cov.nrows() != x.len() || cov.ncols() != x.len() {
        return Err(Error::Usage(format!(
            "dimension mismatch: x {}, mean {}, cov {}x{}",
            x.len(),
            mean.len(),
            cov.nrows(),
            cov.ncols()
        )));
    }
    let chol = cholesky(cov)?;
    let diff = x - mean;
    // ||L^{-1} diff||^2 is the Mahalanobis term.
    let z = chol
        .l_dirty()
        .solve_lower_triangular(&diff)
        .ok_or_else(|| Error::Numeric("triangular solve failed".into()))?;
    let d = x.len() as f64;
    Ok(-0.5 * (d * LN_2PI + log_det(&chol) + z.norm_squared()))
}

/// `vᵀ M v` for a dense symmetric `M` stored row-major in `m`.
#[inline]
pub(crate) fn quad_form(m: &[f64], v: &[f64]) -> f64 {
    let d = v.len();
    let mut acc = 0.0;
    for r in 0..d {
        let row = &m[r * d..(r + 1) * d];
        let mut s = 0.0;
        for c in 0..d {
            s += row[c] * v[c];
        }
        acc += v[r] * s;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_density_at_mean() {
        let x = DVector::from_vec(vec![0.3, -1.0]);
        let v = mvn_log_density(&x, &x, &DMatrix::identity(2, 2)).unwrap();
        assert!((v + (2.0 * std::f64::consts::PI).ln()).abs() < 1e-14);
    }

    #[test]
    fn rejects_indefinite() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(cholesky(&m).is_err());
    }

    #[test]
    fn quad_form_matches_nalgebra() {
        let m = DMatrix::from_row_slice(3, 3, &[2.0, 0.1, 0.3, 0.1, 1.0, -0.2, 0.3, -0.2, 4.0]);
        let v = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let row_major: Vec<f64> = m.transpose().iter().copied().collect();
        let expect = (v.transpose() * &m * &v)[(0, 0)];
        assert!((quad_form(&row_major, v.as_slice()) - expect).abs() < 1e-12);
    }
}
