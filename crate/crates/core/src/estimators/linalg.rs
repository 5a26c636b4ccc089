use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};

pub(crate) const COLLINEAR_TOL: f64 = 1e-10;

pub(crate) struct LeastSquares {
    pub beta: DVector<f64>,
    /// `(X'X)^{-1}`.
    pub xtx_inv: DMatrix<f64>,
    pub resid: DVector<f64>,
}

/// Column norms, with zero-norm columns reported by name.
fn column_scales(x: &DMatrix<f64>, names: &[String]) -> Result<Vec<f64>> {
    let scales: Vec<f64> = x.column_iter().map(|c| c.norm()).collect();
    let zero: Vec<&str> = scales
        .iter()
        .zip(names)
        .filter(|(s, _)| **s == 0.0)
        .map(|(_, n)| n.as_str())
        .collect();
    if !zero.is_empty() {
        return Err(Error::estimation(format!(
            "collinear columns: {} (identically zero)",
            zero.join(", ")
        )));
    }
    Ok(scales)
}

/// Least squares via SVD of the column-normalised design. Fails when the
/// singular-value ratio drops below [`COLLINEAR_TOL`], naming the columns
/// that load on the near-null directions.
pub(crate) fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>, names: &[String]) -> Result<LeastSquares> {
    let k = x.ncols();
    if x.nrows() < k {
        return Err(Error::estimation(format!(
            "{} observations for {k} regressors",
            x.nrows()
        )));
    }
    if k == 0 {
        return Ok(LeastSquares {
            beta: DVector::zeros(0),
            xtx_inv: DMatrix::zeros(0, 0),
            resid: y.clone(),
        });
    }
    let scales = column_scales(x, names)?;
    let mut xs = x.clone();
    for (c, s) in scales.iter().enumerate() {
        xs.column_mut(c).unscale_mut(*s);
    }
    let svd = xs.svd(true, true);
    let sv = &svd.singular_values;
    let max = sv.max();
    let u = svd.u.as_ref().expect("requested U");
    let vt = svd.v_t.as_ref().expect("requested V'");
    let small: Vec<usize> = (0..sv.len()).filter(|i| sv[*i] < COLLINEAR_TOL * max).collect();
    if !small.is_empty() {
        let mut culprits: Vec<&str> = (0..k)
            .filter(|c| small.iter().any(|i| vt[(*i, *c)].abs() > 1e-6))
            .map(|c| names[c].as_str())
            .collect();
        culprits.dedup();
        return Err(Error::estimation(format!(
            "collinear columns: {}",
            culprits.join(", ")
        )));
    }
    let uty = u.transpose() * y;
    let mut coef_s = DVector::zeros(k);
    let mut inv_s = DMatrix::zeros(k, k);
    for i in 0..k {
        let vi = vt.row(i).transpose();
        coef_s += &vi * (uty[i] / sv[i]);
        inv_s += &vi * vi.transpose() / (sv[i] * sv[i]);
    }
    let beta = DVector::from_iterator(k, (0..k).map(|c| coef_s[c] / scales[c]));
    let xtx_inv = DMatrix::from_fn(k, k, |a, b| inv_s[(a, b)] / (scales[a] * scales[b]));
    let resid = y - x * &beta;
    Ok(LeastSquares { beta, xtx_inv, resid })
}

/// Inverse of a symmetric positive semi-definite matrix, rejecting
/// near-singular input.
pub(crate) fn spd_inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let d: Vec<f64> = (0..n).map(|i| m[(i, i)].abs().sqrt()).collect();
    if d.contains(&0.0) {
        return Err(Error::estimation(format!("{what} is singular")));
    }
    let scaled = DMatrix::from_fn(n, n, |a, b| m[(a, b)] / (d[a] * d[b]));
    let eig = scaled.symmetric_eigen();
    let max = eig.eigenvalues.max();
    if eig.eigenvalues.iter().any(|e| *e < COLLINEAR_TOL * max) {
        return Err(Error::estimation(format!("{what} is singular")));
    }
    let q = &eig.eigenvectors;
    let inv = q * DMatrix::from_diagonal(&eig.eigenvalues.map(|e| 1.0 / e)) * q.transpose();
    Ok(DMatrix::from_fn(n, n, |a, b| inv[(a, b)] / (d[a] * d[b])))
}

/// Two-sided p-value of a t statistic.
pub(crate) fn t_pvalue(estimate: f64, se: f64, dof: f64) -> f64 {
    if se == 0.0 {
        return if estimate == 0.0 { 1.0 } else { 0.0 };
    }
    let t = (estimate / se).abs();
    match StudentsT::new(0.0, 1.0, dof) {
        Ok(dist) => (2.0 * dist.sf(t)).min(1.0),
        Err(_) => f64::NAN,
    }
}

/// Two-sided p-value of a z statistic.
pub(crate) fn z_pvalue(estimate: f64, se: f64) -> f64 {
    if se == 0.0 {
        return if estimate == 0.0 { 1.0 } else { 0.0 };
    }
    let n = Normal::standard();
    (2.0 * n.sf((estimate / se).abs())).min(1.0)
}

/// `b' V^{-1} b`.
pub(crate) fn wald(beta: &DVector<f64>, cov: &DMatrix<f64>) -> Option<f64> {
    let chol = cov.clone().cholesky()?;
    Some(beta.dot(&chol.solve(beta)))
}
