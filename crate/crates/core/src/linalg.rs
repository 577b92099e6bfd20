//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

pub fn symmetrize(m: &mut Mat) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

pub fn cholesky(m: &Mat) -> Option<Cholesky<f64, Dyn>> {
    if m.nrows() != m.ncols() || m.iter().any(|v| !v.is_finite()) {
        return None;
    }
    m.clone().cholesky()
}

/// Cholesky of a matrix that should be SPD but may have drifted numerically:
/// symmetrize, then retry with `jitter * I` added before giving up.
pub fn cholesky_jittered(m: &Mat, jitter: f64, what: &str) -> Result<Cholesky<f64, Dyn>> {
    let mut s = m.clone();
    symmetrize(&mut s);
    if let Some(c) = cholesky(&s) {
        return Ok(c);
    }
    let n = s.nrows();
    let scale = (s.trace().abs() / n.max(1) as f64).max(1.0);
    s += Mat::identity(n, n) * (jitter * scale);
    cholesky(&s).ok_or_else(|| Error::Numerical(format!("{what} is not positive definite")))
}

pub fn ln_det_chol(c: &Cholesky<f64, Dyn>) -> f64 {
    let l = c.l_dirty();
    2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>()
}

/// Squared Mahalanobis norm `xᵀ Σ⁻¹ x` given the Cholesky factor of Σ.
pub fn mahalanobis_sq(c: &Cholesky<f64, Dyn>, x: &Vector) -> f64 {
    let l = c.l();
    let y = l
        .solve_lower_triangular(x)
        .expect("Cholesky factor has a positive diagonal");
    y.norm_squared()
}

pub fn is_spd(m: &Mat) -> bool {
    let mut s = m.clone();
    symmetrize(&mut s);
    (m - &s).amax() <= 1e-9 * (1.0 + m.amax()) && cholesky(&s).is_some()
}

pub fn outer(a: &[f64], b: &[f64]) -> Mat {
    Mat::from_fn(a.len(), b.len(), |i, j| a[i] * b[j])
}
