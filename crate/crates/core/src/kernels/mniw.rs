use rand::Rng;
use serde::{Deserialize, Serialize};

use super::basic::{ln_gamma_draw, std_normal};
use crate::error::{Error, Result};
use crate::linalg::{cholesky, is_spd, symmetrize, Mat};

/// Matrix-normal inverse-Wishart prior for a linear-Gaussian regression
/// `y = A x + e`, `e ~ N(0, Σ)`:
/// `Σ ~ IW(s0, n0)` and `A | Σ ~ MN(m, Σ, v)` (row covariance Σ, column
/// covariance v). `m` is d×p, `v` p×p, `s0` d×d.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MniwParams {
    pub m: Mat,
    pub v: Mat,
    pub s0: Mat,
    pub n0: f64,
}

impl MniwParams {
    pub fn dim(&self) -> usize {
        self.s0.nrows()
    }

    pub fn regressor_dim(&self) -> usize {
        self.v.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        let p = self.regressor_dim();
        if self.m.nrows() != d || self.m.ncols() != p || self.v.ncols() != p || self.s0.ncols() != d {
            return Err(Error::input(format!(
                "MNIW shapes disagree: M {}x{}, V {}x{}, S0 {}x{}",
                self.m.nrows(),
                self.m.ncols(),
                self.v.nrows(),
                self.v.ncols(),
                self.s0.nrows(),
                self.s0.ncols()
            )));
        }
        if !is_spd(&self.v) {
            return Err(Error::input("MNIW column covariance V is not SPD"));
        }
        if !is_spd(&self.s0) {
            return Err(Error::input("MNIW scale S0 is not SPD"));
        }
        if !(self.n0 > d as f64 - 1.0) || !self.n0.is_finite() {
            return Err(Error::input(format!(
                "MNIW degrees of freedom {} must exceed d-1 = {}",
                self.n0,
                d as f64 - 1.0
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MniwDraw {
    pub a: Mat,
    pub sigma: Mat,
}

/// Σ ~ IW(scale, df) through the Bartlett decomposition, returned with a
/// square-root factor G (Σ = G Gᵀ) that callers can reuse.
fn inverse_wishart_with_factor<R: Rng + ?Sized>(scale: &Mat, df: f64, rng: &mut R) -> Result<(Mat, Mat)> {
    let d = scale.nrows();
    let u = cholesky(scale)
        .ok_or_else(|| Error::input("inverse-Wishart scale is not SPD"))?
        .unpack();
    let mut a = Mat::zeros(d, d);
    for i in 0..d {
        let k = df - i as f64;
        a[(i, i)] = (2.0 * ln_gamma_draw(0.5 * k, rng).exp()).sqrt();
        for j in 0..i {
            a[(i, j)] = std_normal(rng);
        }
    }
    // Σ = U A⁻ᵀ A⁻¹ Uᵀ where S = U Uᵀ.
    let a_inv = a
        .solve_lower_triangular(&Mat::identity(d, d))
        .ok_or_else(|| Error::Numerical("Bartlett factor is singular".into()))?;
    let g = &u * a_inv.transpose();
    let mut sigma = &g * g.transpose();
    symmetrize(&mut sigma);
    Ok((sigma, g))
}

pub fn sample_inverse_wishart<R: Rng + ?Sized>(scale: &Mat, df: f64, rng: &mut R) -> Result<Mat> {
    if !(df > scale.nrows() as f64 - 1.0) {
        return Err(Error::input(format!("inverse-Wishart df {df} too small")));
    }
    Ok(inverse_wishart_with_factor(scale, df, rng)?.0)
}

/// A = M + G Z L_Vᵀ with Z i.i.d. N(0, 1), where G Gᵀ = Σ and L_V L_Vᵀ = V.
pub fn sample_matrix_normal<R: Rng + ?Sized>(m: &Mat, row_factor: &Mat, v: &Mat, rng: &mut R) -> Result<Mat> {
    let lv = cholesky(v)
        .ok_or_else(|| Error::input("matrix-normal column covariance is not SPD"))?
        .unpack();
    let z = Mat::from_fn(m.nrows(), m.ncols(), |_, _| std_normal(rng));
    Ok(m + row_factor * z * lv.transpose())
}

pub fn sample_matrix_normal_inverse_wishart<R: Rng + ?Sized>(prior: &MniwParams, rng: &mut R) -> Result<MniwDraw> {
    prior.validate()?;
    let (sigma, g) = inverse_wishart_with_factor(&prior.s0, prior.n0, rng)?;
    let a = sample_matrix_normal(&prior.m, &g, &prior.v, rng)?;
    Ok(MniwDraw { a, sigma })
}
