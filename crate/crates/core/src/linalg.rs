//! Dense complex kernels: SVD pseudo-inverse, the orthogonal projector onto
//! the complement of a channel's column space, the first-order perturbation
//! of the pseudo-inverse and circularly-symmetric Gaussian sampling.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Dense complex matrix. Channels, pilots, data blocks, noise and the
/// derived error matrices all use this one representation.
pub type ComplexMatrix = DMatrix<Complex64>;

struct Svd {
    u: ComplexMatrix,
    v_t: ComplexMatrix,
    singular_values: Vec<f64>,
    tolerance: f64,
}

impl Svd {
    fn new(a: &ComplexMatrix) -> Result<Self> {
        if a.is_empty() {
            return Err(Error::DimensionMismatch("empty matrix".into()));
        }
        if a.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("svd input"));
        }
        let (rows, cols) = a.shape();
        let svd = a.clone().svd(true, true);
        let singular_values: Vec<f64> = svd.singular_values.iter().copied().collect();
        let sigma_max = singular_values.iter().copied().fold(0.0_f64, f64::max);
        let tolerance = rows.max(cols) as f64 * f64::EPSILON * sigma_max;
        Ok(Self {
            u: svd.u.expect("u requested"),
            v_t: svd.v_t.expect("v_t requested"),
            singular_values,
            tolerance,
        })
    }

    fn sigma_min(&self) -> f64 {
        self.singular_values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    fn is_full_rank(&self) -> bool {
        let sigma_max = self.singular_values.iter().copied().fold(0.0_f64, f64::max);
        sigma_max > 0.0 && self.sigma_min() > self.tolerance
    }

    /// `V diag(1/s) U^H`, dropping singular values at or below tolerance.
    fn pseudo_inverse(&self) -> (ComplexMatrix, usize) {
        let mut v_scaled = self.v_t.adjoint();
        let mut rank = 0;
        for (j, &s) in self.singular_values.iter().enumerate() {
            let inv = if s > self.tolerance && s > 0.0 {
                rank += 1;
                1.0 / s
            } else {
                0.0
            };
            v_scaled.column_mut(j).scale_mut(inv);
        }
        (v_scaled * self.u.adjoint(), rank)
    }
}

/// Moore–Penrose pseudo-inverse of a full-rank matrix.
///
/// Rank is judged against `max(rows, cols) * eps * sigma_max`; anything at
/// or below that is reported as [`Error::RankDeficient`]. For a tall `A`
/// the result equals `(A^H A)^{-1} A^H`.
pub fn pinv(a: &ComplexMatrix) -> Result<ComplexMatrix> {
    let svd = Svd::new(a)?;
    if !svd.is_full_rank() {
        return Err(Error::RankDeficient {
            sigma_min: svd.sigma_min(),
            tolerance: svd.tolerance,
        });
    }
    Ok(svd.pseudo_inverse().0)
}

/// Truncated pseudo-inverse that never fails on rank: singular values under
/// the tolerance are zeroed. Returns the numerical rank alongside.
pub fn pinv_truncated(a: &ComplexMatrix) -> Result<(ComplexMatrix, usize)> {
    Ok(Svd::new(a)?.pseudo_inverse())
}

/// `Pi = I_M - H (H^H H)^{-1} H^H`, the orthogonal projector onto the
/// orthogonal complement of the column space of `H`.
pub fn null_projector(h: &ComplexMatrix) -> Result<ComplexMatrix> {
    let h_pinv = pinv(h)?;
    Ok(projector_from(h, &h_pinv))
}

fn projector_from(h: &ComplexMatrix, h_pinv: &ComplexMatrix) -> ComplexMatrix {
    let m = h.nrows();
    ComplexMatrix::identity(m, m) - h * h_pinv
}

/// `(H^H H)^{-1}` for a full-column-rank `H`, computed as `H^# (H^#)^H`.
pub fn gram_inverse(h: &ComplexMatrix) -> Result<ComplexMatrix> {
    let h_pinv = pinv(h)?;
    Ok(&h_pinv * h_pinv.adjoint())
}

/// Linear part of the expansion of `(H + dH)^#` around `H`:
///
/// `H^# - H^# dH H^# + (H^H H)^{-1} dH^H Pi`.
pub fn taylor_pinv(h: &ComplexMatrix, dh: &ComplexMatrix) -> Result<ComplexMatrix> {
    if h.shape() != dh.shape() {
        return Err(Error::DimensionMismatch(format!(
            "perturbation is {:?}, channel is {:?}",
            dh.shape(),
            h.shape()
        )));
    }
    let h_pinv = pinv(h)?;
    let gram_inv = &h_pinv * h_pinv.adjoint();
    let pi = projector_from(h, &h_pinv);
    let first_order = &h_pinv * dh * &h_pinv;
    let leakage = gram_inv * dh.adjoint() * pi;
    Ok(h_pinv - first_order + leakage)
}

/// Least-squares fit `Y P^H (P P^H)^{-1}` of a channel from a received block
/// `Y` and the known pilot `P`.
pub fn ls_estimate(y: &ComplexMatrix, pilot: &ComplexMatrix) -> Result<ComplexMatrix> {
    if y.ncols() != pilot.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "received block has {} columns, pilot has {}",
            y.ncols(),
            pilot.ncols()
        )));
    }
    let pilot_h = pilot.adjoint();
    let gram = pilot * &pilot_h;
    let gram_inv = gram
        .cholesky()
        .ok_or_else(|| Error::InvalidPower("pilot Gram matrix is singular".into()))?
        .inverse();
    Ok(y * pilot_h * gram_inv)
}

/// I.i.d. circularly-symmetric complex Gaussian entries with `E|x|^2 =
/// variance`: real and imaginary parts are independent `N(0, variance/2)`.
///
/// A zero variance yields the zero matrix without touching the generator.
pub fn sample_complex_gaussian<R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    variance: f64,
    rng: &mut R,
) -> ComplexMatrix {
    if variance == 0.0 {
        return ComplexMatrix::zeros(rows, cols);
    }
    debug_assert!(variance > 0.0, "negative variance {variance}");
    let scale = (variance / 2.0).sqrt();
    let mut out = ComplexMatrix::zeros(rows, cols);
    // row-major fill so the draw order matches the documented entry order
    for i in 0..rows {
        for j in 0..cols {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            out[(i, j)] = Complex64::new(re * scale, im * scale);
        }
    }
    out
}

/// Frobenius norm.
pub fn frobenius(a: &ComplexMatrix) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}
