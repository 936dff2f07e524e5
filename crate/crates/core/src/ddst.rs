//! Data-dependent superimposed training: the data block is projected away
//! from the `K`-periodic pilot (`W (I - J)`), the pilot is added on top, and
//! the receiver removes the pilot with the same projection before
//! zero-forcing.

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{ls_estimate, pinv, sample_complex_gaussian, taylor_pinv, ComplexMatrix};
use crate::signal::{
    ddst_pilot, distortion_apply, periodic_component, qpsk_demodulate, qpsk_modulate, BitFrame, PowerConfig,
    SystemDims,
};
use crate::tdmt::zf_detect_tolerant;

#[derive(Debug, Clone, PartialEq)]
pub struct DdstFrameResult {
    pub h_hat: ComplexMatrix,
    pub w_hat: ComplexMatrix,
    /// `w_hat - W`.
    pub delta_w: ComplexMatrix,
    pub bit_errors: u64,
    pub total_bits: u64,
    pub degenerate: bool,
}

/// `W (I - J) + P`.
pub fn transmit_ddst(w: &ComplexMatrix, pilot: &ComplexMatrix, dims: &SystemDims) -> Result<ComplexMatrix> {
    if w.shape() != pilot.shape() || w.shape() != (dims.k, dims.n) {
        return Err(Error::DimensionMismatch(format!(
            "data {:?} and pilot {:?} must both be ({}, {})",
            w.shape(),
            pilot.shape(),
            dims.k,
            dims.n
        )));
    }
    Ok(distortion_apply(w, dims)? + pilot)
}

/// `Y P^H (P P^H)^{-1}`; the distorted data is orthogonal to the pilot and
/// drops out.
pub fn ls_estimate_ddst(y: &ComplexMatrix, pilot: &ComplexMatrix) -> Result<ComplexMatrix> {
    ls_estimate(y, pilot)
}

/// `pinv(h_hat) Y (I - J)`. The projection also cancels `H P`.
pub fn zf_detect_ddst(h_hat: &ComplexMatrix, y: &ComplexMatrix, dims: &SystemDims) -> Result<ComplexMatrix> {
    let cleaned = distortion_apply(y, dims)?;
    if h_hat.nrows() != cleaned.nrows() {
        return Err(Error::DimensionMismatch("channel and received block row counts differ".into()));
    }
    Ok(pinv(h_hat)? * cleaned)
}

/// MSE of the LS estimate, `K M sigma2_v / (N sigma2_pd)`.
pub fn mse_theory_ddst(dims: &SystemDims, power: &PowerConfig) -> Result<f64> {
    if !(power.sigma2_pd > 0.0) {
        return Err(Error::InvalidPower("pilot power must be positive".into()));
    }
    Ok((dims.k * dims.m) as f64 * power.sigma2_v / (dims.n as f64 * power.sigma2_pd))
}

/// One block with a freshly drawn channel. Draw order: `H`, bits, `V`.
pub fn run_frame_ddst<R: Rng + ?Sized>(dims: &SystemDims, power: &PowerConfig, rng: &mut R) -> Result<DdstFrameResult> {
    let h = sample_complex_gaussian(dims.m, dims.k, 1.0 / dims.k as f64, rng);
    run_frame_ddst_given(dims, power, &h, rng)
}

/// One block through a fixed channel. Draw order: bits, `V`.
pub fn run_frame_ddst_given<R: Rng + ?Sized>(
    dims: &SystemDims,
    power: &PowerConfig,
    h: &ComplexMatrix,
    rng: &mut R,
) -> Result<DdstFrameResult> {
    let bits = BitFrame::random(2 * dims.k * dims.n, rng);
    let w = qpsk_modulate(&bits, dims.k, dims.n, power.sigma2_wd)?;
    run_block_ddst(dims, power, h, &w, &bits, rng)
}

/// Chain for a given data block; draws only the noise.
pub(crate) fn run_block_ddst<R: Rng + ?Sized>(
    dims: &SystemDims,
    power: &PowerConfig,
    h: &ComplexMatrix,
    w: &ComplexMatrix,
    bits: &BitFrame,
    rng: &mut R,
) -> Result<DdstFrameResult> {
    if h.shape() != (dims.m, dims.k) {
        return Err(Error::DimensionMismatch(format!("channel is {:?}, expected ({}, {})", h.shape(), dims.m, dims.k)));
    }
    let v = sample_complex_gaussian(dims.m, dims.n, power.sigma2_v, rng);
    let pilot = ddst_pilot(dims.k, dims.n, power.sigma2_pd)?;
    let x = transmit_ddst(w, &pilot, dims)?;
    let y = h * x + v;

    let h_hat = ls_estimate_ddst(&y, &pilot)?;
    let (w_hat, degenerate) = zf_detect_tolerant(&h_hat, &distortion_apply(&y, dims)?)?;
    let bit_errors = qpsk_demodulate(&w_hat).hamming(bits)?;
    let delta_w = &w_hat - w;
    Ok(DdstFrameResult {
        h_hat,
        w_hat,
        delta_w,
        bit_errors,
        total_bits: bits.len() as u64,
        degenerate,
    })
}

/// First-order model of the post-processing noise,
///
/// `-W J - H^# dH W (I-J) + (H^# - H^# dH H^# + (H^H H)^{-1} dH^H Pi) V (I-J)`.
pub fn noise_decomposition_ddst(
    h: &ComplexMatrix,
    dh: &ComplexMatrix,
    w: &ComplexMatrix,
    v: &ComplexMatrix,
    dims: &SystemDims,
) -> Result<ComplexMatrix> {
    let h_pinv = pinv(h)?;
    let wd = distortion_apply(w, dims)?;
    let vd = distortion_apply(v, dims)?;
    Ok(-periodic_component(w, dims.k)? - h_pinv * dh * wd + taylor_pinv(h, dh)? * vd)
}
