//! Time-division multiplexed training: an `N1`-symbol pilot block, LS
//! channel estimation, then zero-forcing detection of `N2` data symbols.

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{ls_estimate, pinv, pinv_truncated, sample_complex_gaussian, taylor_pinv, ComplexMatrix};
use crate::signal::{qpsk_demodulate, qpsk_modulate, tdmt_pilot, BitFrame, PowerConfig, SystemDims};

#[derive(Debug, Clone, PartialEq)]
pub struct TdmtFrameResult {
    pub h_hat: ComplexMatrix,
    pub w_hat: ComplexMatrix,
    /// `w_hat - W`.
    pub delta_w: ComplexMatrix,
    pub bit_errors: u64,
    pub total_bits: u64,
    /// The estimate was numerically rank deficient and a truncated
    /// pseudo-inverse was used for detection.
    pub degenerate: bool,
}

/// `Y1 P^H (P P^H)^{-1}`.
pub fn ls_estimate_tdmt(y1: &ComplexMatrix, pilot: &ComplexMatrix) -> Result<ComplexMatrix> {
    ls_estimate(y1, pilot)
}

/// `K M sigma2_v / (N1 sigma2_pt)`.
pub fn mse_theory_tdmt(dims: &SystemDims, power: &PowerConfig) -> Result<f64> {
    if !(power.sigma2_pt > 0.0) {
        return Err(Error::InvalidPower("pilot power must be positive".into()));
    }
    Ok((dims.k * dims.m) as f64 * power.sigma2_v / (dims.n1 as f64 * power.sigma2_pt))
}

/// `pinv(h_hat) Y2`.
pub fn zf_detect_tdmt(h_hat: &ComplexMatrix, y2: &ComplexMatrix) -> Result<ComplexMatrix> {
    check_rows(h_hat, y2)?;
    Ok(pinv(h_hat)? * y2)
}

fn check_rows(h: &ComplexMatrix, y: &ComplexMatrix) -> Result<()> {
    if h.nrows() != y.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "channel has {} rows, received block has {}",
            h.nrows(),
            y.nrows()
        )));
    }
    Ok(())
}

/// Detection that falls back to the truncated pseudo-inverse; the flag is
/// set when that happened.
pub(crate) fn zf_detect_tolerant(h_hat: &ComplexMatrix, y: &ComplexMatrix) -> Result<(ComplexMatrix, bool)> {
    check_rows(h_hat, y)?;
    match pinv(h_hat) {
        Ok(p) => Ok((p * y, false)),
        Err(Error::RankDeficient { .. }) => {
            let (p, _) = pinv_truncated(h_hat)?;
            Ok((p * y, true))
        }
        Err(e) => Err(e),
    }
}

/// One block with a freshly drawn channel `H ~ CN(0, 1/K)`.
///
/// Draw order: `H`, bits, `V1`, `V2`.
pub fn run_frame_tdmt<R: Rng + ?Sized>(dims: &SystemDims, power: &PowerConfig, rng: &mut R) -> Result<TdmtFrameResult> {
    let h = sample_complex_gaussian(dims.m, dims.k, 1.0 / dims.k as f64, rng);
    run_frame_tdmt_given(dims, power, &h, rng)
}

/// One block through a fixed channel. Draw order: bits, `V1`, `V2`.
pub fn run_frame_tdmt_given<R: Rng + ?Sized>(
    dims: &SystemDims,
    power: &PowerConfig,
    h: &ComplexMatrix,
    rng: &mut R,
) -> Result<TdmtFrameResult> {
    if h.shape() != (dims.m, dims.k) {
        return Err(Error::DimensionMismatch(format!("channel is {:?}, expected ({}, {})", h.shape(), dims.m, dims.k)));
    }
    let bits = BitFrame::random(2 * dims.k * dims.n2, rng);
    let v1 = sample_complex_gaussian(dims.m, dims.n1, power.sigma2_v, rng);
    let v2 = sample_complex_gaussian(dims.m, dims.n2, power.sigma2_v, rng);

    let pilot = tdmt_pilot(dims.k, dims.n1, power.sigma2_pt)?;
    let w = qpsk_modulate(&bits, dims.k, dims.n2, power.sigma2_wt)?;
    let y1 = h * &pilot + v1;
    let y2 = h * &w + v2;

    let h_hat = ls_estimate_tdmt(&y1, &pilot)?;
    let (w_hat, degenerate) = zf_detect_tolerant(&h_hat, &y2)?;
    let decided = qpsk_demodulate(&w_hat);
    let bit_errors = decided.hamming(&bits)?;
    let delta_w = &w_hat - &w;
    Ok(TdmtFrameResult {
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
/// `-H^# dH W + (H^# - H^# dH H^# + (H^H H)^{-1} dH^H Pi) V2`.
pub fn noise_decomposition_tdmt(
    h: &ComplexMatrix,
    dh: &ComplexMatrix,
    w: &ComplexMatrix,
    v2: &ComplexMatrix,
) -> Result<ComplexMatrix> {
    let h_pinv = pinv(h)?;
    Ok(-(h_pinv * dh * w) + taylor_pinv(h, dh)? * v2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{frobenius, gram_inverse};
    use num_complex::Complex64;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn default_dims() -> SystemDims {
        SystemDims::new(4, 2, 32, 2).unwrap()
    }

    #[test]
    fn noiseless_estimate_is_exact() {
        let d = default_dims();
        let mut g = rng(1);
        let h = sample_complex_gaussian(4, 2, 0.5, &mut g);
        let p = tdmt_pilot(2, 2, 0.8).unwrap();
        assert!(frobenius(&(ls_estimate_tdmt(&(&h * &p), &p).unwrap() - &h)) < 1e-10);
        let v1 = sample_complex_gaussian(4, d.n1, 0.1, &mut g);
        let pure = ls_estimate_tdmt(&v1, &p).unwrap();
        let want = &v1 * p.adjoint() * Complex64::from(1.0 / (2.0 * 0.8));
        assert!(frobenius(&(pure - want)) < 1e-12);
        assert!(ls_estimate_tdmt(&v1, &tdmt_pilot(2, 2, 0.0).unwrap()).is_err());
    }

    #[test]
    fn mse_formula_and_empirical() {
        let d = default_dims();
        let pw = PowerConfig { sigma2_pt: 1.0, ..PowerConfig::unit(0.1) };
        assert!((mse_theory_tdmt(&d, &pw).unwrap() - 0.4).abs() < 1e-15);
        let d4 = SystemDims::new(4, 2, 32, 4).unwrap();
        assert!((mse_theory_tdmt(&d4, &pw).unwrap() - 0.2).abs() < 1e-15);
        assert!(mse_theory_tdmt(&d, &PowerConfig { sigma2_pt: 0.0, ..pw }).is_err());

        let mut g = rng(2);
        let p = tdmt_pilot(2, d.n1, 1.0).unwrap();
        let draws = 10_000;
        let mut acc = 0.0;
        for _ in 0..draws {
            let h = sample_complex_gaussian(4, 2, 0.5, &mut g);
            let v1 = sample_complex_gaussian(4, d.n1, 0.1, &mut g);
            let est = ls_estimate_tdmt(&(&h * &p + v1), &p).unwrap();
            acc += frobenius(&(est - h)).powi(2);
        }
        let mse = acc / draws as f64;
        assert!((mse / 0.4 - 1.0).abs() < 0.03, "mse {mse}");
    }

    #[test]
    fn zf_with_perfect_csi() {
        let mut g = rng(3);
        let h = sample_complex_gaussian(4, 2, 0.5, &mut g);
        let bits = BitFrame::random(2 * 2 * 30, &mut g);
        let w = qpsk_modulate(&bits, 2, 30, 1.0).unwrap();
        let w_hat = zf_detect_tdmt(&h, &(&h * &w)).unwrap();
        assert!(frobenius(&(w_hat - &w)) < 1e-10);
        assert!(zf_detect_tdmt(&h, &ComplexMatrix::zeros(3, 30)).is_err());
    }

    #[test]
    fn zf_noise_covariance_with_perfect_csi() {
        let mut g = rng(4);
        let h = sample_complex_gaussian(4, 2, 0.5, &mut g);
        let gi = gram_inverse(&h).unwrap();
        let draws = 40_000;
        let mut acc = [0.0; 2];
        for _ in 0..draws {
            let v2 = sample_complex_gaussian(4, 1, 0.2, &mut g);
            let dw = zf_detect_tdmt(&h, &v2).unwrap();
            for (i, a) in acc.iter_mut().enumerate() {
                *a += dw[(i, 0)].norm_sqr();
            }
        }
        for i in 0..2 {
            let want = 0.2 * gi[(i, i)].re;
            assert!((acc[i] / draws as f64 / want - 1.0).abs() < 0.03);
        }
    }

    #[test]
    fn noiseless_chain_has_no_errors() {
        let d = default_dims();
        let pw = PowerConfig::optimal(&d, 10.0).unwrap();
        let pw = PowerConfig { sigma2_v: 0.0, ..pw };
        let mut g = rng(5);
        for _ in 0..50 {
            let r = run_frame_tdmt(&d, &pw, &mut g).unwrap();
            assert_eq!(r.bit_errors, 0);
            assert_eq!(r.total_bits, 120);
            assert!(frobenius(&r.delta_w) < 1e-9);
            assert!(!r.degenerate);
        }
    }

    #[test]
    fn frames_are_deterministic() {
        let d = default_dims();
        let pw = PowerConfig::optimal(&d, 5.0).unwrap();
        let a = run_frame_tdmt(&d, &pw, &mut rng(6)).unwrap();
        let b = run_frame_tdmt(&d, &pw, &mut rng(6)).unwrap();
        assert_eq!(a, b);
        assert!(a.bit_errors <= a.total_bits);
    }

    #[test]
    fn decomposition_is_first_order() {
        // the model drops terms quadratic in the noise: relative to the
        // signal the gap is O(sigma2_v), a hundredfold drop per 20 dB
        let d = SystemDims::new(6, 3, 24, 6).unwrap();
        let pw = PowerConfig::optimal(&d, 10.0).unwrap();
        let mut g = rng(7);
        for _ in 0..20 {
            let h = sample_complex_gaussian(d.m, d.k, 1.0 / d.k as f64, &mut g);
            let bits = BitFrame::random(2 * d.k * d.n2, &mut g);
            let u1 = sample_complex_gaussian(d.m, d.n1, 1.0, &mut g);
            let u2 = sample_complex_gaussian(d.m, d.n2, 1.0, &mut g);
            let p = tdmt_pilot(d.k, d.n1, pw.sigma2_pt).unwrap();
            let w = qpsk_modulate(&bits, d.k, d.n2, pw.sigma2_wt).unwrap();
            let gap = |sigma2_v: f64| {
                let s = Complex64::from(sigma2_v.sqrt());
                let (v1, v2) = (&u1 * s, &u2 * s);
                let h_hat = ls_estimate_tdmt(&(&h * &p + &v1), &p).unwrap();
                let dh = &h_hat - &h;
                let exact = zf_detect_tdmt(&h_hat, &(&h * &w + &v2)).unwrap() - &w;
                let model = noise_decomposition_tdmt(&h, &dh, &w, &v2).unwrap();
                frobenius(&(exact - model)) / frobenius(&w)
            };
            let (coarse, fine) = (gap(1e-4), gap(1e-6));
            assert!(fine < 1e-4, "relative discrepancy {fine}");
            let drop = coarse / fine;
            assert!((50.0..200.0).contains(&drop), "drop {drop}");
        }
    }

    #[test]
    fn conditional_variance_tracks_delta() {
        // smaller than the integration test version; loose tolerance
        let d = SystemDims::new(16, 8, 256, 64).unwrap();
        let pw = PowerConfig::optimal(&d, 15.0).unwrap();
        let delta = crate::theory::delta_t(&d, &pw).unwrap();
        let h = sample_complex_gaussian(d.m, d.k, 1.0 / d.k as f64, &mut rng(8));
        let gi = gram_inverse(&h).unwrap();
        let mut g = rng(9);
        let trials = 300;
        let mut acc = 0.0;
        let mut count = 0usize;
        for _ in 0..trials {
            let r = run_frame_tdmt_given(&d, &pw, &h, &mut g).unwrap();
            for k in 0..d.n2 {
                acc += r.delta_w[(0, k)].norm_sqr();
                count += 1;
            }
        }
        let want = pw.sigma2_wt * delta * gi[(0, 0)].re;
        let got = acc / count as f64;
        assert!((got / want - 1.0).abs() < 0.15, "{got} vs {want}");
    }
}
