//! Closed-form large-system quantities: the error-variance parameters
//! `delta_t` and `delta_d`, the Gaussian tail, the `J(m, a, b)` integral,
//! BER expressions for both schemes and their high-SNR forms, the DDST noise
//! mixture and the theoretical characteristic functions.

use num_complex::Complex64;
use serde::Serialize;
use libm::erfc;
use libm::lgamma as ln_gamma;

use crate::error::{Error, Result};
use crate::signal::{PowerConfig, SystemDims};

/// Error-variance parameters of both schemes at one operating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TheoryParams {
    pub delta_t: f64,
    pub delta_d: f64,
    /// `sqrt(1 / (2 K delta_t + 1))`.
    pub mu_t: f64,
}

impl TheoryParams {
    pub fn new(dims: &SystemDims, power: &PowerConfig) -> Result<Self> {
        let delta_t = delta_t(dims, power)?;
        let delta_d = delta_d(dims, power)?;
        let mu_t = (1.0 / (2.0 * dims.k as f64 * delta_t + 1.0)).sqrt();
        Ok(Self { delta_t, delta_d, mu_t })
    }
}

fn check_regime(dims: &SystemDims) -> Result<()> {
    if dims.c2() <= 1.0 {
        return Err(Error::Regime(format!("M/K = {} must exceed 1", dims.c2())));
    }
    let c1 = dims.c1();
    if !(c1 > 0.0 && c1 < 1.0) {
        return Err(Error::Regime(format!("K/N = {c1} must lie in (0, 1)")));
    }
    Ok(())
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidPower(format!("{name} = {v} must be positive")))
    }
}

fn check_noise(v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidPower(format!("noise power {v}")))
    }
}

/// TDMT error variance for pilot power `p`, data power `w`, noise `v`:
///
/// `c~1 v/p + v/w + c~1 kappa v^2 / (w p)` with `c~1 = K/N1`.
pub fn delta_t_from(dims: &SystemDims, p: f64, w: f64, v: f64) -> Result<f64> {
    check_regime(dims)?;
    check_positive("pilot power", p)?;
    check_positive("data power", w)?;
    check_noise(v)?;
    let ct = dims.c1_tilde();
    Ok(ct * v / p + v / w + ct * dims.kappa() * v * v / (w * p))
}

/// DDST error variance:
///
/// `(1 - c1) (c1 v/p + v/w + c1 kappa v^2 / (p w))` with `c1 = K/N`.
pub fn delta_d_from(dims: &SystemDims, p: f64, w: f64, v: f64) -> Result<f64> {
    check_regime(dims)?;
    check_positive("pilot power", p)?;
    check_positive("data power", w)?;
    check_noise(v)?;
    let c1 = dims.c1();
    Ok((1.0 - c1) * (c1 * v / p + v / w + c1 * dims.kappa() * v * v / (p * w)))
}

pub fn delta_t(dims: &SystemDims, power: &PowerConfig) -> Result<f64> {
    delta_t_from(dims, power.sigma2_pt, power.sigma2_wt, power.sigma2_v)
}

pub fn delta_d(dims: &SystemDims, power: &PowerConfig) -> Result<f64> {
    delta_d_from(dims, power.sigma2_pd, power.sigma2_wd, power.sigma2_v)
}

/// Gaussian tail `Q(x) = erfc(x / sqrt 2) / 2`.
pub fn q_function(x: f64) -> f64 {
    if x == f64::INFINITY {
        return 0.0;
    }
    if x == f64::NEG_INFINITY {
        return 1.0;
    }
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

/// `C(n, k)` as `f64`: exact through `u128` while it fits, log-gamma beyond.
pub fn binomial(n: u64, k: u64) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) is divisible by (i + 1) at every step
        match acc.checked_mul((n - i) as u128) {
            Some(v) => acc = v / (i + 1) as u128,
            None => return ln_binomial(n, k).exp(),
        }
    }
    acc as f64
}

pub fn ln_binomial(n: u64, k: u64) -> f64 {
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

/// Compensated (Neumaier) sum.
pub fn neumaier_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// `J(m, a, b) = 1/2 [1 - mu sum_{k<m} C(2k,k) ((1 - mu^2)/4)^k]` with
/// `mu = sqrt(c / (1 + c))`, `c = b / (2a)`.
///
/// Equals `E Q(sqrt(b g))` for `g ~ Gamma(m, rate a)`.
pub fn j_function(m: u32, a: f64, b: f64) -> Result<f64> {
    if m == 0 {
        return Err(Error::InvalidArgument("J needs m >= 1".into()));
    }
    if !(a > 0.0 && a.is_finite()) {
        return Err(Error::InvalidArgument(format!("J needs a > 0, got {a}")));
    }
    if !(b >= 0.0 && b.is_finite()) {
        return Err(Error::InvalidArgument(format!("J needs b >= 0, got {b}")));
    }
    Ok(j_unchecked(m, a, b))
}

/// [`j_function`] extended by continuity to `a = 0`, where the Gamma
/// variable has infinite mean and `J = 0` unless `b = 0`.
pub fn j_limit(m: u32, a: f64, b: f64) -> Result<f64> {
    if a == 0.0 && m >= 1 && b >= 0.0 {
        return Ok(if b == 0.0 { 0.5 } else { 0.0 });
    }
    j_function(m, a, b)
}

fn j_unchecked(m: u32, a: f64, b: f64) -> f64 {
    if b == 0.0 {
        return 0.5;
    }
    let c = b / (2.0 * a);
    // x = (1 - mu^2)/4 written without the cancellation in 1 - mu^2
    let x = 0.25 / (1.0 + c);
    let mu = (c / (1.0 + c)).sqrt();
    if 4.0 * x <= 0.95 {
        // sum_{k>=0} C(2k,k) x^k = 1/mu, so 1 - mu S_m = mu * (tail from m)
        let mut term = 1.0;
        for k in 0..m {
            term *= 2.0 * (2 * k + 1) as f64 / (k + 1) as f64 * x;
        }
        let mut tail = 0.0;
        let mut k = m;
        while term > 1e-18 * tail || tail == 0.0 {
            tail += term;
            term *= 2.0 * (2 * k + 1) as f64 / (k + 1) as f64 * x;
            k += 1;
            if term == 0.0 {
                break;
            }
        }
        0.5 * mu * tail
    } else {
        let mut term = 1.0;
        let mut partial = 0.0;
        for k in 0..m {
            partial += term;
            term *= 2.0 * (2 * k + 1) as f64 / (k + 1) as f64 * x;
        }
        0.5 * (1.0 - mu * partial)
    }
}

/// Leading small-`a` term of `J`: `C(2m-1, m) (a / (2b))^m`.
pub fn j_highsnr(m: u32, a: f64, b: f64) -> f64 {
    binomial(2 * m as u64 - 1, m as u64) * (a / (2.0 * b)).powi(m as i32)
}

/// TDMT BER for a given `delta_t`: `J(M - K + 1, K delta_t, 1)`.
pub fn ber_tdmt_from_delta(dims: &SystemDims, delta: f64) -> Result<f64> {
    j_limit(dims.diversity() as u32, dims.k as f64 * delta, 1.0)
}

pub fn ber_tdmt_theory(dims: &SystemDims, power: &PowerConfig) -> Result<f64> {
    ber_tdmt_from_delta(dims, delta_t(dims, power)?)
}

/// Discrete part of the DDST post-processing noise on one real axis.
///
/// With `L = 1/c1` blocks, the distortion of a symbol contains `L - 1` other
/// data symbols of the same row, each `+-sqrt(sigma2_wd / 2)` scaled by
/// `c1`. Offsets are `c1 a (L - 2s - 1)`, `s = 0..L`, with binomial weights.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixtureSpec {
    pub offsets: Vec<f64>,
    pub probs: Vec<f64>,
    pub count: usize,
}

/// Mixture for `blocks = 1/c1` distortion blocks.
pub fn mixture_spec(blocks: usize, sigma2_wd: f64) -> Result<MixtureSpec> {
    if blocks == 0 {
        return Err(Error::InvalidArgument("1/c1 must be a positive integer".into()));
    }
    if blocks == 1 {
        return Err(Error::Degenerate(
            "N = K: the distortion removes all data, the mixture collapses to a point".into(),
        ));
    }
    let amp = (sigma2_wd / 2.0).sqrt();
    let c1 = 1.0 / blocks as f64;
    let l = blocks as u64;
    let offsets = (0..l).map(|s| c1 * amp * (l as f64 - 2.0 * s as f64 - 1.0)).collect();
    let probs = (0..l).map(|s| mixture_weight(l - 1, s)).collect();
    Ok(MixtureSpec { offsets, probs, count: blocks })
}

/// [`mixture_spec`] from the ratio `c1`, which must be the reciprocal of an
/// integer.
pub fn mixture_spec_c1(c1: f64, sigma2_wd: f64) -> Result<MixtureSpec> {
    if !(c1 > 0.0 && c1 <= 1.0) {
        return Err(Error::InvalidArgument(format!("c1 = {c1} outside (0, 1]")));
    }
    let inv = 1.0 / c1;
    let blocks = inv.round();
    if (inv - blocks).abs() > 1e-9 * inv {
        return Err(Error::InvalidArgument(format!("1/c1 = {inv} is not an integer")));
    }
    mixture_spec(blocks as usize, sigma2_wd)
}

/// `C(n, s) / 2^n`.
fn mixture_weight(n: u64, s: u64) -> f64 {
    let c = binomial(n, s);
    if c.is_finite() && n < 1000 {
        c * 0.5f64.powi(n as i32)
    } else {
        (ln_binomial(n, s) - n as f64 * std::f64::consts::LN_2).exp()
    }
}

fn ddst_blocks(dims: &SystemDims) -> Result<u64> {
    let l = dims.blocks();
    if l < 2 {
        return Err(Error::Degenerate("N = K leaves no data after distortion".into()));
    }
    Ok(l as u64)
}

/// DDST BER for a given `delta_d`:
///
/// `2^-(L-1) sum_{s<L} C(L-1, s) J(M - K + 1, K delta_d, 4 s^2 c1^2)`.
pub fn ber_ddst_from_delta(dims: &SystemDims, delta: f64) -> Result<f64> {
    let l = ddst_blocks(dims)?;
    let m = dims.diversity() as u32;
    let a = dims.k as f64 * delta;
    let c1 = dims.c1();
    let mut terms = Vec::with_capacity(l as usize);
    for s in 0..l {
        let b = 4.0 * (s * s) as f64 * c1 * c1;
        terms.push(mixture_weight(l - 1, s) * j_limit(m, a, b)?);
    }
    Ok(neumaier_sum(terms))
}

pub fn ber_ddst_theory(dims: &SystemDims, power: &PowerConfig) -> Result<f64> {
    ber_ddst_from_delta(dims, delta_d(dims, power)?)
}

/// SNR-independent DDST floor `2^(-1/c1)`.
pub fn ber_floor(dims: &SystemDims) -> Result<f64> {
    let l = ddst_blocks(dims)?;
    Ok(0.5f64.powi(l as i32))
}

/// Density of `Gamma(M - K + 1, rate K delta)`:
/// `(K delta)^m x^(m-1) exp(-K delta x) / (m-1)!`.
pub fn gamma_pdf(x: f64, m: usize, k: usize, delta: f64) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(Error::InvalidArgument(format!("delta = {delta} must be positive")));
    }
    if m < k {
        return Err(Error::InvalidDims(format!("M={m} < K={k}")));
    }
    if x < 0.0 {
        return Ok(0.0);
    }
    let shape = (m - k + 1) as f64;
    let rate = k as f64 * delta;
    if x == 0.0 {
        return Ok(if m == k { rate } else { 0.0 });
    }
    let ln = shape * rate.ln() + (shape - 1.0) * x.ln() - rate * x - ln_gamma(shape);
    Ok(ln.exp())
}

/// `C(2(M-K)+1, M-K+1) (K delta_t / 2)^(M-K+1)`.
pub fn ber_tdmt_highsnr(dims: &SystemDims, power: &PowerConfig) -> Result<f64> {
    let d = delta_t(dims, power)?;
    Ok(j_highsnr(dims.diversity() as u32, dims.k as f64 * d, 1.0))
}

/// Floor plus the leading small-`delta` term of each `s >= 1` component.
pub fn ber_ddst_highsnr(dims: &SystemDims, power: &PowerConfig) -> Result<f64> {
    let l = ddst_blocks(dims)?;
    let d = delta_d(dims, power)?;
    let m = dims.diversity() as u32;
    let a = dims.k as f64 * d;
    let c1 = dims.c1();
    let mut terms = vec![0.5f64.powi(l as i32)];
    for s in 1..l {
        let b = 4.0 * (s * s) as f64 * c1 * c1;
        terms.push(mixture_weight(l - 1, s) * j_highsnr(m, a, b));
    }
    Ok(neumaier_sum(terms))
}

/// `(J(M-K+1, K delta_d, 1), BER_d)`; the first never exceeds the second.
pub fn ber_bound_gap(dims: &SystemDims, power: &PowerConfig) -> Result<(f64, f64)> {
    let d = delta_d(dims, power)?;
    let lower = j_limit(dims.diversity() as u32, dims.k as f64 * d, 1.0)?;
    let ber_d = ber_ddst_from_delta(dims, d)?;
    debug_assert!(ber_d >= lower * (1.0 - 1e-12), "ordering bound violated: {ber_d} < {lower}");
    Ok((lower, ber_d))
}

/// Intermediate bound `J(M-K+1, K delta_d, 1 - c1)`.
pub fn ber_bound_intermediate(dims: &SystemDims, power: &PowerConfig) -> Result<f64> {
    let d = delta_d(dims, power)?;
    j_limit(dims.diversity() as u32, dims.k as f64 * d, 1.0 - dims.c1())
}

/// `E exp(j Re(conj(z) X))` for circular Gaussian `X` with `E|X|^2 = variance`.
pub fn cf_theory_tdmt(z: Complex64, variance: f64) -> Complex64 {
    Complex64::from((-variance * z.norm_sqr() / 4.0).exp())
}

fn axis_cf(t: f64, mixture: &MixtureSpec) -> Complex64 {
    mixture
        .offsets
        .iter()
        .zip(&mixture.probs)
        .map(|(&a, &p)| Complex64::from_polar(p, t * a))
        .sum()
}

/// Gaussian CF times independent copies of the discrete mixture on the real
/// and imaginary axes.
pub fn cf_theory_ddst(z: Complex64, mixture: &MixtureSpec, variance: f64) -> Complex64 {
    axis_cf(z.re, mixture) * axis_cf(z.im, mixture) * cf_theory_tdmt(z, variance)
}

/// [`cf_theory_ddst`] for noise with an additional deterministic `shift`,
/// as when the own symbol's share of the distortion is held fixed.
pub fn cf_theory_ddst_shifted(z: Complex64, mixture: &MixtureSpec, shift: Complex64, variance: f64) -> Complex64 {
    let phase = z.re * shift.re + z.im * shift.im;
    cf_theory_ddst(z, mixture, variance) * Complex64::from_polar(1.0, phase)
}
