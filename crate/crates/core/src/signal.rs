//! System dimensions, power bookkeeping, QPSK/Gray mapping, pilot sequences
//! and the data-distortion operator `D = I - J`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::ComplexMatrix;

/// Antenna counts and block lengths.
///
/// `n` is the full block length; TDMT splits it into `n1` pilot and
/// `n2 = n - n1` data symbols, DDST uses all `n` for superimposed data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemDims {
    pub m: usize,
    pub k: usize,
    pub n: usize,
    pub n1: usize,
    pub n2: usize,
}

impl SystemDims {
    /// Validates `M > K >= 1`, `K <= N1 < N` and `K | N`.
    pub fn new(m: usize, k: usize, n: usize, n1: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidDims("K must be at least 1".into()));
        }
        if m <= k {
            return Err(Error::InvalidDims(format!("need M > K, got M={m}, K={k}")));
        }
        if n1 < k {
            return Err(Error::InvalidDims(format!("need N1 >= K, got N1={n1}, K={k}")));
        }
        if n1 >= n {
            return Err(Error::InvalidDims(format!("need N1 < N, got N1={n1}, N={n}")));
        }
        if !n.is_multiple_of(k) {
            return Err(Error::InvalidDims(format!("K={k} does not divide N={n}")));
        }
        Ok(Self { m, k, n, n1, n2: n - n1 })
    }

    /// `K / N`. Identical for both schemes since `N = N1 + N2`.
    pub fn c1(&self) -> f64 {
        self.k as f64 / self.n as f64
    }

    /// `K / N1 = c1 (1 + r)`.
    pub fn c1_tilde(&self) -> f64 {
        self.k as f64 / self.n1 as f64
    }

    /// `M / K`.
    pub fn c2(&self) -> f64 {
        self.m as f64 / self.k as f64
    }

    /// `N2 / N1`.
    pub fn r(&self) -> f64 {
        self.n2 as f64 / self.n1 as f64
    }

    /// `(c2 + 1) / (c2 - 1)`, the estimation-noise interaction factor.
    pub fn kappa(&self) -> f64 {
        let c2 = self.c2();
        (c2 + 1.0) / (c2 - 1.0)
    }

    /// Number of distortion blocks `N / K`, i.e. `1 / c1`.
    pub fn blocks(&self) -> usize {
        self.n / self.k
    }

    /// Diversity order `M - K + 1`.
    pub fn diversity(&self) -> usize {
        self.m - self.k + 1
    }

    /// Same antennas with a new block length, keeping `N1` when possible.
    pub fn with_n(&self, n: usize) -> Result<Self> {
        Self::new(self.m, self.k, n, self.n1.min(n.saturating_sub(1)).max(self.k))
    }

    pub fn with_n1(&self, n1: usize) -> Result<Self> {
        Self::new(self.m, self.k, self.n, n1)
    }
}

/// The six power parameters of both schemes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerConfig {
    pub sigma2_pt: f64,
    pub sigma2_wt: f64,
    pub sigma2_pd: f64,
    pub sigma2_wd: f64,
    pub sigma2_v: f64,
    pub sigma2_t: f64,
}

/// `sigma2_T * 10^(-snr/10)`.
pub fn noise_power(snr_db: f64, sigma2_t: f64) -> f64 {
    sigma2_t * 10f64.powf(-snr_db / 10.0)
}

impl PowerConfig {
    /// Both schemes at their BER-minimising split for `SNR = sigma2_T / sigma2_v`
    /// with `sigma2_T = 1`.
    pub fn optimal(dims: &SystemDims, snr_db: f64) -> Result<Self> {
        Self::optimal_with_total(dims, snr_db, 1.0)
    }

    pub fn optimal_with_total(dims: &SystemDims, snr_db: f64, sigma2_t: f64) -> Result<Self> {
        if !snr_db.is_finite() {
            return Err(Error::InvalidArgument(format!("SNR {snr_db} dB is not finite")));
        }
        let sigma2_v = noise_power(snr_db, sigma2_t);
        let t = crate::power::optimal_power_tdmt(dims, sigma2_t, sigma2_v)?;
        let d = crate::power::optimal_power_ddst(dims, sigma2_t, sigma2_v)?;
        Ok(Self {
            sigma2_pt: t.sigma2_p,
            sigma2_wt: t.sigma2_w,
            sigma2_pd: d.sigma2_p,
            sigma2_wd: d.sigma2_w,
            sigma2_v,
            sigma2_t,
        })
    }

    /// Pilot and data power equal to `sigma2_T` in both schemes. Satisfies
    /// neither budget exactly for DDST; mainly useful in tests.
    pub fn unit(sigma2_v: f64) -> Self {
        Self {
            sigma2_pt: 1.0,
            sigma2_wt: 1.0,
            sigma2_pd: 1.0,
            sigma2_wd: 1.0,
            sigma2_v,
            sigma2_t: 1.0,
        }
    }

    /// `N1 sigma2_pt + N2 sigma2_wt - N sigma2_T`, normalised by `N`.
    pub fn tdmt_budget_residual(&self, dims: &SystemDims) -> f64 {
        (dims.n1 as f64 * self.sigma2_pt + dims.n2 as f64 * self.sigma2_wt) / dims.n as f64
            - self.sigma2_t
    }

    /// `sigma2_pd + (1 - c1) sigma2_wd - sigma2_T`.
    pub fn ddst_budget_residual(&self, dims: &SystemDims) -> f64 {
        self.sigma2_pd + (1.0 - dims.c1()) * self.sigma2_wd - self.sigma2_t
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("sigma2_pt", self.sigma2_pt),
            ("sigma2_wt", self.sigma2_wt),
            ("sigma2_pd", self.sigma2_pd),
            ("sigma2_wd", self.sigma2_wd),
            ("sigma2_v", self.sigma2_v),
            ("sigma2_T", self.sigma2_t),
        ];
        for (name, v) in fields {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidPower(format!("{name} = {v}")));
            }
        }
        Ok(())
    }
}

/// Bits in transmission order; two per QPSK symbol.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BitFrame(pub Vec<u8>);

impl BitFrame {
    /// Uniform random bits, drawn 64 at a time.
    pub fn random<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Self {
        let mut bits = Vec::with_capacity(len);
        while bits.len() < len {
            let word: u64 = rng.random();
            let take = (len - bits.len()).min(64);
            bits.extend((0..take).map(|b| ((word >> b) & 1) as u8));
        }
        Self(bits)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Number of positions where the two frames differ.
    pub fn hamming(&self, other: &BitFrame) -> Result<u64> {
        if self.len() != other.len() {
            return Err(Error::DimensionMismatch(format!(
                "bit frames of length {} and {}",
                self.len(),
                other.len()
            )));
        }
        Ok(self.0.iter().zip(&other.0).filter(|(a, b)| a != b).count() as u64)
    }
}

#[inline]
fn axis(bit: u8, amp: f64) -> f64 {
    if bit == 0 {
        amp
    } else {
        -amp
    }
}

/// Gray QPSK: bit 0 maps to `+`, bit 1 to `-`, the first bit of each pair
/// drives the real axis. Symbol `(i, n)` consumes bits `2(i N + n)` and
/// `2(i N + n) + 1`.
pub fn qpsk_modulate(bits: &BitFrame, k: usize, n_data: usize, sigma2_w: f64) -> Result<ComplexMatrix> {
    if bits.len() != 2 * k * n_data {
        return Err(Error::DimensionMismatch(format!(
            "{} bits for a {k}x{n_data} symbol block",
            bits.len()
        )));
    }
    if !(sigma2_w >= 0.0 && sigma2_w.is_finite()) {
        return Err(Error::InvalidPower(format!("symbol power {sigma2_w}")));
    }
    let amp = (sigma2_w / 2.0).sqrt();
    let b = &bits.0;
    Ok(ComplexMatrix::from_fn(k, n_data, |i, j| {
        let at = 2 * (i * n_data + j);
        Complex64::new(axis(b[at], amp), axis(b[at + 1], amp))
    }))
}

/// Per-axis sign decision; an exact zero decides bit 0.
pub fn qpsk_demodulate(symbols: &ComplexMatrix) -> BitFrame {
    let (k, n) = symbols.shape();
    let mut bits = Vec::with_capacity(2 * k * n);
    for i in 0..k {
        for j in 0..n {
            let s = symbols[(i, j)];
            bits.push(u8::from(s.re < 0.0));
            bits.push(u8::from(s.im < 0.0));
        }
    }
    BitFrame(bits)
}

/// First `K` rows of the `N1`-point DFT, every entry of modulus
/// `sqrt(sigma2_pt)`, so that `P P^H = N1 sigma2_pt I_K`.
pub fn tdmt_pilot(k: usize, n1: usize, sigma2_pt: f64) -> Result<ComplexMatrix> {
    if n1 < k {
        return Err(Error::InvalidDims(format!("pilot length N1={n1} shorter than K={k}")));
    }
    let amp = sigma2_pt.sqrt();
    Ok(ComplexMatrix::from_fn(k, n1, |row, col| {
        let phase = -2.0 * PI * ((row * col) % n1) as f64 / n1 as f64;
        Complex64::from_polar(amp, phase)
    }))
}

/// `P(k, n) = sqrt(sigma2_pd) exp(j 2 pi k n / K)`: rows are `K`-periodic and
/// mutually orthogonal over any multiple of `K` samples.
pub fn ddst_pilot(k: usize, n: usize, sigma2_pd: f64) -> Result<ComplexMatrix> {
    check_period(n, k)?;
    let amp = sigma2_pd.sqrt();
    Ok(ComplexMatrix::from_fn(k, n, |row, col| {
        let phase = 2.0 * PI * ((row * col) % k) as f64 / k as f64;
        Complex64::from_polar(amp, phase)
    }))
}

fn check_period(n: usize, period: usize) -> Result<()> {
    if period == 0 || !n.is_multiple_of(period) {
        return Err(Error::InvalidDims(format!("period {period} does not divide block length {n}")));
    }
    Ok(())
}

/// `X J`: every entry replaced by the mean of its row over the columns in
/// the same residue class modulo `period`.
pub fn periodic_component(x: &ComplexMatrix, period: usize) -> Result<ComplexMatrix> {
    let (rows, n) = x.shape();
    check_period(n, period)?;
    let reps = (n / period) as f64;
    let mut out = ComplexMatrix::zeros(rows, n);
    for i in 0..rows {
        for class in 0..period {
            let mean = (class..n).step_by(period).map(|j| x[(i, j)]).sum::<Complex64>() / reps;
            for j in (class..n).step_by(period) {
                out[(i, j)] = mean;
            }
        }
    }
    Ok(out)
}

/// `X (I - J)` with `J = (K/N) 1_{N/K} (x) I_K`, applied in `O(rows * N)`.
/// Works for any row count, so the receiver reuses it on `Y`.
pub fn remove_periodic(x: &ComplexMatrix, period: usize) -> Result<ComplexMatrix> {
    Ok(x - periodic_component(x, period)?)
}

/// [`remove_periodic`] with the period taken from `dims.k`.
pub fn distortion_apply(x: &ComplexMatrix, dims: &SystemDims) -> Result<ComplexMatrix> {
    if x.ncols() != dims.n {
        return Err(Error::DimensionMismatch(format!(
            "block has {} columns, expected N={}",
            x.ncols(),
            dims.n
        )));
    }
    remove_periodic(x, dims.k)
}

/// Explicit `N x N` matrix `J`, reference path for tests.
#[cfg(test)]
pub(crate) fn j_matrix(k: usize, n: usize) -> ComplexMatrix {
    let scale = k as f64 / n as f64;
    ComplexMatrix::from_fn(n, n, |a, b| {
        if a % k == b % k {
            Complex64::from(scale)
        } else {
            Complex64::from(0.0)
        }
    })
}
