//! Small statistics helpers: least-squares slope, moments, the two-sample
//! Kolmogorov–Smirnov test and sampling from the theoretical DDST noise law.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::theory::MixtureSpec;

/// Slope of the least-squares line through `(x, y)` points.
pub fn ols_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// `m4 / m2^2 - 3` from central moments.
pub fn excess_kurtosis(xs: &[f64]) -> f64 {
    let m = mean(xs);
    let n = xs.len() as f64;
    let m2 = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    let m4 = xs.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n;
    m4 / (m2 * m2) - 3.0
}

/// Two-sample Kolmogorov–Smirnov statistic `sup |F_a - F_b|`.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0_f64;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Large-sample critical value `sqrt(-ln(alpha/2) / 2) sqrt((n+m)/(n m))`;
/// about `1.628 sqrt((n+m)/(n m))` at the 1 % level.
pub fn ks_critical(alpha: f64, n: usize, m: usize) -> f64 {
    let c = (-(alpha / 2.0).ln() / 2.0).sqrt();
    let (n, m) = (n as f64, m as f64);
    c * ((n + m) / (n * m)).sqrt()
}

/// Draws from `shift + alpha_s + N(0, axis_variance)` with `alpha_s`
/// distributed as the mixture, one real axis.
pub fn sample_mixture<R: Rng + ?Sized>(
    mixture: &MixtureSpec,
    shift: f64,
    axis_variance: f64,
    n: usize,
    rng: &mut R,
) -> Vec<f64> {
    // component s has C(L-1, s) / 2^(L-1) weight: count minus signs among
    // L - 1 fair coins
    let coins = mixture.count - 1;
    let sd = axis_variance.sqrt();
    (0..n)
        .map(|_| {
            let mut s = 0;
            let mut left = coins;
            while left > 0 {
                let take = left.min(64);
                let word: u64 = rng.random();
                let mask = if take == 64 { u64::MAX } else { (1u64 << take) - 1 };
                s += (word & mask).count_ones() as usize;
                left -= take;
            }
            let g: f64 = rng.sample(StandardNormal);
            shift + mixture.offsets[s] + sd * g
        })
        .collect()
}

/// Gaussian samples with the given mean and variance.
pub fn sample_gaussian<R: Rng + ?Sized>(mean: f64, variance: f64, n: usize, rng: &mut R) -> Vec<f64> {
    let sd = variance.sqrt();
    (0..n)
        .map(|_| {
            let g: f64 = rng.sample(StandardNormal);
            mean + sd * g
        })
        .collect()
}
