//! Sampling checks of the random-matrix facts behind the large-system
//! noise analysis. Each residual is the mean absolute deviation over
//! independent realisations, measured at `K` and again at `2K` with the
//! same `M/K`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{gram_inverse, sample_complex_gaussian, ComplexMatrix};
use crate::montecarlo::frame_rng;
use crate::par::{map_collect, Execution};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RmtCheck {
    pub name: &'static str,
    /// Mean absolute residual at `K`.
    pub residual: f64,
    /// Same at `2K`.
    pub residual_doubled: f64,
}

impl RmtCheck {
    /// `residual_doubled / residual`.
    pub fn decay(&self) -> f64 {
        self.residual_doubled / self.residual
    }

    pub fn passes(&self, tolerance: f64, max_decay: f64) -> bool {
        self.residual < tolerance && self.decay() < max_decay
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RmtReport {
    pub k: usize,
    pub m: usize,
    pub n_reps: usize,
    pub checks: Vec<RmtCheck>,
}

impl RmtReport {
    pub fn passes(&self, tolerance: f64, max_decay: f64) -> bool {
        self.checks.iter().all(|c| c.passes(tolerance, max_decay))
    }
}

/// Residuals of one realisation, in report order.
fn realisation(k: usize, m: usize, seed: u64, rep: u64) -> Result<[f64; 4]> {
    let mut rng = frame_rng(seed, rep);
    let c2 = m as f64 / k as f64;
    let limit = 1.0 / (c2 - 1.0);

    // quadratic form with A = I over an M-vector of unit-variance entries
    let x = sample_complex_gaussian(m, 1, 1.0, &mut rng);
    let quad = (x.iter().map(|z| z.norm_sqr()).sum::<f64>() / m as f64 - 1.0).abs();

    let h = sample_complex_gaussian(m, k, 1.0 / k as f64, &mut rng);
    let inv: ComplexMatrix = gram_inverse(&h)?;
    let inv2 = &inv * &inv;
    let diag: Vec<f64> = (0..k).map(|i| inv[(i, i)].re).collect();

    let squared = (0..k)
        .map(|i| (inv2[(i, i)].re - c2 / (c2 - 1.0) * diag[i] * diag[i]).abs())
        .sum::<f64>()
        / k as f64;
    let trace = (diag.iter().sum::<f64>() / k as f64 - limit).abs();
    let entry = diag.iter().map(|d| (d - limit).abs()).sum::<f64>() / k as f64;
    Ok([quad, squared, trace, entry])
}

fn mean_residuals(k: usize, m: usize, n_reps: usize, seed: u64, exec: Execution) -> Result<[f64; 4]> {
    let reps = map_collect(exec, n_reps as u64, |r| realisation(k, m, seed, r));
    let mut acc = [0.0; 4];
    for r in reps {
        let r = r?;
        for (a, v) in acc.iter_mut().zip(r) {
            *a += v;
        }
    }
    Ok(acc.map(|a| a / n_reps as f64))
}

/// Four checks at `(K, M)` and `(2K, 2M)`:
///
/// * `quadratic_form`: `|x^H x / M - 1|`,
/// * `inverse_squared_diagonal`: `|[(H^H H)^-2]_ii - c2/(c2-1) [(H^H H)^-1]_ii^2|`,
/// * `trace_limit`: `|Tr (H^H H)^-1 / K - 1/(c2-1)|`,
/// * `diagonal_limit`: `|[(H^H H)^-1]_ii - 1/(c2-1)|`.
pub fn rmt_validators(k: usize, m: usize, n_reps: usize, seed: u64) -> Result<RmtReport> {
    rmt_validators_with(k, m, n_reps, seed, Execution::default())
}

pub fn rmt_validators_with(k: usize, m: usize, n_reps: usize, seed: u64, exec: Execution) -> Result<RmtReport> {
    if k < 2 || m <= k {
        return Err(Error::InvalidDims(format!("need M > K >= 2, got K={k}, M={m}")));
    }
    if n_reps == 0 {
        return Err(Error::InvalidArgument("at least one realisation".into()));
    }
    let base = mean_residuals(k, m, n_reps, seed, exec)?;
    let doubled = mean_residuals(2 * k, 2 * m, n_reps, seed ^ 0x9e37_79b9_7f4a_7c15, exec)?;
    let names = ["quadratic_form", "inverse_squared_diagonal", "trace_limit", "diagonal_limit"];
    let checks = names
        .iter()
        .zip(base.iter().zip(doubled))
        .map(|(&name, (&residual, residual_doubled))| RmtCheck { name, residual, residual_doubled })
        .collect();
    Ok(RmtReport { k, m, n_reps, checks })
}
