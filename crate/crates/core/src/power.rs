//! Pilot/data power splits that minimise the error variance under each
//! scheme's energy budget, their limiting ratios, and a golden-section
//! search used to check the closed forms.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::SystemDims;
use crate::theory::{delta_d_from, delta_t_from};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Tdmt,
    Ddst,
}

impl Scheme {
    pub const ALL: [Scheme; 2] = [Scheme::Tdmt, Scheme::Ddst];

    pub fn as_str(&self) -> &'static str {
        match self {
            Scheme::Tdmt => "tdmt",
            Scheme::Ddst => "ddst",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tdmt" => Ok(Scheme::Tdmt),
            "ddst" => Ok(Scheme::Ddst),
            other => Err(Error::InvalidArgument(format!("unknown scheme '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AllocationResult {
    pub scheme: Scheme,
    pub sigma2_w: f64,
    pub sigma2_p: f64,
    pub delta_value: f64,
}

impl AllocationResult {
    /// Data-to-pilot power ratio.
    pub fn ratio(&self) -> f64 {
        self.sigma2_w / self.sigma2_p
    }
}

fn check_totals(sigma2_t: f64, sigma2_v: f64) -> Result<()> {
    if !(sigma2_t > 0.0 && sigma2_t.is_finite()) {
        return Err(Error::InvalidPower(format!("total power {sigma2_t}")));
    }
    if !(sigma2_v >= 0.0 && sigma2_v.is_finite()) {
        return Err(Error::InvalidPower(format!("noise power {sigma2_v}")));
    }
    Ok(())
}

/// `delta` of `scheme` at data power `w` and pilot power `p`.
pub fn delta_for(scheme: Scheme, dims: &SystemDims, w: f64, p: f64, sigma2_v: f64) -> Result<f64> {
    match scheme {
        Scheme::Tdmt => delta_t_from(dims, p, w, sigma2_v),
        Scheme::Ddst => delta_d_from(dims, p, w, sigma2_v),
    }
}

/// Closed-form TDMT split. With `r = N2/N1`, `c~1 = K/N1`,
/// `X = (1+r)T + c~1 kappa v`, `Y = (1+r)T + r kappa v`:
///
/// `w = (1+r) T sqrt(rX) / D`, `p = r (1+r) T sqrt(c~1 Y) / D`,
/// `D = r (sqrt(rX) + sqrt(c~1 Y))`.
pub fn optimal_power_tdmt(dims: &SystemDims, sigma2_t: f64, sigma2_v: f64) -> Result<AllocationResult> {
    check_totals(sigma2_t, sigma2_v)?;
    let r = dims.r();
    let ct = dims.c1_tilde();
    let kappa = dims.kappa();
    let t = sigma2_t;
    let x = (1.0 + r) * t + ct * sigma2_v * kappa;
    let y = (1.0 + r) * t + r * sigma2_v * kappa;
    let den = r * ((r * x).sqrt() + (ct * y).sqrt());
    let sigma2_w = (1.0 + r) * t * (r * x).sqrt() / den;
    let sigma2_p = r * (1.0 + r) * t * (ct * y).sqrt() / den;
    Ok(AllocationResult {
        scheme: Scheme::Tdmt,
        sigma2_w,
        sigma2_p,
        delta_value: delta_t_from(dims, sigma2_p, sigma2_w, sigma2_v)?,
    })
}

/// Closed-form DDST split. With `A = sqrt((1-c1)(T + c1 kappa v))`,
/// `B = sqrt(c1 T + c1 kappa (1-c1) v)`:
///
/// `w = A T / ((1-c1)(A+B))`, `p = B T / (A+B)`.
pub fn optimal_power_ddst(dims: &SystemDims, sigma2_t: f64, sigma2_v: f64) -> Result<AllocationResult> {
    check_totals(sigma2_t, sigma2_v)?;
    let c1 = dims.c1();
    let kappa = dims.kappa();
    let t = sigma2_t;
    let a = ((1.0 - c1) * (t + c1 * kappa * sigma2_v)).sqrt();
    let b = (c1 * t + c1 * kappa * (1.0 - c1) * sigma2_v).sqrt();
    let sigma2_w = a * t / ((1.0 - c1) * (a + b));
    let sigma2_p = b * t / (a + b);
    Ok(AllocationResult {
        scheme: Scheme::Ddst,
        sigma2_w,
        sigma2_p,
        delta_value: delta_d_from(dims, sigma2_p, sigma2_w, sigma2_v)?,
    })
}

pub fn optimal_power(scheme: Scheme, dims: &SystemDims, sigma2_t: f64, sigma2_v: f64) -> Result<AllocationResult> {
    match scheme {
        Scheme::Tdmt => optimal_power_tdmt(dims, sigma2_t, sigma2_v),
        Scheme::Ddst => optimal_power_ddst(dims, sigma2_t, sigma2_v),
    }
}

/// `(high-SNR, large-system)` limits of the optimal data-to-pilot ratio:
/// `(N1 / sqrt(N2 K), N1 / N2)` for TDMT and `(sqrt(N / K), 1)` for DDST.
pub fn power_ratio_limits(scheme: Scheme, dims: &SystemDims) -> (f64, f64) {
    let (k, n, n1, n2) = (dims.k as f64, dims.n as f64, dims.n1 as f64, dims.n2 as f64);
    match scheme {
        Scheme::Tdmt => (n1 / (n2 * k).sqrt(), n1 / n2),
        Scheme::Ddst => ((n / k).sqrt(), 1.0),
    }
}

/// Pilot power on the budget line for a given data power, and the largest
/// admissible data power.
fn budget_line(scheme: Scheme, dims: &SystemDims, sigma2_t: f64) -> (impl Fn(f64) -> f64, f64) {
    let (slope, total) = match scheme {
        // N1 p + N2 w = N T
        Scheme::Tdmt => (dims.r(), (1.0 + dims.r()) * sigma2_t),
        // p + (1 - c1) w = T
        Scheme::Ddst => (1.0 - dims.c1(), sigma2_t),
    };
    (move |w: f64| total - slope * w, total / slope)
}

/// Residual of the scheme's budget identity, relative to `sigma2_T`.
pub fn budget_residual(alloc: &AllocationResult, dims: &SystemDims, sigma2_t: f64) -> f64 {
    let (pilot_of, _) = budget_line(alloc.scheme, dims, sigma2_t);
    (alloc.sigma2_p - pilot_of(alloc.sigma2_w)) / match alloc.scheme {
        Scheme::Tdmt => 1.0 + dims.r(),
        Scheme::Ddst => 1.0,
    } / sigma2_t
}

/// Split with equal pilot and data power on the budget line.
pub fn equal_split(scheme: Scheme, dims: &SystemDims, sigma2_t: f64, sigma2_v: f64) -> Result<AllocationResult> {
    check_totals(sigma2_t, sigma2_v)?;
    let level = match scheme {
        Scheme::Tdmt => sigma2_t,
        Scheme::Ddst => sigma2_t / (2.0 - dims.c1()),
    };
    Ok(AllocationResult {
        scheme,
        sigma2_w: level,
        sigma2_p: level,
        delta_value: delta_for(scheme, dims, level, level, sigma2_v)?,
    })
}

/// Split at a given data power on the budget line.
pub fn split_at(scheme: Scheme, dims: &SystemDims, sigma2_t: f64, sigma2_v: f64, sigma2_w: f64) -> Result<AllocationResult> {
    let (pilot_of, w_max) = budget_line(scheme, dims, sigma2_t);
    if !(sigma2_w > 0.0 && sigma2_w < w_max) {
        return Err(Error::InvalidPower(format!(
            "data power {sigma2_w} outside the budget interval (0, {w_max})"
        )));
    }
    let sigma2_p = pilot_of(sigma2_w);
    Ok(AllocationResult {
        scheme,
        sigma2_w,
        sigma2_p,
        delta_value: delta_for(scheme, dims, sigma2_w, sigma2_p, sigma2_v)?,
    })
}

/// Golden-section minimisation of `delta` along the budget line. The
/// search stops once the bracket is shorter than `resolution` times the
/// admissible data-power range.
pub fn grid_search_delta(
    scheme: Scheme,
    dims: &SystemDims,
    sigma2_t: f64,
    sigma2_v: f64,
    resolution: f64,
) -> Result<AllocationResult> {
    check_totals(sigma2_t, sigma2_v)?;
    if !(resolution > 0.0) {
        return Err(Error::InvalidArgument(format!("resolution {resolution}")));
    }
    let (pilot_of, w_max) = budget_line(scheme, dims, sigma2_t);
    let f = |w: f64| delta_for(scheme, dims, w, pilot_of(w), sigma2_v).unwrap_or(f64::INFINITY);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (0.0, w_max);
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > resolution * w_max {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        }
    }
    split_at(scheme, dims, sigma2_t, sigma2_v, 0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::noise_power;

    fn dims(m: usize, k: usize, n: usize, n1: usize) -> SystemDims {
        SystemDims::new(m, k, n, n1).unwrap()
    }

    #[test]
    fn scheme_parsing() {
        assert_eq!("TDMT".parse::<Scheme>().unwrap(), Scheme::Tdmt);
        assert_eq!("ddst".parse::<Scheme>().unwrap(), Scheme::Ddst);
        assert!("x".parse::<Scheme>().is_err());
        assert_eq!(Scheme::Ddst.to_string(), "ddst");
    }

    #[test]
    fn budgets_hold() {
        let d = dims(4, 2, 32, 2);
        let t = optimal_power_tdmt(&d, 1.0, 0.1).unwrap();
        assert!((2.0 * t.sigma2_p + 30.0 * t.sigma2_w - 32.0).abs() < 1e-9);
        assert!(budget_residual(&t, &d, 1.0).abs() < 1e-12);
        let a = optimal_power_ddst(&d, 1.0, 0.1).unwrap();
        assert!((a.sigma2_p + 15.0 / 16.0 * a.sigma2_w - 1.0).abs() < 1e-9);
        assert!(budget_residual(&a, &d, 1.0).abs() < 1e-12);
    }

    #[test]
    fn closed_forms_match_golden_section() {
        for snr in [0.0, 5.0, 10.0, 15.0, 20.0] {
            let v = noise_power(snr, 1.0);
            for (n, n1) in [(32, 2), (32, 4), (32, 8), (32, 16), (32, 30)] {
                let d = dims(4, 2, n, n1);
                let cf = optimal_power_tdmt(&d, 1.0, v).unwrap();
                let gs = grid_search_delta(Scheme::Tdmt, &d, 1.0, v, 1e-10).unwrap();
                assert!((cf.sigma2_w / gs.sigma2_w - 1.0).abs() < 1e-3);
                assert!((cf.sigma2_p / gs.sigma2_p - 1.0).abs() < 1e-3);
                assert!(gs.delta_value >= cf.delta_value - 1e-9);
            }
            for n in [8, 16, 32, 64, 128] {
                let d = dims(4, 2, n, 2);
                let cf = optimal_power_ddst(&d, 1.0, v).unwrap();
                let gs = grid_search_delta(Scheme::Ddst, &d, 1.0, v, 1e-10).unwrap();
                assert!((cf.sigma2_w / gs.sigma2_w - 1.0).abs() < 1e-3);
                assert!((cf.sigma2_p / gs.sigma2_p - 1.0).abs() < 1e-3);
                assert!(gs.delta_value >= cf.delta_value - 1e-9);
            }
        }
    }

    #[test]
    fn closed_form_beats_sampled_splits() {
        for scheme in Scheme::ALL {
            for (m, k, n, n1) in [(4, 2, 32, 2), (8, 4, 64, 8), (3, 1, 10, 3)] {
                let d = dims(m, k, n, n1);
                let v = 0.05;
                let best = optimal_power(scheme, &d, 1.0, v).unwrap();
                let (_, w_max) = budget_line(scheme, &d, 1.0);
                let mut values = Vec::new();
                for i in 1..1000 {
                    let s = split_at(scheme, &d, 1.0, v, w_max * i as f64 / 1000.0).unwrap();
                    assert!(best.delta_value <= s.delta_value + 1e-12);
                    values.push(s.delta_value);
                }
                // unimodal: decreasing then increasing
                let argmin = values
                    .iter()
                    .enumerate()
                    .min_by(|a, b| a.1.total_cmp(b.1))
                    .unwrap()
                    .0;
                assert!(values[..argmin].windows(2).all(|w| w[0] >= w[1]));
                assert!(values[argmin..].windows(2).all(|w| w[0] <= w[1]));
            }
        }
    }

    #[test]
    fn scale_covariance() {
        let d = dims(4, 2, 32, 4);
        for scheme in Scheme::ALL {
            let a = optimal_power(scheme, &d, 1.0, 0.2).unwrap();
            let b = optimal_power(scheme, &d, 3.5, 0.7).unwrap();
            assert!((b.sigma2_w / a.sigma2_w - 3.5).abs() < 1e-12);
            assert!((b.sigma2_p / a.sigma2_p - 3.5).abs() < 1e-12);
            assert!((a.ratio() - b.ratio()).abs() < 1e-12);
        }
    }

    #[test]
    fn limit_ratio_values() {
        let d = dims(4, 2, 32, 2);
        let (hi, ls) = power_ratio_limits(Scheme::Tdmt, &d);
        assert!((hi - 2.0 / 60f64.sqrt()).abs() < 1e-15);
        assert!((hi - 0.2582).abs() < 1e-4);
        assert!((ls - 1.0 / 15.0).abs() < 1e-15);
        assert_eq!(power_ratio_limits(Scheme::Ddst, &d), (4.0, 1.0));
    }

    #[test]
    fn tdmt_high_snr_ratio() {
        let d = dims(4, 2, 32, 2);
        let a = optimal_power_tdmt(&d, 1.0, 1e-6).unwrap();
        let (hi, _) = power_ratio_limits(Scheme::Tdmt, &d);
        assert!((a.ratio() / hi - 1.0).abs() < 0.02);
        // the noiseless limit is finite
        let z = optimal_power_tdmt(&d, 1.0, 0.0).unwrap();
        assert!((z.ratio() / hi - 1.0).abs() < 1e-12);
        assert_eq!(z.delta_value, 0.0);
    }

    #[test]
    fn optimum_lowers_ber_against_equal_split() {
        use crate::theory::{ber_ddst_from_delta, ber_tdmt_from_delta};
        for snr in [0.0, 5.0, 10.0, 20.0] {
            let v = noise_power(snr, 1.0);
            for d in [dims(4, 2, 32, 2), dims(4, 2, 32, 8), dims(8, 4, 64, 4)] {
                let ot = optimal_power_tdmt(&d, 1.0, v).unwrap();
                let et = equal_split(Scheme::Tdmt, &d, 1.0, v).unwrap();
                assert!(
                    ber_tdmt_from_delta(&d, ot.delta_value).unwrap()
                        <= ber_tdmt_from_delta(&d, et.delta_value).unwrap()
                );
                let od = optimal_power_ddst(&d, 1.0, v).unwrap();
                let ed = equal_split(Scheme::Ddst, &d, 1.0, v).unwrap();
                assert!(budget_residual(&ed, &d, 1.0).abs() < 1e-12);
                assert!(
                    ber_ddst_from_delta(&d, od.delta_value).unwrap()
                        <= ber_ddst_from_delta(&d, ed.delta_value).unwrap()
                );
            }
        }
    }

    #[test]
    fn rejects_bad_totals() {
        let d = dims(4, 2, 32, 2);
        assert!(optimal_power_tdmt(&d, 0.0, 0.1).is_err());
        assert!(optimal_power_ddst(&d, 1.0, -0.1).is_err());
        assert!(grid_search_delta(Scheme::Tdmt, &d, 1.0, 0.1, 0.0).is_err());
        assert!(split_at(Scheme::Ddst, &d, 1.0, 0.1, 10.0).is_err());
    }
}
