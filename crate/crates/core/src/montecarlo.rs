//! Deterministic Monte Carlo BER estimation and empirical samples of the
//! post-processing noise.
//!
//! Frame `i` of a plan draws everything from its own ChaCha stream keyed by
//! `(master_seed, i)`, and counts are merged as integers, so an estimate is
//! a pure function of the plan whatever the worker count.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::ddst::{run_block_ddst, run_frame_ddst};
use crate::error::{Error, Result};
use crate::linalg::{ls_estimate, pinv, sample_complex_gaussian, ComplexMatrix};
use crate::par::{map_collect, try_map_reduce, Execution};
use crate::power::Scheme;
use crate::signal::{qpsk_modulate, tdmt_pilot, BitFrame, PowerConfig, SystemDims};
use crate::tdmt::run_frame_tdmt;

/// Random stream for work item `index` under `master_seed`.
pub fn frame_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialPlan {
    pub scheme: Scheme,
    pub dims: SystemDims,
    pub power: PowerConfig,
    pub n_frames: u64,
    pub master_seed: u64,
}

impl TrialPlan {
    /// Enough frames to reach at least `bits` data bits.
    pub fn for_bits(scheme: Scheme, dims: SystemDims, power: PowerConfig, bits: u64, master_seed: u64) -> Self {
        let per_frame = bits_per_frame(scheme, &dims);
        Self {
            scheme,
            dims,
            power,
            n_frames: bits.div_ceil(per_frame).max(1),
            master_seed,
        }
    }
}

/// `2 K N2` for TDMT, `2 K N` for DDST.
pub fn bits_per_frame(scheme: Scheme, dims: &SystemDims) -> u64 {
    let symbols = match scheme {
        Scheme::Tdmt => dims.n2,
        Scheme::Ddst => dims.n,
    };
    (2 * dims.k * symbols) as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BerEstimate {
    pub bit_errors: u64,
    pub total_bits: u64,
    pub ber: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub seed: u64,
    pub degenerate_frames: u64,
}

impl BerEstimate {
    /// Binomial standard error at probability `p`.
    pub fn standard_error(&self, p: f64) -> f64 {
        (p * (1.0 - p) / self.total_bits as f64).sqrt()
    }
}

/// 95 % Wilson score interval, clamped so it always contains `k/n`.
pub fn wilson_interval(errors: u64, total: u64) -> (f64, f64) {
    const Z: f64 = 1.959_963_984_540_054;
    if total == 0 {
        return (0.0, 1.0);
    }
    let n = total as f64;
    let p = errors as f64 / n;
    let z2 = Z * Z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = Z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((center - half).clamp(0.0, p), (center + half).clamp(p, 1.0))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct Counts {
    errors: u64,
    bits: u64,
    degenerate: u64,
}

impl Counts {
    fn merge(self, o: Counts) -> Counts {
        Counts {
            errors: self.errors + o.errors,
            bits: self.bits + o.bits,
            degenerate: self.degenerate + o.degenerate,
        }
    }
}

fn validate_plan(plan: &TrialPlan) -> Result<()> {
    if plan.n_frames == 0 {
        return Err(Error::InvalidArgument("a plan needs at least one frame".into()));
    }
    plan.power.validate()?;
    let (p, w) = match plan.scheme {
        Scheme::Tdmt => (plan.power.sigma2_pt, plan.power.sigma2_wt),
        Scheme::Ddst => (plan.power.sigma2_pd, plan.power.sigma2_wd),
    };
    if !(p > 0.0 && w > 0.0) {
        return Err(Error::InvalidPower(format!("{} needs positive pilot and data power", plan.scheme)));
    }
    if plan.scheme == Scheme::Ddst && plan.dims.blocks() < 2 {
        return Err(Error::Degenerate("N = K leaves no data after distortion".into()));
    }
    Ok(())
}

fn run_one(plan: &TrialPlan, index: u64) -> Result<Counts> {
    let mut rng = frame_rng(plan.master_seed, index);
    let (errors, bits, degenerate) = match plan.scheme {
        Scheme::Tdmt => {
            let r = run_frame_tdmt(&plan.dims, &plan.power, &mut rng)?;
            (r.bit_errors, r.total_bits, r.degenerate)
        }
        Scheme::Ddst => {
            let r = run_frame_ddst(&plan.dims, &plan.power, &mut rng)?;
            (r.bit_errors, r.total_bits, r.degenerate)
        }
    };
    Ok(Counts { errors, bits, degenerate: degenerate as u64 })
}

/// [`estimate_ber_with`] using the default execution mode.
pub fn estimate_ber(plan: &TrialPlan) -> Result<BerEstimate> {
    estimate_ber_with(plan, Execution::default())
}

pub fn estimate_ber_with(plan: &TrialPlan, exec: Execution) -> Result<BerEstimate> {
    validate_plan(plan)?;
    let c = try_map_reduce(exec, plan.n_frames, Counts::default, |i| run_one(plan, i), Counts::merge)?;
    let (ci_low, ci_high) = wilson_interval(c.errors, c.bits);
    Ok(BerEstimate {
        bit_errors: c.errors,
        total_bits: c.bits,
        ber: c.errors as f64 / c.bits as f64,
        ci_low,
        ci_high,
        seed: plan.master_seed,
        degenerate_frames: c.degenerate,
    })
}

/// Entry of the post-processing noise that is collected.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoiseProbe {
    pub antenna: usize,
    pub time: usize,
}

/// [`empirical_noise_samples_at`] at antenna 0, time 0.
pub fn empirical_noise_samples(
    scheme: Scheme,
    dims: &SystemDims,
    power: &PowerConfig,
    fixed_h: &ComplexMatrix,
    n_draws: u64,
    seed: u64,
) -> Result<Vec<Complex64>> {
    empirical_noise_samples_at(
        scheme,
        dims,
        power,
        fixed_h,
        n_draws,
        seed,
        NoiseProbe { antenna: 0, time: 0 },
        Execution::default(),
    )
}

/// `n_draws` values of `(W_hat - W)[probe]` with the channel held fixed.
///
/// TDMT redraws pilot noise, one data column and its noise (columns are
/// exchangeable, so one suffices). DDST redraws the whole block but keeps
/// the probed symbol at `(1 + j) sqrt(sigma2_wd / 2)`.
#[allow(clippy::too_many_arguments)]
pub fn empirical_noise_samples_at(
    scheme: Scheme,
    dims: &SystemDims,
    power: &PowerConfig,
    fixed_h: &ComplexMatrix,
    n_draws: u64,
    seed: u64,
    probe: NoiseProbe,
    exec: Execution,
) -> Result<Vec<Complex64>> {
    if fixed_h.shape() != (dims.m, dims.k) {
        return Err(Error::DimensionMismatch(format!("channel is {:?}", fixed_h.shape())));
    }
    pinv(fixed_h)?;
    let limit = match scheme {
        Scheme::Tdmt => dims.n2,
        Scheme::Ddst => dims.n,
    };
    if probe.antenna >= dims.k || probe.time >= limit {
        return Err(Error::InvalidArgument(format!("probe {probe:?} outside the data block")));
    }
    let draws = map_collect(exec, n_draws, |i| {
        let mut rng = frame_rng(seed, i);
        match scheme {
            Scheme::Tdmt => tdmt_noise_draw(dims, power, fixed_h, probe.antenna, &mut rng),
            Scheme::Ddst => ddst_noise_draw(dims, power, fixed_h, probe, &mut rng),
        }
    });
    draws.into_iter().collect()
}

fn tdmt_noise_draw(
    dims: &SystemDims,
    power: &PowerConfig,
    h: &ComplexMatrix,
    antenna: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Complex64> {
    let bits = BitFrame::random(2 * dims.k, rng);
    let v1 = sample_complex_gaussian(dims.m, dims.n1, power.sigma2_v, rng);
    let v2 = sample_complex_gaussian(dims.m, 1, power.sigma2_v, rng);
    let pilot = tdmt_pilot(dims.k, dims.n1, power.sigma2_pt)?;
    let w = qpsk_modulate(&bits, dims.k, 1, power.sigma2_wt)?;
    let h_hat = ls_estimate(&(h * &pilot + v1), &pilot)?;
    let w_hat = pinv(&h_hat)? * (h * &w + v2);
    Ok(w_hat[(antenna, 0)] - w[(antenna, 0)])
}

fn ddst_noise_draw(
    dims: &SystemDims,
    power: &PowerConfig,
    h: &ComplexMatrix,
    probe: NoiseProbe,
    rng: &mut ChaCha8Rng,
) -> Result<Complex64> {
    let mut bits = BitFrame::random(2 * dims.k * dims.n, rng);
    let at = 2 * (probe.antenna * dims.n + probe.time);
    bits.0[at] = 0;
    bits.0[at + 1] = 0;
    let w = qpsk_modulate(&bits, dims.k, dims.n, power.sigma2_wd)?;
    let r = run_block_ddst(dims, power, h, &w, &bits, rng)?;
    Ok(r.delta_w[(probe.antenna, probe.time)])
}

/// `max_z |mean_n exp(j Re(conj(z) x_n)) - cf(z)|` over the grid.
pub fn cf_distance<F: Fn(Complex64) -> Complex64>(samples: &[Complex64], cf: F, grid: &[Complex64]) -> f64 {
    let n = samples.len() as f64;
    grid.iter()
        .map(|&z| {
            let (mut c, mut s) = (0.0, 0.0);
            for x in samples {
                let t = z.re * x.re + z.im * x.im;
                c += t.cos();
                s += t.sin();
            }
            (Complex64::new(c / n, s / n) - cf(z)).norm()
        })
        .fold(0.0, f64::max)
}

/// Points of a square lattice with spacing `radius / steps` that lie in the
/// disc `|z| <= radius`.
pub fn z_grid(radius: f64, steps: usize) -> Vec<Complex64> {
    let h = radius / steps as f64;
    let s = steps as i64;
    let mut out = Vec::new();
    for a in -s..=s {
        for b in -s..=s {
            let z = Complex64::new(a as f64 * h, b as f64 * h);
            if z.norm() <= radius + 1e-12 {
                out.push(z);
            }
        }
    }
    out
}


/// Post-processing noise against its limiting laws at moderate sizes.
#[cfg(test)]
mod noise_law_tests {
    use crate::linalg::{gram_inverse, sample_complex_gaussian};
    use super::{cf_distance, empirical_noise_samples_at, frame_rng, z_grid, NoiseProbe};
    use crate::par::Execution;
    use crate::stats::excess_kurtosis;
    use crate::theory::{cf_theory_ddst_shifted, cf_theory_tdmt, delta_d, delta_t, mixture_spec};
    use crate::{Complex64, PowerConfig, Scheme, SystemDims};

    fn mean_power(xs: &[Complex64]) -> f64 {
        xs.iter().map(|x| x.norm_sqr()).sum::<f64>() / xs.len() as f64
    }

    #[test]
    fn tdmt_noise_is_gaussian_with_predicted_variance() {
        let dims = SystemDims::new(16, 8, 256, 64).unwrap();
        let power = PowerConfig::optimal(&dims, 15.0).unwrap();
        let h = sample_complex_gaussian(16, 8, 1.0 / 8.0, &mut frame_rng(40, 0));
        let inv = gram_inverse(&h).unwrap();
        for antenna in [0, 5] {
            let var = power.sigma2_wt * delta_t(&dims, &power).unwrap() * inv[(antenna, antenna)].re;
            let probe = NoiseProbe { antenna, time: 0 };
            let xs = empirical_noise_samples_at(Scheme::Tdmt, &dims, &power, &h, 10_000, 41, probe, Execution::default())
                .unwrap();
            let ratio = mean_power(&xs) / var;
            assert!((ratio - 1.0).abs() < 0.1, "antenna {antenna}: variance ratio {ratio}");
            let re: Vec<f64> = xs.iter().map(|x| x.re).collect();
            assert!(excess_kurtosis(&re).abs() < 0.2);
            let d = cf_distance(&xs, |z| cf_theory_tdmt(z, var), &z_grid(4.0 / var.sqrt(), 6));
            assert!(d < 0.04, "cf distance {d}");
        }
    }

    #[test]
    fn ddst_mixture_fits_better_than_a_gaussian() {
        let dims = SystemDims::new(8, 4, 16, 4).unwrap();
        let power = PowerConfig::optimal(&dims, 30.0).unwrap();
        let h = sample_complex_gaussian(8, 4, 0.25, &mut frame_rng(50, 0));
        let g = gram_inverse(&h).unwrap()[(0, 0)].re;
        let var = power.sigma2_wd * delta_d(&dims, &power).unwrap() * g;
        let a = (power.sigma2_wd / 2.0).sqrt();
        let shift = Complex64::new(-0.25 * a, -0.25 * a);
        let mix = mixture_spec(4, power.sigma2_wd).unwrap();
        let probe = NoiseProbe { antenna: 0, time: 5 };
        let xs = empirical_noise_samples_at(Scheme::Ddst, &dims, &power, &h, 20_000, 51, probe, Execution::default())
            .unwrap();

        let grid = z_grid(4.0 / (0.25 * a), 6);
        let to_mixture = cf_distance(&xs, |z| cf_theory_ddst_shifted(z, &mix, shift, var), &grid);
        // Gaussian with the mixture's total power, same centre
        let spread: f64 = mix.offsets.iter().zip(&mix.probs).map(|(o, p)| p * o * o).sum();
        let total = var + 2.0 * spread;
        let to_gaussian = cf_distance(
            &xs,
            |z| cf_theory_tdmt(z, total) * Complex64::from_polar(1.0, z.re * shift.re + z.im * shift.im),
            &grid,
        );
        assert!(to_mixture < 0.03, "mixture distance {to_mixture}");
        assert!(to_gaussian > 3.0 * to_mixture, "{to_gaussian} vs {to_mixture}");
    }

    #[test]
    fn ddst_noise_power_matches_mixture_plus_gaussian() {
        let dims = SystemDims::new(8, 4, 32, 4).unwrap();
        let power = PowerConfig::optimal(&dims, 20.0).unwrap();
        let h = sample_complex_gaussian(8, 4, 0.25, &mut frame_rng(60, 0));
        let g = gram_inverse(&h).unwrap()[(1, 1)].re;
        let var = power.sigma2_wd * delta_d(&dims, &power).unwrap() * g;
        let mix = mixture_spec(dims.blocks(), power.sigma2_wd).unwrap();
        let a = (power.sigma2_wd / 2.0).sqrt();
        let c1 = dims.c1();
        let spread: f64 = mix.offsets.iter().zip(&mix.probs).map(|(o, p)| p * o * o).sum();
        let want = var + 2.0 * (spread + (c1 * a).powi(2));
        let probe = NoiseProbe { antenna: 1, time: 9 };
        let xs = empirical_noise_samples_at(Scheme::Ddst, &dims, &power, &h, 20_000, 61, probe, Execution::default())
            .unwrap();
        let ratio = mean_power(&xs) / want;
        assert!((ratio - 1.0).abs() < 0.1, "ratio {ratio}");
    }
}
