//! Adaptive Gauss–Kronrod (7/15) quadrature, used as an independent check of
//! the closed-form BER integrals and the Gamma density.

use crate::theory::q_function;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];

// Gauss weights for the nodes XGK[1], XGK[3], XGK[5], XGK[7]
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

/// Integral of `f` over `[a, b]` by globally adaptive bisection until the
/// summed error estimate drops below `max(abs_tol, rel_tol * |I|)`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> f64 {
    const MAX_INTERVALS: usize = 4000;
    let (v, e) = gk15(&f, a, b);
    let mut pieces = vec![(a, b, v, e)];
    loop {
        let total: f64 = pieces.iter().map(|p| p.2).sum();
        let err: f64 = pieces.iter().map(|p| p.3).sum();
        if err <= abs_tol.max(rel_tol * total.abs()) || pieces.len() >= MAX_INTERVALS {
            return total;
        }
        let worst = pieces
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .map(|(i, _)| i)
            .expect("nonempty");
        let (lo, hi, _, _) = pieces.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = gk15(&f, lo, mid);
        let (v2, e2) = gk15(&f, mid, hi);
        pieces.push((lo, mid, v1, e1));
        pieces.push((mid, hi, v2, e2));
    }
}

/// Integral over `[a, inf)` through `t = a + u / (1 - u)`.
pub fn integrate_to_infinity<F: Fn(f64) -> f64>(f: F, a: f64, abs_tol: f64, rel_tol: f64) -> f64 {
    integrate(
        |u| {
            let s = 1.0 - u;
            let v = f(a + u / s) / (s * s);
            if v.is_finite() {
                v
            } else {
                0.0
            }
        },
        0.0,
        1.0,
        abs_tol,
        rel_tol,
    )
}

/// `(1/Gamma(m)) int_0^inf t^(m-1) e^-t Q(sqrt(b t / a)) dt`, the direct
/// integral form of `J(m, a, b)`.
pub fn j_quadrature(m: u32, a: f64, b: f64) -> f64 {
    let ln_gamma_m = libm::lgamma(m as f64);
    let scale = b / a;
    integrate_to_infinity(
        |t| {
            if t <= 0.0 {
                return if m == 1 { q_function(0.0) } else { 0.0 };
            }
            let log_w = (m as f64 - 1.0) * t.ln() - t - ln_gamma_m;
            log_w.exp() * q_function((scale * t).sqrt())
        },
        0.0,
        1e-14,
        1e-12,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_exact() {
        let v = integrate(|x| x.powi(5) - 3.0 * x * x, -1.0, 2.0, 1e-14, 1e-14);
        assert!((v - (64.0 / 6.0 - 1.0 / 6.0 - 9.0)).abs() < 1e-12);
    }

    #[test]
    fn oscillatory_and_singular() {
        let v = integrate(|x| (10.0 * x).sin(), 0.0, std::f64::consts::PI, 1e-13, 1e-13);
        assert!(v.abs() < 1e-12);
        let v = integrate(f64::sqrt, 0.0, 1.0, 1e-13, 1e-13);
        assert!((v - 2.0 / 3.0).abs() < 1e-11);
    }

    #[test]
    fn semi_infinite_gamma_integrals() {
        let v = integrate_to_infinity(|t| (-t).exp(), 0.0, 1e-14, 1e-13);
        assert!((v - 1.0).abs() < 1e-12);
        let v = integrate_to_infinity(|t| t.powi(4) * (-t).exp(), 0.0, 1e-14, 1e-13);
        assert!((v - 24.0).abs() < 1e-10);
        let v = integrate_to_infinity(|t| (-t * t / 2.0).exp(), 1.0, 1e-14, 1e-13);
        let want = (2.0 * std::f64::consts::PI).sqrt() * q_function(1.0);
        assert!((v - want).abs() < 1e-12, "{v} vs {want}");
    }

    #[test]
    fn j_quadrature_reference_point() {
        // c = 1, mu = 1/sqrt(2)
        let want = (1.0 - std::f64::consts::FRAC_1_SQRT_2) / 2.0;
        assert!((j_quadrature(1, 0.5, 1.0) - want).abs() < 1e-10);
        assert!((j_quadrature(3, 2.0, 0.0) - 0.5).abs() < 1e-12);
    }
}
