//! Small numeric helpers shared across the crate: moments, empirical
//! quantiles, and the normal distribution functions used for Wald intervals.

use crate::{Error, Result};

/// Arithmetic mean. Returns 0.0 on an empty slice.
pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population variance (1/n normalization), two-pass for stability.
///
/// All variances in this crate use the 1/n convention so that
/// `column variance / n` reproduces the delta-method plug-ins exactly.
pub fn pop_var(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n == 0 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n as f64
}

/// Inverted-CDF (type-1) empirical quantile on a pre-sorted slice:
/// the smallest order statistic whose empirical CDF reaches `p`.
///
/// The tiny shift guards against `p * n` landing one ulp above an integer.
pub fn quantile_type1_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let n = sorted.len();
    let k = ((p * n as f64) - 1e-9).ceil() as isize;
    let k = k.clamp(1, n as isize) as usize;
    sorted[k - 1]
}

/// Type-1 empirical quantile of an unsorted slice.
pub fn quantile_type1(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("NaN in quantile input"));
    quantile_type1_sorted(&v, p)
}

const FRAC_2_SQRT_PI: f64 = std::f64::consts::FRAC_2_SQRT_PI;
const SQRT_2: f64 = std::f64::consts::SQRT_2;

/// erf by its Maclaurin series; adequate to machine precision for |x| <= 2.
fn erf_series(x: f64) -> f64 {
    let x2 = x * x;
    let mut term = x;
    let mut sum = x;
    for k in 1..200usize {
        term *= -x2 / k as f64;
        let add = term / (2 * k + 1) as f64;
        sum += add;
        if add.abs() < 1e-17 * sum.abs().max(1e-300) {
            break;
        }
    }
    sum * FRAC_2_SQRT_PI
}

/// erfc via the Laplace continued fraction, evaluated backward; for x >= 2.
fn erfc_cf(x: f64) -> f64 {
    let mut f = x;
    for j in (1..=160usize).rev() {
        f = x + (j as f64 / 2.0) / f;
    }
    (-x * x).exp() / (std::f64::consts::PI.sqrt() * f)
}

/// Standard normal CDF, accurate to roughly 1e-15.
pub fn normal_cdf(x: f64) -> f64 {
    let t = x / SQRT_2;
    if t.abs() <= 2.0 {
        0.5 * (1.0 + erf_series(t))
    } else if t > 0.0 {
        1.0 - 0.5 * erfc_cf(t)
    } else {
        0.5 * erfc_cf(-t)
    }
}

// Acklam's rational approximation to the inverse normal CDF.
const ACKLAM_A: [f64; 6] = [
    -3.969683028665376e+01,
    2.209460984245205e+02,
    -2.759285104469687e+02,
    1.383577518672690e+02,
    -3.066479806614716e+01,
    2.506628277459239e+00,
];
const ACKLAM_B: [f64; 5] = [
    -5.447609879822406e+01,
    1.615858368580409e+02,
    -1.556989798598866e+02,
    6.680131188771972e+01,
    -1.328068155288572e+01,
];
const ACKLAM_C: [f64; 6] = [
    -7.784894002430293e-03,
    -3.223964580411365e-01,
    -2.400758277161838e+00,
    -2.549732539343734e+00,
    4.374664141464968e+00,
    2.938163982698783e+00,
];
const ACKLAM_D: [f64; 4] = [
    7.784695709041462e-03,
    3.224671290700398e-01,
    2.445134137142996e+00,
    3.754408661907416e+00,
];

fn acklam(p: f64) -> f64 {
    const P_LOW: f64 = 0.02425;
    let (a, b, c, d) = (ACKLAM_A, ACKLAM_B, ACKLAM_C, ACKLAM_D);
    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5])
            / ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q
            / (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5])
            / ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0)
    }
}

/// Inverse standard normal CDF: Acklam's approximation polished with one
/// Halley step, giving close to full double accuracy.
pub fn inverse_normal_cdf(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "quantile probability must lie in (0,1), got {p}"
        )));
    }
    let x = acklam(p);
    let e = normal_cdf(x) - p;
    let u = e * (2.0 * std::f64::consts::PI).sqrt() * (x * x / 2.0).exp();
    Ok(x - u / (1.0 + x * u / 2.0))
}

/// Two-sided normal critical value `z_{1-alpha/2}`.
pub fn z_two_sided(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha must lie in (0,1), got {alpha}"
        )));
    }
    inverse_normal_cdf(1.0 - alpha / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_type1_matches_inf_definition() {
        // smallest s with empirical CDF >= p, enumerated by hand
        let v = [-1.0, 0.0, 1.0, 2.0];
        assert_eq!(quantile_type1(&v, 0.75), 1.0);
        assert_eq!(quantile_type1(&v, 0.76), 2.0);
        assert_eq!(quantile_type1(&v, 0.25), -1.0);
        assert_eq!(quantile_type1(&v, 1.0), 2.0);
        assert_eq!(quantile_type1(&v, 1e-9), -1.0);
    }

    #[test]
    fn quantile_integer_boundary_is_stable() {
        let v: Vec<f64> = (1..=300).map(f64::from).collect();
        // 0.05 * 300 = 15 up to rounding; must pick the 15th order statistic
        assert_eq!(quantile_type1(&v, 0.05), 15.0);
        assert_eq!(quantile_type1(&v, 0.95), 285.0);
    }

    #[test]
    fn inverse_normal_matches_reference_values() {
        // reference values from standard tables
        let cases = [
            (0.975, 1.959963984540054),
            (0.95, 1.6448536269514722),
            (0.9, 1.2815515655446004),
            (0.84, 0.9944578832097532),
            (0.75, 0.6744897501960817),
            (0.5, 0.0),
            (0.025, -1.959963984540054),
        ];
        for (p, z) in cases {
            let got = inverse_normal_cdf(p).unwrap();
            assert!(
                (got - z).abs() <= 1e-9,
                "p={p}: got {got}, want {z}"
            );
        }
    }

    #[test]
    fn normal_cdf_round_trips_quantiles() {
        for &p in &[1e-6, 0.01, 0.3, 0.5, 0.77, 0.99, 1.0 - 1e-6] {
            let x = inverse_normal_cdf(p).unwrap();
            assert!((normal_cdf(x) - p).abs() < 1e-12, "p={p}");
        }
    }

    #[test]
    fn invalid_probability_rejected() {
        assert!(inverse_normal_cdf(0.0).is_err());
        assert!(inverse_normal_cdf(1.0).is_err());
        assert!(z_two_sided(1.5).is_err());
    }
}
