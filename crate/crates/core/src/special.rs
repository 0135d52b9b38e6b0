//! Special functions: regularized incomplete beta, its inverse, and the
//! normal CDF.

use crate::error::{Error, Result};

const CF_EPS: f64 = 1e-16;
const CF_TINY: f64 = 1e-300;
const CF_MAX_ITER: usize = 20_000;

pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

pub fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Inverse standard normal CDF, by bisection on [`normal_cdf`].
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid(format!("normal_quantile requires p in (0,1), got {p}")));
    }
    let (mut lo, mut hi) = (-40.0f64, 40.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if normal_cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

// Modified Lentz evaluation of the incomplete-beta continued fraction.
fn beta_continued_fraction(a: f64, b: f64, x: f64) -> Result<f64> {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < CF_TINY {
        d = CF_TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=CF_MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < CF_TINY {
            d = CF_TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < CF_TINY {
            c = CF_TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < CF_TINY {
            d = CF_TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < CF_TINY {
            c = CF_TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < CF_EPS {
            return Ok(h);
        }
    }
    Err(Error::invalid(format!(
        "incomplete beta continued fraction did not converge (x={x}, a={a}, b={b})"
    )))
}

/// Regularized incomplete beta function `I_x(a, b)`.
pub fn reg_inc_beta(x: f64, a: f64, b: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) || !(a > 0.0) || !(b > 0.0) || !a.is_finite() || !b.is_finite()
    {
        return Err(Error::invalid(format!(
            "reg_inc_beta requires x in [0,1], a > 0, b > 0 (got x={x}, a={a}, b={b})"
        )));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x == 1.0 {
        return Ok(1.0);
    }
    let ln_front = a * x.ln() + b * (1.0 - x).ln() - ln_beta(a, b);
    let front = ln_front.exp();
    let value = if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_continued_fraction(a, b, x)? / a
    } else {
        1.0 - front * beta_continued_fraction(b, a, 1.0 - x)? / b
    };
    Ok(value.clamp(0.0, 1.0))
}

/// Inverse of `I_x(a, b)` in `x`, by bisection.
pub fn beta_quantile(p: f64, a: f64, b: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid(format!("beta_quantile requires p in [0,1], got {p}")));
    }
    if !(a > 0.0) || !(b > 0.0) {
        return Err(Error::invalid(format!(
            "beta_quantile requires a > 0 and b > 0 (got a={a}, b={b})"
        )));
    }
    if p == 0.0 {
        return Ok(0.0);
    }
    if p == 1.0 {
        return Ok(1.0);
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while hi - lo > 1e-13 {
        let mid = 0.5 * (lo + hi);
        if reg_inc_beta(mid, a, b)? < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    #[test]
    fn incomplete_beta_examples() {
        assert!((reg_inc_beta(0.3, 1.0, 1.0).unwrap() - 0.3).abs() < 1e-12);
        assert!((reg_inc_beta(0.5, 2.0, 2.0).unwrap() - 0.5).abs() < 1e-12);
        // closed form 1 - (1 - x)^b for a = 1
        assert!((reg_inc_beta(0.5, 1.0, 2.0).unwrap() - 0.75).abs() < 1e-12);
    }

    #[test]
    fn closed_forms_on_grid() {
        for i in 0..=100 {
            let x = i as f64 / 100.0;
            for &b in &[0.5, 1.0, 3.0, 7.5] {
                let want = 1.0 - (1.0 - x).powf(b);
                assert!((reg_inc_beta(x, 1.0, b).unwrap() - want).abs() < 1e-10);
            }
            for &a in &[0.5, 2.0, 9.0] {
                assert!((reg_inc_beta(x, a, 1.0).unwrap() - x.powf(a)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn reflection_identity() {
        for &(a, b) in &[(0.3, 0.7), (2.0, 5.0), (90.0, 10.0), (450.5, 50.5), (1e4, 2e3)] {
            for i in 0..=50 {
                let x = i as f64 / 50.0;
                let s = reg_inc_beta(x, a, b).unwrap() + reg_inc_beta(1.0 - x, b, a).unwrap();
                assert!((s - 1.0).abs() < 1e-9, "a={a} b={b} x={x} sum={s}");
            }
        }
    }

    #[test]
    fn range_checks() {
        assert!(reg_inc_beta(-0.1, 1.0, 1.0).is_err());
        assert!(reg_inc_beta(0.5, 0.0, 1.0).is_err());
        assert!(reg_inc_beta(0.5, 1.0, -2.0).is_err());
        assert!(beta_quantile(1.5, 1.0, 1.0).is_err());
    }

    #[test]
    fn quantile_examples() {
        assert!((beta_quantile(0.5, 2.0, 2.0).unwrap() - 0.5).abs() < 1e-10);
        assert!((beta_quantile(0.25, 1.0, 1.0).unwrap() - 0.25).abs() < 1e-10);
        assert_eq!(beta_quantile(0.0, 3.0, 4.0).unwrap(), 0.0);
        assert_eq!(beta_quantile(1.0, 3.0, 4.0).unwrap(), 1.0);
        // rounded to 0.848 in the usual tables; reference 0.8467248563426735
        let q = beta_quantile(0.05, 90.0, 10.0).unwrap();
        assert!((q - 0.846_724_856_342_673_5).abs() < 1e-10, "{q}");
        let q = beta_quantile(0.95, 90.0, 10.0).unwrap();
        assert!((q - 0.944_167_821_157_933_5).abs() < 1e-10, "{q}");
    }

    /// Beta(a, b) sampled as the a-th order statistic of a + b - 1 uniforms.
    #[test]
    fn quantile_matches_monte_carlo() {
        let mut rng = SeededRng::new(2024);
        let (a, b) = (90usize, 10usize);
        let m = 4000;
        let q = beta_quantile(0.05, a as f64, b as f64).unwrap();
        let mut below = 0usize;
        let mut u = vec![0.0; a + b - 1];
        for _ in 0..m {
            u.iter_mut().for_each(|v| *v = rng.uniform());
            u.sort_by(f64::total_cmp);
            if u[a - 1] <= q {
                below += 1;
            }
        }
        let frac = below as f64 / m as f64;
        let se = (0.05f64 * 0.95 / m as f64).sqrt();
        assert!((frac - 0.05).abs() < 4.0 * se, "{frac}");
    }

    #[test]
    fn normal_cdf_values() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-15);
        assert!((2.0 * normal_cdf(1.0) - 1.0 - 0.682_689_492_137_086).abs() < 1e-12);
    }

    #[test]
    fn normal_quantile_inverts_cdf() {
        assert!((normal_quantile(0.95).unwrap() - 1.6448536269514722).abs() < 1e-12);
        assert!(normal_quantile(0.5).unwrap().abs() < 1e-14);
        for p in [1e-10, 0.01, 0.3, 0.77, 0.999] {
            assert!((normal_cdf(normal_quantile(p).unwrap()) / p - 1.0).abs() < 1e-10);
        }
        assert!(normal_quantile(1.0).is_err());
    }
}
