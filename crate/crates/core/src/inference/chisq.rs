//! Chi-squared distribution function and quantile via the regularized lower
//! incomplete gamma function.

use crate::error::{Error, Result};

const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// `ln Γ(x)` for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let t = x + 7.5;
    let mut a = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Regularized lower incomplete gamma `P(a, x)`.
pub fn gamma_p(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let log_prefix = a * x.ln() - x - ln_gamma(a);
    if x < a + 1.0 {
        // Power series.
        let mut term = 1.0 / a;
        let mut sum = term;
        let mut n = a;
        for _ in 0..10_000 {
            n += 1.0;
            term *= x / n;
            sum += term;
            if term.abs() < sum.abs() * 1e-17 {
                break;
            }
        }
        (sum.ln() + log_prefix).exp().min(1.0)
    } else {
        // Continued fraction for Q (modified Lentz).
        let tiny = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..10_000 {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let del = d * c;
            h *= del;
            if (del - 1.0).abs() < 1e-17 {
                break;
            }
        }
        (1.0 - (log_prefix.exp() * h)).max(0.0)
    }
}

pub fn chi2_cdf(x: f64, df: f64) -> f64 {
    gamma_p(0.5 * df, 0.5 * x)
}

/// `c` with `chi2_cdf(c, df) = p`.
pub fn chi2_quantile(p: f64, df: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid("alpha", format!("probability must lie in (0, 1), got {p}")));
    }
    if !(df > 0.0) {
        return Err(Error::invalid("df", "degrees of freedom must be positive"));
    }
    let (mut lo, mut hi) = (0.0, df.max(1.0));
    while chi2_cdf(hi, df) < p {
        lo = hi;
        hi *= 2.0;
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let f = chi2_cdf(x, df) - p;
        if f.abs() < 1e-15 {
            break;
        }
        if f > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        // Newton step on the density, falling back to bisection.
        let k = 0.5 * df;
        let dens = ((k - 1.0) * (0.5 * x).ln() - 0.5 * x - ln_gamma(k)).exp() * 0.5;
        let nx = x - f / dens;
        x = if dens > 0.0 && nx > lo && nx < hi {
            nx
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo < 1e-15 * hi {
            break;
        }
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_df_closed_form() {
        for p in [0.5, 0.9, 0.95, 0.99] {
            let q = chi2_quantile(p, 2.0).unwrap();
            assert!((q - (-2.0 * (1.0 - p).ln())).abs() < 1e-9, "{p}");
            assert!((chi2_cdf(q, 2.0) - p).abs() < 1e-10);
        }
        assert!((chi2_quantile(0.95, 2.0).unwrap() - 5.991).abs() < 5e-4);
    }

    #[test]
    fn ln_gamma_values() {
        assert!((ln_gamma(1.0)).abs() < 1e-13);
        assert!((ln_gamma(5.0) - 24f64.ln()).abs() < 1e-12);
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-12);
    }

    #[test]
    fn other_df() {
        for df in [1.0, 3.0, 7.5, 30.0] {
            for p in [0.01, 0.5, 0.95, 0.999] {
                let q = chi2_quantile(p, df).unwrap();
                assert!((chi2_cdf(q, df) - p).abs() < 1e-10, "df {df} p {p}");
            }
        }
        assert!(chi2_quantile(1.0, 2.0).is_err());
    }
}
