//! Special functions behind the t and chi-square tail probabilities.
//!
//! `ln_gamma` is a Lanczos approximation (g = 7, 9 coefficients); the regularized
//! incomplete beta uses the modified-Lentz continued fraction and the regularized
//! incomplete gamma switches between its power series (x < a + 1) and its continued
//! fraction. All routines are accurate to roughly 1e-14 relative over the ranges used
//! by the tests in this crate.

use std::f64::consts::PI;

const LANCZOS_G: f64 = 7.0;
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

const MAX_ITER: usize = 10_000;
const TINY: f64 = 1e-300;

/// Natural log of the gamma function for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        (PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x)
    } else {
        let x = x - 1.0;
        let mut acc = LANCZOS[0];
        let t = x + LANCZOS_G + 0.5;
        for (i, c) in LANCZOS.iter().enumerate().skip(1) {
            acc += c / (x + i as f64);
        }
        0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
    }
}

/// Regularized incomplete beta function `I_x(a, b)`.
pub fn beta_reg(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < f64::EPSILON {
            break;
        }
    }
    h
}

/// Regularized lower incomplete gamma `P(a, x)`.
pub fn gamma_p(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x < a + 1.0 {
        gamma_series(a, x)
    } else {
        1.0 - gamma_cf(a, x)
    }
}

/// Regularized upper incomplete gamma `Q(a, x) = 1 - P(a, x)`.
pub fn gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else if x < a + 1.0 {
        1.0 - gamma_series(a, x)
    } else {
        gamma_cf(a, x)
    }
}

fn gamma_series(a: f64, x: f64) -> f64 {
    let mut ap = a;
    let mut sum = 1.0 / a;
    let mut del = sum;
    for _ in 0..MAX_ITER {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if del.abs() < sum.abs() * f64::EPSILON {
            break;
        }
    }
    sum * (-x + a * x.ln() - ln_gamma(a)).exp()
}

fn gamma_cf(a: f64, x: f64) -> f64 {
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..=MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < f64::EPSILON {
            break;
        }
    }
    (-x + a * x.ln() - ln_gamma(a)).exp() * h
}

/// Two-sided tail probability `P(|T| >= |t|)` of Student's t with `df` degrees of freedom.
pub fn student_t_two_sided(t: f64, df: f64) -> f64 {
    if t.is_nan() || df.is_nan() || df <= 0.0 {
        return f64::NAN;
    }
    if t.is_infinite() {
        return 0.0;
    }
    beta_reg(df / 2.0, 0.5, df / (df + t * t))
}

/// Survival function of the chi-square distribution with `df` degrees of freedom.
pub fn chi_square_sf(x: f64, df: f64) -> f64 {
    gamma_q(df / 2.0, x / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ln_gamma_known_values() {
        assert!((ln_gamma(1.0)).abs() < 1e-14);
        assert!((ln_gamma(0.5) - PI.sqrt().ln()).abs() < 1e-14);
        // ln(10!) = ln(3628800)
        assert!((ln_gamma(11.0) - 3_628_800f64.ln()).abs() < 1e-12);
        for x in [0.1, 0.7, 2.5, 13.3, 171.0] {
            assert!((ln_gamma(x) - statrs::function::gamma::ln_gamma(x)).abs() < 1e-12 * x.max(1.0));
        }
    }

    #[test]
    fn beta_reg_symmetry_and_bounds() {
        for &(a, b, x) in &[(0.5, 0.5, 0.3), (2.0, 5.0, 0.1), (10.0, 0.5, 0.97), (1.0, 1.0, 0.42)] {
            let v = beta_reg(a, b, x);
            assert!((v + beta_reg(b, a, 1.0 - x) - 1.0).abs() < 1e-13);
            let oracle = statrs::function::beta::beta_reg(a, b, x);
            assert!((v - oracle).abs() < 1e-12, "{a} {b} {x}: {v} vs {oracle}");
        }
        // I_x(1,1) = x
        assert!((beta_reg(1.0, 1.0, 0.42) - 0.42).abs() < 1e-15);
    }

    #[test]
    fn t_tail_matches_cauchy_closed_form() {
        // df = 1 is the Cauchy distribution: P(|T| >= t) = 1 - 2 atan(t) / pi
        for t in [0.0, 0.3, 1.0, 4.0, 25.0] {
            let expected = 1.0 - 2.0 * f64::atan(t) / PI;
            assert!((student_t_two_sided(t, 1.0) - expected).abs() < 1e-13);
        }
        // df = 2: P(|T| >= t) = 1 - t / sqrt(2 + t^2)
        for t in [0.5, 2.0, 9.0] {
            let expected = 1.0 - t / (2.0_f64 + t * t).sqrt();
            assert!((student_t_two_sided(t, 2.0) - expected).abs() < 1e-13);
        }
    }

    #[test]
    fn chi_square_even_df_closed_form() {
        // df = 2k: Q = exp(-x/2) * sum_{i<k} (x/2)^i / i!
        for k in 1..8 {
            for x in [0.1, 1.0, 2.772_588_722_239_781, 7.5, 30.0] {
                let h = x / 2.0;
                let mut term = 1.0;
                let mut sum = 0.0;
                for i in 0..k {
                    if i > 0 {
                        term *= h / i as f64;
                    }
                    sum += term;
                }
                let expected = (-h).exp() * sum;
                assert!((chi_square_sf(x, 2.0 * k as f64) - expected).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn gamma_p_q_complement() {
        for &(a, x) in &[(0.5, 0.2), (3.0, 1.0), (3.0, 9.0), (40.0, 38.0)] {
            assert!((gamma_p(a, x) + gamma_q(a, x) - 1.0).abs() < 1e-14);
        }
    }
}
