//! Special functions and the Welch two-sample t-test.

use serde::Serialize;

use crate::error::{Error, Result};

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
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

/// Natural log of the gamma function for `x > 0` (Lanczos approximation).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = LANCZOS_COEF[0];
    let t = x + LANCZOS_G + 0.5;
    for (i, c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Continued fraction for the incomplete beta function, modified Lentz.
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    const MAX_ITER: usize = 1000;

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
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta function `I_x(a, b)`.
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    assert!(a > 0.0 && b > 0.0, "shape parameters must be positive");
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let front = (a * x.ln() + b * (1.0 - x).ln() - ln_beta(a, b)).exp();
    // the fraction converges fast for x below the mean; use symmetry otherwise
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

/// Two-sided tail probability `P(|T| >= |t|)` for Student's t with `df` degrees of freedom.
pub fn student_t_two_sided(t: f64, df: f64) -> f64 {
    if t.is_nan() {
        return f64::NAN;
    }
    if t.is_infinite() {
        return 0.0;
    }
    regularized_incomplete_beta(df / 2.0, 0.5, df / (df + t * t)).min(1.0)
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn sample_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WelchResult {
    pub mean_a: f64,
    pub mean_b: f64,
    pub t_statistic: f64,
    pub degrees_freedom: f64,
    pub p_value: f64,
    pub n_a: usize,
    pub n_b: usize,
    /// Both samples had zero variance; `p` is the limiting value.
    pub degenerate: bool,
}

/// Welch's unequal-variance t-test, two-sided. `t` is positive when `a` has the larger mean.
pub fn welch_t(a: &[f64], b: &[f64]) -> Result<WelchResult> {
    let (n_a, n_b) = (a.len(), b.len());
    if n_a < 2 || n_b < 2 {
        return Err(Error::SampleTooSmall { n_a, n_b });
    }
    let (mean_a, mean_b) = (mean(a), mean(b));
    let (va, vb) = (sample_variance(a), sample_variance(b));
    if !(va.is_finite() && vb.is_finite()) {
        return Err(Error::DegenerateSamples);
    }
    let (sa, sb) = (va / n_a as f64, vb / n_b as f64);
    let se2 = sa + sb;
    if se2 == 0.0 {
        let same = mean_a == mean_b;
        return Ok(WelchResult {
            mean_a,
            mean_b,
            t_statistic: if same {
                0.0
            } else {
                f64::INFINITY.copysign(mean_a - mean_b)
            },
            degrees_freedom: (n_a + n_b - 2) as f64,
            p_value: if same { 1.0 } else { 0.0 },
            n_a,
            n_b,
            degenerate: true,
        });
    }
    let t = (mean_a - mean_b) / se2.sqrt();
    let df = se2 * se2 / (sa * sa / (n_a as f64 - 1.0) + sb * sb / (n_b as f64 - 1.0));
    Ok(WelchResult {
        mean_a,
        mean_b,
        t_statistic: t,
        degrees_freedom: df,
        p_value: student_t_two_sided(t, df),
        n_a,
        n_b,
        degenerate: false,
    })
}

/// Kolmogorov-Smirnov distance between a sample and the uniform(0, 1) distribution.
pub fn ks_uniform_distance(sample: &[f64]) -> f64 {
    let mut v = sample.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &x)| {
            let lo = x - i as f64 / n;
            let hi = (i + 1) as f64 / n - x;
            lo.max(hi)
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use statrs::distribution::{ContinuousCDF, StudentsT};
    use statrs::function::beta::beta_reg;
    use statrs::function::gamma::ln_gamma as ref_ln_gamma;

    #[test]
    fn ln_gamma_matches_reference() {
        for &x in &[0.1, 0.5, 1.0, 1.5, 2.0, 3.7, 10.0, 55.5, 170.0] {
            let r = ref_ln_gamma(x);
            assert!((ln_gamma(x) - r).abs() <= 1e-12 * r.abs().max(1.0), "x = {x}");
        }
    }

    #[test]
    fn incomplete_beta_matches_reference() {
        for &(a, b) in &[(0.5, 0.5), (3.0, 0.5), (1.0, 1.0), (25.0, 0.5), (2000.0, 0.5), (4.2, 7.7)] {
            for i in 1..100 {
                let x = i as f64 / 100.0;
                let (got, want) = (regularized_incomplete_beta(a, b, x), beta_reg(a, b, x));
                assert!(
                    (got - want).abs() <= 1e-10 * want.max(1e-300) || (got - want).abs() < 1e-14,
                    "I({x}; {a}, {b}) = {got} vs {want}"
                );
            }
        }
    }

    #[test]
    fn t_tail_matches_reference() {
        for &df in &[1.0, 2.5, 6.0, 30.0, 400.0] {
            let dist = StudentsT::new(0.0, 1.0, df).unwrap();
            for &t in &[0.0, 0.3, 1.0, 2.0, 4.5, -3.0] {
                let want = 2.0 * (1.0 - dist.cdf(f64::abs(t)));
                assert_abs_diff_eq!(student_t_two_sided(t, df), want, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn worked_example() {
        let r = welch_t(&[10.0, 12.0, 14.0, 16.0], &[11.0, 13.0, 15.0, 17.0]).unwrap();
        assert_abs_diff_eq!(r.t_statistic, -0.5477, epsilon = 1e-4);
        assert_abs_diff_eq!(r.degrees_freedom, 6.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.p_value, 0.604, epsilon = 1e-3);
        let dist = StudentsT::new(0.0, 1.0, 6.0).unwrap();
        assert_abs_diff_eq!(r.p_value, 2.0 * dist.cdf(r.t_statistic), epsilon = 1e-10);
    }

    #[test]
    fn identical_samples() {
        let a = [1.0, 2.0, 5.0, 9.0];
        let r = welch_t(&a, &a).unwrap();
        assert_eq!(r.t_statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn degenerate_samples() {
        let r = welch_t(&[3.0, 3.0], &[3.0, 3.0, 3.0]).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.p_value, 1.0);
        let r = welch_t(&[3.0, 3.0], &[4.0, 4.0]).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.p_value, 0.0);
        assert!(matches!(welch_t(&[1.0], &[1.0, 2.0]), Err(Error::SampleTooSmall { .. })));
    }

    #[test]
    fn ks_distance_of_grid() {
        let v: Vec<f64> = (0..100).map(|i| (i as f64 + 0.5) / 100.0).collect();
        assert_abs_diff_eq!(ks_uniform_distance(&v), 0.005, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn antisymmetry(
            a in prop::collection::vec(-100.0f64..100.0, 2..30),
            b in prop::collection::vec(-100.0f64..100.0, 2..30),
        ) {
            let (ab, ba) = (welch_t(&a, &b).unwrap(), welch_t(&b, &a).unwrap());
            prop_assert_eq!(ab.t_statistic, -ba.t_statistic);
            prop_assert_eq!(ab.p_value, ba.p_value);
            prop_assert!(ab.degrees_freedom <= (a.len() + b.len() - 2) as f64 + 1e-9);
            prop_assert!(ab.p_value > 0.0 && ab.p_value <= 1.0);
        }
    }
}
