//! Paired significance testing on per-stock prediction errors.

use crate::error::{Error, Result};

/// Result of a paired Student's t-test on absolute prediction errors.
#[derive(Debug, Clone)]
pub struct PairedTestResult {
    pub method_a: String,
    pub method_b: String,
    pub n: usize,
    pub mean_diff: f64,
    pub t_stat: f64,
    pub p_value: f64,
    /// set when the differences have zero variance but nonzero mean; the
    /// p-value underflows and is reported as 0 (< 1e-300)
    pub zero_variance: bool,
}

/// Paired t-test on |a| - |b| over cells defined in both inputs. The two
/// slices must be aligned cell-for-cell ((stock, day) grain).
pub fn paired_t_test(
    method_a: &str,
    method_b: &str,
    a: &[Option<f64>],
    b: &[Option<f64>],
) -> Result<PairedTestResult> {
    assert_eq!(a.len(), b.len(), "inputs must share one shape");
    let diffs: Vec<f64> = a
        .iter()
        .zip(b)
        .filter_map(|(x, y)| match (x, y) {
            (Some(x), Some(y)) => Some(x.abs() - y.abs()),
            _ => None,
        })
        .collect();
    let n = diffs.len();
    if n < 2 {
        return Err(Error::InsufficientPairs(n));
    }
    let nf = n as f64;
    let mean = diffs.iter().sum::<f64>() / nf;
    let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (nf - 1.0);
    let sd = var.sqrt();

    if sd == 0.0 {
        return Ok(if mean == 0.0 {
            PairedTestResult {
                method_a: method_a.into(),
                method_b: method_b.into(),
                n,
                mean_diff: 0.0,
                t_stat: 0.0,
                p_value: 1.0,
                zero_variance: false,
            }
        } else {
            PairedTestResult {
                method_a: method_a.into(),
                method_b: method_b.into(),
                n,
                mean_diff: mean,
                t_stat: if mean > 0.0 { f64::INFINITY } else { f64::NEG_INFINITY },
                p_value: 0.0,
                zero_variance: true,
            }
        });
    }

    let t = mean / (sd / nf.sqrt());
    let p = 2.0 * (1.0 - t_cdf(t.abs(), n - 1));
    Ok(PairedTestResult {
        method_a: method_a.into(),
        method_b: method_b.into(),
        n,
        mean_diff: mean,
        t_stat: t,
        p_value: p.clamp(0.0, 1.0),
        zero_variance: false,
    })
}

/// Cumulative distribution of Student's t with `df` degrees of freedom,
/// via the regularized incomplete beta function.
pub fn t_cdf(x: f64, df: usize) -> f64 {
    assert!(df >= 1, "df must be >= 1");
    if x == 0.0 {
        return 0.5;
    }
    let v = df as f64;
    let z = v / (v + x * x);
    let tail = 0.5 * reg_inc_beta(0.5 * v, 0.5, z);
    if x > 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// ln Gamma(x) for x > 0 (Lanczos approximation, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.5203681218851,
        -1259.1392167224028,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507343278686905,
        -0.13857109526572012,
        9.984_369_578_019_572e-6,
        1.5056327351493116e-7,
    ];
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = COEF[0];
    let t = x + 7.5;
    for (i, &c) in COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Regularized incomplete beta I_x(a, b) by Lentz's continued fraction.
pub fn reg_inc_beta(a: f64, b: f64, x: f64) -> f64 {
    assert!((0.0..=1.0).contains(&x));
    if x == 0.0 {
        return 0.0;
    }
    if x == 1.0 {
        return 1.0;
    }
    let front =
        (ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln()).exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - (ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b)
            + b * (1.0 - x).ln()
            + a * x.ln())
        .exp()
            * beta_cf(b, a, 1.0 - x)
            / b
    }
}

fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const MAX_ITER: usize = 500;
    const EPS: f64 = 1e-16;
    const TINY: f64 = 1e-300;

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
        let mf = m as f64;
        let m2 = 2.0 * mf;
        let aa = mf * (b - mf) * x / ((qam + m2) * (a + m2));
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
        let aa = -(a + mf) * (qab + mf) * x / ((a + m2) * (qap + m2));
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
