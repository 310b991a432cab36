use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dataset::summary::moments as summary_moments;
use crate::dataset::CohortTable;
use crate::{Error, Result};

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

/// `ln Γ(x)` for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = LANCZOS[0];
    let t = x + LANCZOS_G + 0.5;
    for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Continued fraction for the incomplete beta (modified Lentz).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-15;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=10_000 {
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

/// Regularized incomplete beta `I_x(a, b)`.
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_front.exp() * beta_cf(a, b, x) / a
    } else {
        1.0 - ln_front.exp() * beta_cf(b, a, 1.0 - x) / b
    }
}

/// Student-t CDF with `df` degrees of freedom.
pub fn student_t_cdf(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return if t > 0.0 { 1.0 } else { 0.0 };
    }
    let tail = 0.5 * regularized_incomplete_beta(df / 2.0, 0.5, df / (df + t * t));
    if t >= 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchResult {
    pub t: f64,
    pub df: f64,
    pub p: f64,
}

/// Two-sided Welch t-test from summary statistics (sample SDs).
pub fn welch_t(m1: f64, s1: f64, n1: usize, m2: f64, s2: f64, n2: usize) -> Result<WelchResult> {
    if n1 < 2 || n2 < 2 {
        return Err(Error::Config(format!("Welch test needs n >= 2 per group, got {n1} and {n2}")));
    }
    if !(s1 >= 0.0 && s2 >= 0.0) || !m1.is_finite() || !m2.is_finite() {
        return Err(Error::Config("Welch test needs finite means and nonnegative SDs".into()));
    }
    let a = s1 * s1 / n1 as f64;
    let b = s2 * s2 / n2 as f64;
    let diff = m1 - m2;
    if a + b == 0.0 {
        let df = (n1 + n2 - 2) as f64;
        return Ok(if diff == 0.0 {
            WelchResult { t: 0.0, df, p: 1.0 }
        } else {
            WelchResult {
                t: diff.signum() * f64::INFINITY,
                df,
                p: 0.0,
            }
        });
    }
    let t = diff / (a + b).sqrt();
    let df = (a + b).powi(2) / (a * a / (n1 - 1) as f64 + b * b / (n2 - 1) as f64);
    let p = regularized_incomplete_beta(df / 2.0, 0.5, df / (df + t * t)).clamp(0.0, 1.0);
    Ok(WelchResult { t, df, p })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub feature: String,
    pub mean_a: Option<f64>,
    pub sd_a: Option<f64>,
    pub n_a: usize,
    pub mean_b: Option<f64>,
    pub sd_b: Option<f64>,
    pub n_b: usize,
    pub test: Option<WelchResult>,
    pub note: Option<String>,
}

/// Per-feature Welch tests on observed values of two tables with a shared
/// schema. Features with fewer than two observations in a group are kept
/// with a note and no test.
pub fn compare_cohorts(a: &CohortTable, b: &CohortTable) -> Result<Vec<ComparisonRow>> {
    if a.schema() != b.schema() {
        return Err(Error::Schema("cohort comparison needs a shared schema".into()));
    }
    a.schema()
        .features
        .iter()
        .enumerate()
        .map(|(j, spec)| {
            let ma = summary_moments(a.column(j));
            let mb = summary_moments(b.column(j));
            let mut row = ComparisonRow {
                feature: spec.name.clone(),
                mean_a: ma.mean,
                sd_a: ma.sd,
                n_a: ma.documented,
                mean_b: mb.mean,
                sd_b: mb.sd,
                n_b: mb.documented,
                test: None,
                note: None,
            };
            match (ma.mean, ma.sd, mb.mean, mb.sd) {
                (Some(m1), Some(s1), Some(m2), Some(s2)) if ma.documented >= 2 && mb.documented >= 2 => {
                    row.test = Some(welch_t(m1, s1, ma.documented, m2, s2, mb.documented)?);
                }
                _ => row.note = Some("fewer than two observations in a group".into()),
            }
            Ok(row)
        })
        .collect()
}

pub fn write_comparison_csv<W: Write>(writer: W, rows: &[ComparisonRow]) -> Result<()> {
    let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_else(|| "NA".into());
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["feature", "mean_a", "sd_a", "n_a", "mean_b", "sd_b", "n_b", "t", "df", "p", "note"])?;
    for r in rows {
        w.write_record([
            r.feature.clone(),
            opt(r.mean_a),
            opt(r.sd_a),
            r.n_a.to_string(),
            opt(r.mean_b),
            opt(r.sd_b),
            r.n_b.to_string(),
            opt(r.test.map(|t| t.t)),
            opt(r.test.map(|t| t.df)),
            opt(r.test.map(|t| t.p)),
            r.note.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_groups() {
        let r = welch_t(5.0, 2.0, 30, 5.0, 2.0, 40).unwrap();
        assert_eq!(r.t, 0.0);
        assert!((r.p - 1.0).abs() < 1e-12);
        let r = welch_t(5.0, 0.0, 3, 5.0, 0.0, 3).unwrap();
        assert_eq!((r.t, r.p), (0.0, 1.0));
    }

    #[test]
    fn antisymmetric_in_groups() {
        let ab = welch_t(22.90, 17.85, 911, 20.03, 11.82, 390).unwrap();
        let ba = welch_t(20.03, 11.82, 390, 22.90, 17.85, 911).unwrap();
        assert_eq!(ab.t, -ba.t);
        assert!((ab.p - ba.p).abs() < 1e-15);
        assert!(ab.t > 0.0);
    }

    #[test]
    fn ln_gamma_at_integers() {
        let mut fact = 1.0f64;
        for n in 1..20 {
            assert!((ln_gamma(n as f64) - fact.ln()).abs() < 1e-12, "n = {n}");
            fact *= n as f64;
        }
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-13);
    }

    #[test]
    fn t_cdf_closed_forms() {
        // df = 1 is Cauchy, df = 2 has F(t) = 1/2 + t / (2 sqrt(2 + t^2))
        for t in [-3.0, -0.5, 0.0, 0.7, 4.0] {
            let cauchy = 0.5 + f64::atan(t) / std::f64::consts::PI;
            assert!((student_t_cdf(t, 1.0) - cauchy).abs() < 1e-12);
            let two = 0.5 + t / (2.0 * (2.0 + t * t).sqrt());
            assert!((student_t_cdf(t, 2.0) - two).abs() < 1e-12);
        }
    }
}
