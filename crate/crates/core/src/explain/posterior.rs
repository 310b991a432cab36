use ndarray::ArrayView2;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dream::{dream_sample, DreamConfig, DreamResult};
use crate::dataset::{CohortSummary, FeatureKind, Schema};
use crate::models::{log1p_exp, logreg::cholesky_solve, sigmoid};
use crate::rng;
use crate::{Error, Result};

/// Split-R̂ above which a run is flagged unreliable.
pub const R_HAT_LIMIT: f64 = 1.2;

/// Binary flags are enumerated exactly; more than this many is refused.
const MAX_ENUMERATED_FLAGS: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorRisk {
    /// Predicted probability for every retained draw, chain-major.
    pub samples: Vec<f64>,
    pub mean: f64,
    /// Nearest-rank 2.5% and 97.5% order statistics of `samples`.
    pub ci_low: f64,
    pub ci_high: f64,
    pub acceptance_rate: f64,
    pub r_hat: Vec<f64>,
    pub reliable: bool,
    pub warnings: Vec<String>,
}

fn nearest_rank(sorted: &[f64], q: f64) -> f64 {
    let k = (q * sorted.len() as f64).ceil() as usize;
    sorted[k.clamp(1, sorted.len()) - 1]
}

impl PosteriorRisk {
    /// Summarizes draws. The mean is accumulated over the sorted draws so the
    /// summary does not depend on chain order.
    pub fn from_samples(samples: Vec<f64>, acceptance_rate: f64, r_hat: Vec<f64>, mut warnings: Vec<String>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Numeric("posterior has no retained samples".into()));
        }
        let mut sorted = samples.clone();
        sorted.sort_by(f64::total_cmp);
        let mean = sorted.iter().sum::<f64>() / sorted.len() as f64;
        let reliable = r_hat.iter().all(|&r| r.is_finite() && r <= R_HAT_LIMIT);
        if !reliable {
            let msg = format!("split-R-hat above {R_HAT_LIMIT} (max {:.3})", r_hat.iter().cloned().fold(f64::NAN, f64::max));
            log::warn!("posterior: {msg}");
            warnings.push(msg);
        }
        Ok(Self {
            mean,
            ci_low: nearest_rank(&sorted, 0.025),
            ci_high: nearest_rank(&sorted, 0.975),
            samples,
            acceptance_rate,
            r_hat,
            reliable,
            warnings,
        })
    }

    fn from_dream(samples: Vec<f64>, run: DreamResult) -> Result<Self> {
        Self::from_samples(samples, run.acceptance_rate, run.r_hat, run.warnings)
    }
}

struct Sampled {
    col: usize,
    mean: f64,
    sd: f64,
    lower: f64,
    upper: f64,
}

/// Risk of a hypothetical patient whose features follow the per-feature
/// moments of group `label` in `summary`. Continuous and ordinal features get
/// independent Gaussians truncated to the schema bounds and are sampled by
/// DREAM; binary flags are Bernoulli with the group prevalence and are
/// summed out exactly for every draw. `predict` maps a full row in schema
/// order to a probability.
pub fn posterior_risk_inputs<F>(
    predict: F,
    schema: &Schema,
    summary: &CohortSummary,
    label: u8,
    cfg: &DreamConfig,
) -> Result<PosteriorRisk>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let mut base = vec![0.0; schema.len()];
    let mut sampled = Vec::new();
    let mut flags = Vec::new();
    for (col, spec) in schema.features.iter().enumerate() {
        let m = summary
            .moments(label, &spec.name)
            .ok_or_else(|| Error::Config(format!("no prior moments for `{}`", spec.name)))?;
        let (Some(mean), Some(sd)) = (m.mean, m.sd) else {
            return Err(Error::Config(format!("prior moments for `{}` are incomplete", spec.name)));
        };
        match spec.kind {
            FeatureKind::Categorical => {
                return Err(Error::Unsupported(format!(
                    "categorical feature `{}` has no Gaussian or Bernoulli prior",
                    spec.name
                )))
            }
            FeatureKind::Binary => flags.push((col, mean.clamp(0.0, 1.0))),
            FeatureKind::Continuous | FeatureKind::OrdinalScore => {
                base[col] = spec.clamp(mean);
                if sd > 0.0 {
                    sampled.push(Sampled {
                        col,
                        mean,
                        sd,
                        lower: spec.lower.unwrap_or(f64::NEG_INFINITY),
                        upper: spec.upper.unwrap_or(f64::INFINITY),
                    });
                }
            }
        }
    }
    if flags.len() > MAX_ENUMERATED_FLAGS {
        return Err(Error::Config(format!("{} binary flags exceed the enumeration limit", flags.len())));
    }
    let combos: Vec<(f64, Vec<f64>)> = (0..1usize << flags.len())
        .map(|bits| {
            let mut weight = 1.0;
            let values = flags
                .iter()
                .enumerate()
                .map(|(i, &(_, p))| {
                    let on = bits >> i & 1 == 1;
                    weight *= if on { p } else { 1.0 - p };
                    f64::from(u8::from(on))
                })
                .collect();
            (weight, values)
        })
        .filter(|(w, _)| *w > 0.0)
        .collect();
    let risk = |state: &[f64]| -> f64 {
        let mut row = base.clone();
        for (s, v) in sampled.iter().zip(state) {
            row[s.col] = *v;
        }
        combos
            .iter()
            .map(|(w, values)| {
                for (&(col, _), v) in flags.iter().zip(values) {
                    row[col] = *v;
                }
                w * predict(&row)
            })
            .sum()
    };
    if sampled.is_empty() {
        return PosteriorRisk::from_samples(vec![risk(&[])], 1.0, Vec::new(), Vec::new());
    }
    let log_density = |state: &[f64]| -> f64 {
        let mut lp = 0.0;
        for (s, &v) in sampled.iter().zip(state) {
            if v < s.lower || v > s.upper {
                return f64::NEG_INFINITY;
            }
            lp -= 0.5 * ((v - s.mean) / s.sd).powi(2);
        }
        lp
    };
    let init: Vec<Vec<f64>> = (0..cfg.n_chains)
        .map(|c| {
            let mut r = rng::derived(cfg.seed, &[u64::MAX, c as u64]);
            sampled
                .iter()
                .map(|s| {
                    for _ in 0..1000 {
                        let z: f64 = StandardNormal.sample(&mut r);
                        let v = s.mean + s.sd * z;
                        if v >= s.lower && v <= s.upper {
                            return v;
                        }
                    }
                    s.mean.clamp(s.lower, s.upper)
                })
                .collect()
        })
        .collect();
    let run = dream_sample(log_density, &init, cfg)?;
    let states: Vec<&Vec<f64>> = run.pooled().collect();
    let samples: Vec<f64> = states.par_iter().map(|s| risk(s)).collect();
    PosteriorRisk::from_dream(samples, run)
}

/// Log posterior of a logistic model with an isotropic Gaussian prior on
/// every coefficient, the bias (stored last) included.
fn log_posterior(x: ArrayView2<f64>, y: &[u8], theta: &[f64], prior_sd: f64) -> f64 {
    let d = x.ncols();
    let mut lp = -theta.iter().map(|t| t * t).sum::<f64>() / (2.0 * prior_sd * prior_sd);
    for (row, &yi) in x.rows().into_iter().zip(y) {
        let m = theta[d] + row.iter().zip(theta).map(|(a, b)| a * b).sum::<f64>();
        lp += f64::from(yi) * m - log1p_exp(m);
    }
    lp
}

/// Newton ascent to the posterior mode; returns the mode and the marginal
/// standard deviations of the Laplace approximation.
fn posterior_mode(x: ArrayView2<f64>, y: &[u8], prior_sd: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = x.ncols();
    let p = d + 1;
    let precision = 1.0 / (prior_sd * prior_sd);
    let mut theta = vec![0.0; p];
    let mut current = log_posterior(x, y, &theta, prior_sd);
    let hessian = |theta: &[f64]| -> (Vec<f64>, Vec<f64>) {
        let mut g: Vec<f64> = theta.iter().map(|t| -t * precision).collect();
        let mut h = vec![0.0; p * p];
        for j in 0..p {
            h[j * p + j] = precision;
        }
        let mut xi = vec![1.0; p];
        for (row, &yi) in x.rows().into_iter().zip(y) {
            xi[..d].iter_mut().zip(row).for_each(|(a, b)| *a = *b);
            let m: f64 = xi.iter().zip(theta).map(|(a, b)| a * b).sum();
            let pr = sigmoid(m);
            let v = pr * (1.0 - pr);
            for j in 0..p {
                g[j] += (f64::from(yi) - pr) * xi[j];
                for k in 0..p {
                    h[j * p + k] += v * xi[j] * xi[k];
                }
            }
        }
        (g, h)
    };
    for _ in 0..100 {
        let (g, h) = hessian(&theta);
        let step = cholesky_solve(h, g.clone(), p)
            .ok_or_else(|| Error::Numeric("posterior Hessian is not positive definite".into()))?;
        let slope: f64 = step.iter().zip(&g).map(|(a, b)| a * b).sum();
        let mut t = 1.0;
        loop {
            let trial: Vec<f64> = theta.iter().zip(&step).map(|(a, s)| a + t * s).collect();
            let value = log_posterior(x, y, &trial, prior_sd);
            if value >= current + 1e-4 * t * slope || t < 1e-10 {
                theta = trial;
                current = value;
                break;
            }
            t *= 0.5;
        }
        if (t * slope).abs() < 1e-12 {
            break;
        }
    }
    let (_, h) = hessian(&theta);
    let sds = (0..p)
        .map(|j| {
            let mut e = vec![0.0; p];
            e[j] = 1.0;
            cholesky_solve(h.clone(), e, p)
                .map(|col| col[j].sqrt())
                .ok_or_else(|| Error::Numeric("posterior Hessian is not positive definite".into()))
        })
        .collect::<Result<_>>()?;
    Ok((theta, sds))
}

/// Posterior predictive risk for `row` under Bayesian logistic regression on
/// the design `x`: DREAM samples the coefficients and each draw is mapped to
/// `sigmoid(θ·row + bias)`. Chains start around the posterior mode.
pub fn posterior_risk_params(
    x: ArrayView2<f64>,
    y: &[u8],
    row: &[f64],
    prior_sd: f64,
    cfg: &DreamConfig,
) -> Result<PosteriorRisk> {
    crate::models::check_design(x, y, &vec![1.0; y.len()])?;
    if row.len() != x.ncols() {
        return Err(Error::Schema(format!("row has {} values, design has {} columns", row.len(), x.ncols())));
    }
    if !(prior_sd > 0.0 && prior_sd.is_finite()) {
        return Err(Error::Config(format!("prior sd {prior_sd} must be positive and finite")));
    }
    let x = x.as_standard_layout();
    let (mode, sds) = posterior_mode(x.view(), y, prior_sd)?;
    let init: Vec<Vec<f64>> = (0..cfg.n_chains)
        .map(|c| {
            let mut r = rng::derived(cfg.seed, &[u64::MAX, c as u64]);
            mode.iter()
                .zip(&sds)
                .map(|(m, s)| { let z: f64 = StandardNormal.sample(&mut r); m + s * z })
                .collect()
        })
        .collect();
    let run = dream_sample(|theta| log_posterior(x.view(), y, theta, prior_sd), &init, cfg)?;
    let d = row.len();
    let samples = run
        .pooled()
        .map(|theta| sigmoid(theta[d] + row.iter().zip(theta).map(|(a, b)| a * b).sum::<f64>()))
        .collect();
    PosteriorRisk::from_dream(samples, run)
}

/// Posterior CSV: `sample,risk`.
pub fn write_posterior_csv<W: std::io::Write>(writer: W, risk: &PosteriorRisk) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["sample", "risk"])?;
    for (i, v) in risk.samples.iter().enumerate() {
        w.write_record([i.to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_rank_bounds_are_sample_values() {
        let s: Vec<f64> = (1..=200).map(f64::from).collect();
        assert_eq!(nearest_rank(&s, 0.025), 5.0);
        assert_eq!(nearest_rank(&s, 0.975), 195.0);
        assert_eq!(nearest_rank(&[0.4], 0.025), 0.4);
    }

    #[test]
    fn summary_ignores_chain_order() {
        let a: Vec<f64> = (0..400).map(|i| ((i * 37) % 101) as f64 / 101.0).collect();
        let mut b = a[200..].to_vec();
        b.extend_from_slice(&a[..200]);
        let pa = PosteriorRisk::from_samples(a, 0.3, vec![1.0], vec![]).unwrap();
        let pb = PosteriorRisk::from_samples(b, 0.3, vec![1.0], vec![]).unwrap();
        assert_eq!((pa.mean, pa.ci_low, pa.ci_high), (pb.mean, pb.ci_low, pb.ci_high));
    }
}
