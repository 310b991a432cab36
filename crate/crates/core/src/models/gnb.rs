use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::check_design;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GnbParams {
    /// Variance floor as a fraction of the largest feature variance.
    pub var_smoothing: f64,
}

impl Default for GnbParams {
    fn default() -> Self {
        Self { var_smoothing: 1e-9 }
    }
}

/// Index 0 holds the negative class, index 1 the positive class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianNbModel {
    pub priors: [f64; 2],
    pub means: [Vec<f64>; 2],
    pub variances: [Vec<f64>; 2],
    pub var_floor: f64,
}

impl GaussianNbModel {
    /// Unnormalized log joint `ln p(c) + Σ ln N(x_j; μ_cj, σ²_cj)`.
    pub fn log_joint(&self, row: &[f64]) -> [f64; 2] {
        let ln2pi = (2.0 * std::f64::consts::PI).ln();
        std::array::from_fn(|c| {
            self.priors[c].ln()
                + row
                    .iter()
                    .zip(&self.means[c])
                    .zip(&self.variances[c])
                    .map(|((x, m), v)| -0.5 * (ln2pi + v.ln()) - (x - m).powi(2) / (2.0 * v))
                    .sum::<f64>()
        })
    }

    /// Class posteriors by log-sum-exp.
    pub fn posterior(&self, row: &[f64]) -> [f64; 2] {
        let j = self.log_joint(row);
        let top = j[0].max(j[1]);
        let lse = top + ((j[0] - top).exp() + (j[1] - top).exp()).ln();
        [(j[0] - lse).exp(), (j[1] - lse).exp()]
    }

    /// Posterior log-odds of the positive class.
    pub fn margin(&self, row: &[f64]) -> f64 {
        let j = self.log_joint(row);
        j[1] - j[0]
    }
}

/// Weighted class priors, means and (population) variances.
pub fn train_gnb(x: ArrayView2<f64>, y: &[u8], w: &[f64], params: &GnbParams) -> Result<GaussianNbModel> {
    check_design(x, y, w)?;
    if !(params.var_smoothing > 0.0) {
        return Err(Error::Config("gnb: var_smoothing must be positive".into()));
    }
    let d = x.ncols();
    let mut wsum = [0.0; 2];
    let mut means = [vec![0.0; d], vec![0.0; d]];
    for ((row, &yi), &wi) in x.rows().into_iter().zip(y).zip(w) {
        let c = usize::from(yi);
        wsum[c] += wi;
        for (m, v) in means[c].iter_mut().zip(row) {
            *m += wi * v;
        }
    }
    if wsum[0] <= 0.0 || wsum[1] <= 0.0 {
        return Err(Error::Undefined("naive Bayes needs both classes".into()));
    }
    for c in 0..2 {
        for m in &mut means[c] {
            *m /= wsum[c];
        }
    }
    let mut variances = [vec![0.0; d], vec![0.0; d]];
    for ((row, &yi), &wi) in x.rows().into_iter().zip(y).zip(w) {
        let c = usize::from(yi);
        for ((v, m), xv) in variances[c].iter_mut().zip(&means[c]).zip(row) {
            *v += wi * (xv - m).powi(2);
        }
    }
    let total = wsum[0] + wsum[1];
    let max_var = (0..d)
        .map(|j| {
            let mu: f64 = x.column(j).iter().zip(w).map(|(v, wi)| v * wi).sum::<f64>() / total;
            x.column(j).iter().zip(w).map(|(v, wi)| wi * (v - mu).powi(2)).sum::<f64>() / total
        })
        .fold(0.0, f64::max);
    let var_floor = params.var_smoothing * if max_var > 0.0 { max_var } else { 1.0 };
    for c in 0..2 {
        for v in &mut variances[c] {
            *v = (*v / wsum[c]).max(var_floor);
        }
    }
    Ok(GaussianNbModel {
        priors: [wsum[0] / total, wsum[1] / total],
        means,
        variances,
        var_floor,
    })
}
