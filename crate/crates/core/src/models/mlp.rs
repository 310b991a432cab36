//! One-hidden-layer ReLU network with a sigmoid output, trained on weighted
//! binary cross-entropy with Adam and early stopping.

use ndarray::{Array1, Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{check_design, log1p_exp, logit, sigmoid, PROBA_CLIP};
use crate::dataset::split::stratified_split_labels;
use crate::rng;
use crate::{Error, Result};

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpConfig {
    pub hidden: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub dropout: f64,
    /// Share of the training rows held out for early stopping; 0 disables it.
    pub validation_fraction: f64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            hidden: 16,
            learning_rate: 1e-3,
            batch_size: 32,
            epochs: 200,
            patience: 20,
            dropout: 0.0,
            validation_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    /// `d × h`.
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array1<f64>,
    pub b2: f64,
    pub config: MlpConfig,
    /// Per-epoch weighted loss on the fitting rows, without dropout.
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    /// Epoch whose parameters were kept (0-based).
    pub best_epoch: usize,
}

/// Gradient with the same shapes as the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGradient {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array1<f64>,
    pub b2: f64,
}

impl MlpModel {
    /// Parameters drawn He-normal for the hidden layer and scaled normal for
    /// the output layer; `b2` starts at `output_bias`.
    pub fn init(d: usize, config: &MlpConfig, output_bias: f64, seed: u64) -> Self {
        let h = config.hidden;
        let mut r = rng::seeded(seed);
        let n1 = Normal::new(0.0, (2.0 / d.max(1) as f64).sqrt()).expect("finite sd");
        let n2 = Normal::new(0.0, (1.0 / h as f64).sqrt()).expect("finite sd");
        Self {
            w1: Array2::from_shape_simple_fn((d, h), || n1.sample(&mut r)),
            b1: Array1::zeros(h),
            w2: Array1::from_shape_simple_fn(h, || n2.sample(&mut r)),
            b2: output_bias,
            config: config.clone(),
            train_loss: Vec::new(),
            val_loss: Vec::new(),
            best_epoch: 0,
        }
    }

    pub fn n_features(&self) -> usize {
        self.w1.nrows()
    }

    fn hidden(&self, row: &[f64]) -> Vec<f64> {
        let mut z = self.b1.to_vec();
        for (xj, wrow) in row.iter().zip(self.w1.rows()) {
            if *xj != 0.0 {
                for (zk, w) in z.iter_mut().zip(wrow) {
                    *zk += xj * w;
                }
            }
        }
        z
    }

    pub fn margin(&self, row: &[f64]) -> f64 {
        self.b2
            + self
                .hidden(row)
                .iter()
                .zip(&self.w2)
                .map(|(z, w)| z.max(0.0) * w)
                .sum::<f64>()
    }

    /// Weighted mean cross-entropy `Σ wᵢ ℓᵢ / Σ wᵢ` over `rows`.
    fn loss_on(&self, x: ArrayView2<f64>, y: &[u8], w: &[f64], rows: &[usize]) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for &i in rows {
            let m = self.margin(x.row(i).as_slice().expect("standard layout"));
            num += w[i] * (log1p_exp(m) - f64::from(y[i]) * m);
            den += w[i];
        }
        num / den
    }

    /// Loss and analytic gradient over all rows, without dropout.
    pub fn loss_and_gradient(&self, x: ArrayView2<f64>, y: &[u8], w: &[f64]) -> (f64, MlpGradient) {
        let x = x.as_standard_layout();
        let rows: Vec<usize> = (0..x.nrows()).collect();
        let loss = self.loss_on(x.view(), y, w, &rows);
        (loss, self.gradient(x.view(), y, w, &rows, None))
    }

    /// Backpropagation over `rows`; `keep` carries a per-row dropout mask
    /// already scaled by `1 / (1 − p)`.
    fn gradient(
        &self,
        x: ArrayView2<f64>,
        y: &[u8],
        w: &[f64],
        rows: &[usize],
        keep: Option<&[Vec<f64>]>,
    ) -> MlpGradient {
        let (d, h) = self.w1.dim();
        let mut g = MlpGradient {
            w1: Array2::zeros((d, h)),
            b1: Array1::zeros(h),
            w2: Array1::zeros(h),
            b2: 0.0,
        };
        let wsum: f64 = rows.iter().map(|&i| w[i]).sum();
        for (r, &i) in rows.iter().enumerate() {
            let row = x.row(i);
            let row = row.as_slice().expect("standard layout");
            let z = self.hidden(row);
            let mut a: Vec<f64> = z.iter().map(|v| v.max(0.0)).collect();
            if let Some(mask) = keep {
                for (ak, mk) in a.iter_mut().zip(&mask[r]) {
                    *ak *= mk;
                }
            }
            let m = self.b2 + a.iter().zip(&self.w2).map(|(a, w)| a * w).sum::<f64>();
            let delta = w[i] / wsum * (sigmoid(m) - f64::from(y[i]));
            g.b2 += delta;
            for k in 0..h {
                g.w2[k] += delta * a[k];
                if z[k] > 0.0 {
                    let scale = keep.map_or(1.0, |mask| mask[r][k]);
                    let dz = delta * self.w2[k] * scale;
                    g.b1[k] += dz;
                    for (j, xj) in row.iter().enumerate() {
                        g.w1[[j, k]] += dz * xj;
                    }
                }
            }
        }
        g
    }

    /// All parameters flattened as `w1` (row-major), `b1`, `w2`, `b2`.
    pub fn flat_params(&self) -> Vec<f64> {
        self.w1
            .iter()
            .chain(&self.b1)
            .chain(&self.w2)
            .copied()
            .chain([self.b2])
            .collect()
    }

    pub fn set_flat_params(&mut self, p: &[f64]) {
        let (d, h) = self.w1.dim();
        assert_eq!(p.len(), d * h + 2 * h + 1, "parameter count");
        for (dst, src) in self.w1.iter_mut().chain(self.b1.iter_mut()).chain(self.w2.iter_mut()).zip(p) {
            *dst = *src;
        }
        self.b2 = p[p.len() - 1];
    }
}

impl MlpGradient {
    pub fn flat(&self) -> Vec<f64> {
        self.w1
            .iter()
            .chain(&self.b1)
            .chain(&self.w2)
            .copied()
            .chain([self.b2])
            .collect()
    }
}

/// Largest relative error between the analytic gradient and central finite
/// differences with step `eps`. The denominator is floored at `1e-8`.
pub fn gradient_check(model: &MlpModel, x: ArrayView2<f64>, y: &[u8], w: &[f64], eps: f64) -> f64 {
    let analytic = model.loss_and_gradient(x, y, w).1.flat();
    let base = model.flat_params();
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for (k, &a) in analytic.iter().enumerate() {
        let mut p = base.clone();
        p[k] = base[k] + eps;
        probe.set_flat_params(&p);
        let up = probe.loss_and_gradient(x, y, w).0;
        p[k] = base[k] - eps;
        probe.set_flat_params(&p);
        let down = probe.loss_and_gradient(x, y, w).0;
        let numeric = (up - down) / (2.0 * eps);
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max(rel);
    }
    worst
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.t);
        let c2 = 1.0 - ADAM_BETA2.powi(self.t);
        for k in 0..params.len() {
            self.m[k] = ADAM_BETA1 * self.m[k] + (1.0 - ADAM_BETA1) * grad[k];
            self.v[k] = ADAM_BETA2 * self.v[k] + (1.0 - ADAM_BETA2) * grad[k] * grad[k];
            params[k] -= lr * (self.m[k] / c1) / ((self.v[k] / c2).sqrt() + ADAM_EPS);
        }
    }
}

pub fn train_mlp(x: ArrayView2<f64>, y: &[u8], w: &[f64], config: &MlpConfig, seed: u64) -> Result<MlpModel> {
    check_design(x, y, w)?;
    let bad = |m: &str| Err(Error::Config(format!("mlp: {m}")));
    if config.hidden == 0 || config.batch_size == 0 {
        return bad("hidden and batch_size must be >= 1");
    }
    if !(config.learning_rate > 0.0) {
        return bad("learning_rate must be positive");
    }
    if !(0.0..1.0).contains(&config.dropout) || !(0.0..1.0).contains(&config.validation_fraction) {
        return bad("dropout and validation_fraction must be in [0, 1)");
    }
    let x = x.as_standard_layout();
    let x = x.view();
    let n = x.nrows();
    let (fit_rows, val_rows) = if config.validation_fraction > 0.0 {
        match stratified_split_labels(y, 1.0 - config.validation_fraction, rng::derive_seed(seed, &[0])) {
            Ok(s) => (s.train_rows, s.test_rows),
            Err(_) => ((0..n).collect(), Vec::new()),
        }
    } else {
        ((0..n).collect(), Vec::new())
    };
    let wsum: f64 = fit_rows.iter().map(|&i| w[i]).sum();
    let wpos: f64 = fit_rows.iter().filter(|&&i| y[i] == 1).map(|&i| w[i]).sum();
    let prior = (wpos / wsum).clamp(PROBA_CLIP, 1.0 - PROBA_CLIP);
    let mut model = MlpModel::init(x.ncols(), config, logit(prior), rng::derive_seed(seed, &[1]));
    let mut params = model.flat_params();
    let mut adam = Adam {
        m: vec![0.0; params.len()],
        v: vec![0.0; params.len()],
        t: 0,
    };
    let mut r = rng::derived(seed, &[2]);
    let mut order = fit_rows.clone();
    let keep_p = 1.0 - config.dropout;
    let mut best: Option<(f64, Vec<f64>, usize)> = None;
    let mut stale = 0;
    for epoch in 0..config.epochs {
        order.shuffle(&mut r);
        for batch in order.chunks(config.batch_size) {
            let mask: Option<Vec<Vec<f64>>> = (config.dropout > 0.0).then(|| {
                batch
                    .iter()
                    .map(|_| {
                        (0..config.hidden)
                            .map(|_| if r.random::<f64>() < keep_p { 1.0 / keep_p } else { 0.0 })
                            .collect()
                    })
                    .collect()
            });
            let g = model.gradient(x, y, w, batch, mask.as_deref()).flat();
            adam.step(&mut params, &g, config.learning_rate);
            model.set_flat_params(&params);
        }
        let train = model.loss_on(x, y, w, &fit_rows);
        if !train.is_finite() {
            return Err(Error::Config(format!(
                "mlp diverged at epoch {epoch} (learning rate {})",
                config.learning_rate
            )));
        }
        model.train_loss.push(train);
        let monitored = if val_rows.is_empty() {
            train
        } else {
            let v = model.loss_on(x, y, w, &val_rows);
            model.val_loss.push(v);
            v
        };
        if best.as_ref().is_none_or(|b| monitored < b.0) {
            best = Some((monitored, params.clone(), epoch));
            stale = 0;
        } else {
            stale += 1;
            if !val_rows.is_empty() && stale >= config.patience {
                break;
            }
        }
    }
    if let Some((_, p, epoch)) = best {
        model.set_flat_params(&p);
        model.best_epoch = epoch;
    }
    Ok(model)
}
