use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::{check_design, log1p_exp, logit, sigmoid, PROBA_CLIP};
use crate::{Error, Result};

const GRAD_TOL: f64 = 1e-6;
const NEWTON_MAX_ITER: usize = 100;
const PROX_MAX_ITER: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Penalty {
    L1,
    L2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogregParams {
    pub penalty: Penalty,
    /// Inverse regularization strength.
    pub c: f64,
}

impl Default for LogregParams {
    fn default() -> Self {
        Self {
            penalty: Penalty::L2,
            c: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub penalty: Penalty,
    pub c: f64,
    /// False when the iteration cap was hit; the best iterate is returned.
    pub converged: bool,
    pub iterations: usize,
    pub objective: f64,
}

impl LinearModel {
    pub fn margin(&self, row: &[f64]) -> f64 {
        self.bias + self.weights.iter().zip(row).map(|(w, x)| w * x).sum::<f64>()
    }
}

struct Problem<'a> {
    x: ArrayView2<'a, f64>,
    y: &'a [u8],
    w: &'a [f64],
    penalty: Penalty,
    c: f64,
}

impl Problem<'_> {
    fn d(&self) -> usize {
        self.x.ncols()
    }

    fn margins(&self, theta: &[f64]) -> Vec<f64> {
        let d = self.d();
        self.x
            .rows()
            .into_iter()
            .map(|r| theta[d] + r.iter().zip(theta).map(|(a, b)| a * b).sum::<f64>())
            .collect()
    }

    fn smooth_loss(&self, theta: &[f64]) -> f64 {
        self.margins(theta)
            .iter()
            .zip(self.y)
            .zip(self.w)
            .map(|((&m, &y), &w)| w * (log1p_exp(m) - f64::from(y) * m))
            .sum()
    }

    fn penalty_value(&self, theta: &[f64]) -> f64 {
        let beta = &theta[..self.d()];
        match self.penalty {
            Penalty::L2 => beta.iter().map(|b| b * b).sum::<f64>() / (2.0 * self.c),
            Penalty::L1 => beta.iter().map(|b| b.abs()).sum::<f64>() / self.c,
        }
    }

    fn objective(&self, theta: &[f64]) -> f64 {
        self.smooth_loss(theta) + self.penalty_value(theta)
    }

    /// Gradient of the weighted log-loss; the last entry is the bias.
    fn loss_gradient(&self, theta: &[f64]) -> Vec<f64> {
        let d = self.d();
        let mut g = vec![0.0; d + 1];
        for ((row, m), (&y, &w)) in self.x.rows().into_iter().zip(self.margins(theta)).zip(self.y.iter().zip(self.w)) {
            let r = w * (sigmoid(m) - f64::from(y));
            for (gj, xj) in g.iter_mut().zip(row) {
                *gj += r * xj;
            }
            g[d] += r;
        }
        g
    }
}

/// Weighted negative log-likelihood plus penalty at `(weights, bias)`.
pub fn logreg_objective(
    x: ArrayView2<f64>,
    y: &[u8],
    w: &[f64],
    params: &LogregParams,
    weights: &[f64],
    bias: f64,
) -> f64 {
    let mut theta = weights.to_vec();
    theta.push(bias);
    Problem {
        x,
        y,
        w,
        penalty: params.penalty,
        c: params.c,
    }
    .objective(&theta)
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// In-place Cholesky solve of `a · s = b` for symmetric positive definite `a`
/// (row-major, `n × n`). Returns `None` when `a` is not positive definite.
pub(crate) fn cholesky_solve(mut a: Vec<f64>, mut b: Vec<f64>, n: usize) -> Option<Vec<f64>> {
    for j in 0..n {
        let mut diag = a[j * n + j];
        for k in 0..j {
            diag -= a[j * n + k] * a[j * n + k];
        }
        if diag <= 0.0 || !diag.is_finite() {
            return None;
        }
        let diag = diag.sqrt();
        a[j * n + j] = diag;
        for i in j + 1..n {
            let mut v = a[i * n + j];
            for k in 0..j {
                v -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = v / diag;
        }
    }
    for i in 0..n {
        let mut v = b[i];
        for k in 0..i {
            v -= a[i * n + k] * b[k];
        }
        b[i] = v / a[i * n + i];
    }
    for i in (0..n).rev() {
        let mut v = b[i];
        for k in i + 1..n {
            v -= a[k * n + i] * b[k];
        }
        b[i] = v / a[i * n + i];
    }
    Some(b)
}

fn newton(p: &Problem, mut theta: Vec<f64>) -> (Vec<f64>, bool, usize) {
    let d = p.d();
    let n1 = d + 1;
    let mut f = p.objective(&theta);
    for it in 0..NEWTON_MAX_ITER {
        let mut g = p.loss_gradient(&theta);
        for j in 0..d {
            g[j] += theta[j] / p.c;
        }
        if max_abs(&g) < GRAD_TOL {
            return (theta, true, it);
        }
        let mut h = vec![0.0; n1 * n1];
        for ((row, m), &w) in p.x.rows().into_iter().zip(p.margins(&theta)).zip(p.w) {
            let s = sigmoid(m);
            let c = w * s * (1.0 - s);
            let xt: Vec<f64> = row.iter().copied().chain([1.0]).collect();
            for a in 0..n1 {
                let ca = c * xt[a];
                for b in 0..=a {
                    h[a * n1 + b] += ca * xt[b];
                }
            }
        }
        for a in 0..n1 {
            for b in 0..a {
                h[b * n1 + a] = h[a * n1 + b];
            }
        }
        for j in 0..d {
            h[j * n1 + j] += 1.0 / p.c;
        }
        let trace: f64 = (0..n1).map(|j| h[j * n1 + j]).sum();
        let mut ridge = 0.0;
        let step = loop {
            let mut hr = h.clone();
            for j in 0..n1 {
                hr[j * n1 + j] += ridge;
            }
            if let Some(s) = cholesky_solve(hr, g.clone(), n1) {
                break s;
            }
            ridge = if ridge == 0.0 { 1e-12 * trace.max(1.0) } else { ridge * 10.0 };
        };
        let slope: f64 = g.iter().zip(&step).map(|(a, b)| a * b).sum();
        let mut t = 1.0;
        loop {
            let cand: Vec<f64> = theta.iter().zip(&step).map(|(a, s)| a - t * s).collect();
            let fc = p.objective(&cand);
            if fc <= f - 1e-4 * t * slope || t < 1e-10 {
                if fc <= f {
                    theta = cand;
                    f = fc;
                }
                break;
            }
            t *= 0.5;
        }
        if t < 1e-10 {
            return (theta, max_abs(&g) < GRAD_TOL, it + 1);
        }
    }
    (theta, false, NEWTON_MAX_ITER)
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Largest eigenvalue of `X̃ᵀ W X̃` (bias column appended) by power iteration.
fn curvature_bound(p: &Problem) -> f64 {
    let d = p.d();
    let mut v = vec![1.0 / ((d + 1) as f64).sqrt(); d + 1];
    let mut lambda = 0.0;
    for _ in 0..100 {
        let mut out = vec![0.0; d + 1];
        for (row, &w) in p.x.rows().into_iter().zip(p.w) {
            let dot = v[d] + row.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>();
            for (o, xj) in out.iter_mut().zip(row) {
                *o += w * dot * xj;
            }
            out[d] += w * dot;
        }
        let norm = out.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            break;
        }
        lambda = norm;
        v = out.into_iter().map(|x| x / norm).collect();
    }
    lambda
}

/// Accelerated proximal gradient with adaptive restart; the bias is not
/// penalized.
fn fista(p: &Problem, theta0: Vec<f64>) -> (Vec<f64>, bool, usize) {
    let d = p.d();
    let lip = 0.25 * curvature_bound(p) * 1.01 + 1e-12;
    let step = 1.0 / lip;
    let prox = |v: &[f64], g: &[f64]| -> Vec<f64> {
        let mut out: Vec<f64> = v.iter().zip(g).map(|(a, b)| a - step * b).collect();
        for o in out.iter_mut().take(d) {
            *o = soft_threshold(*o, step / p.c);
        }
        out
    };
    let mut x = theta0;
    let mut fx = p.objective(&x);
    let mut best = (fx, x.clone());
    let mut yk = x.clone();
    let mut t = 1.0f64;
    for it in 0..PROX_MAX_ITER {
        // composite gradient mapping at the current iterate
        let gx = p.loss_gradient(&x);
        let px = prox(&x, &gx);
        let mapping: Vec<f64> = x.iter().zip(&px).map(|(a, b)| (a - b) * lip).collect();
        if max_abs(&mapping) < GRAD_TOL {
            return (x, true, it);
        }
        let gy = p.loss_gradient(&yk);
        let next = prox(&yk, &gy);
        let fnext = p.objective(&next);
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        if fnext > fx {
            // restart momentum from a plain proximal step
            t = 1.0;
            x = px;
            fx = p.objective(&x);
            yk = x.clone();
        } else {
            let beta = (t - 1.0) / t_next;
            yk = next.iter().zip(&x).map(|(a, b)| a + beta * (a - b)).collect();
            x = next;
            fx = fnext;
            t = t_next;
        }
        if fx < best.0 {
            best = (fx, x.clone());
        }
    }
    (best.1, false, PROX_MAX_ITER)
}

pub fn train_logreg(x: ArrayView2<f64>, y: &[u8], w: &[f64], params: &LogregParams) -> Result<LinearModel> {
    check_design(x, y, w)?;
    if !(params.c > 0.0 && params.c.is_finite()) {
        return Err(Error::Config(format!("logreg: C must be positive, got {}", params.c)));
    }
    if !y.contains(&0) || !y.contains(&1) {
        return Err(Error::Undefined("logistic regression needs both classes".into()));
    }
    let d = x.ncols();
    let p = Problem {
        x,
        y,
        w,
        penalty: params.penalty,
        c: params.c,
    };
    let wsum: f64 = w.iter().sum();
    let wpos: f64 = w.iter().zip(y).filter(|(_, &v)| v == 1).map(|(a, _)| a).sum();
    let mut theta0 = vec![0.0; d + 1];
    theta0[d] = logit((wpos / wsum).clamp(PROBA_CLIP, 1.0 - PROBA_CLIP));
    let (theta, converged, iterations) = match params.penalty {
        Penalty::L2 => newton(&p, theta0),
        Penalty::L1 => fista(&p, theta0),
    };
    if theta.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("logistic regression produced non-finite weights".into()));
    }
    if !converged {
        log::warn!(
            "logreg {:?} C={} stopped after {iterations} iterations without meeting the gradient tolerance",
            params.penalty,
            params.c
        );
    }
    let objective = p.objective(&theta);
    Ok(LinearModel {
        weights: theta[..d].to_vec(),
        bias: theta[d],
        penalty: params.penalty,
        c: params.c,
        converged,
        iterations,
        objective,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_solves_a_small_system() {
        let a = vec![4.0, 2.0, 0.6, 2.0, 5.0, 1.0, 0.6, 1.0, 3.0];
        let x = [1.0, -2.0, 0.5];
        let b: Vec<f64> = (0..3).map(|i| (0..3).map(|j| a[i * 3 + j] * x[j]).sum()).collect();
        let s = cholesky_solve(a, b, 3).unwrap();
        for (u, v) in s.iter().zip(x) {
            assert!((u - v).abs() < 1e-12);
        }
        assert!(cholesky_solve(vec![1.0, 2.0, 2.0, 1.0], vec![1.0, 1.0], 2).is_none());
    }

    #[test]
    fn soft_threshold_zeroes_small_values() {
        assert_eq!(soft_threshold(0.3, 0.5), 0.0);
        assert!((soft_threshold(-0.8, 0.5) + 0.3).abs() < 1e-15);
        assert!((soft_threshold(0.8, 0.5) - 0.3).abs() < 1e-15);
    }
}
