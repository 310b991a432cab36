use ndarray::{Array2, ArrayView2};
use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::models::{GbdtModel, Node, Tree, TrainedModel};
use crate::rng;
use crate::{Error, Result};

/// Largest feature count accepted by [`shap_exhaustive`].
pub const MAX_EXHAUSTIVE_FEATURES: usize = 15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapMatrix {
    pub feature_names: Vec<String>,
    /// `rows × features` attributions in margin (log-odds) units.
    pub values: Array2<f64>,
    /// Mean margin over the background rows.
    pub base_value: f64,
    /// The explained rows, in model input units.
    pub data: Array2<f64>,
}

impl ShapMatrix {
    /// Mean |φ| per feature.
    pub fn mean_abs(&self) -> Vec<f64> {
        let n = self.values.nrows().max(1) as f64;
        self.values.columns().into_iter().map(|c| c.iter().map(|v| v.abs()).sum::<f64>() / n).collect()
    }
}

/// Up to `cap` rows drawn without replacement, kept in their original order.
pub fn background_sample(x: ArrayView2<f64>, cap: usize, seed: u64) -> Array2<f64> {
    if x.nrows() <= cap {
        return x.to_owned();
    }
    let mut idx = sample(&mut rng::seeded(seed), x.nrows(), cap).into_vec();
    idx.sort_unstable();
    x.select(ndarray::Axis(0), &idx)
}

fn factorials(n: usize) -> Vec<f64> {
    let mut f = vec![1.0; n + 1];
    for i in 1..=n {
        f[i] = f[i - 1] * i as f64;
    }
    f
}

/// Interventional Shapley values by enumerating all `2^d` coalitions. The
/// value of coalition `S` is the mean of `f` over background rows with the
/// features in `S` replaced by `row`'s values.
pub fn shap_exhaustive<F>(f: F, row: &[f64], background: ArrayView2<f64>) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    let d = row.len();
    if d > MAX_EXHAUSTIVE_FEATURES {
        return Err(Error::Unsupported(format!(
            "exhaustive SHAP over {d} features; use the tree algorithm"
        )));
    }
    if background.nrows() == 0 || background.ncols() != d {
        return Err(Error::Config("background must be nonempty with matching width".into()));
    }
    let mut value = vec![0.0; 1 << d];
    let mut z = vec![0.0; d];
    for (mask, v) in value.iter_mut().enumerate() {
        let mut total = 0.0;
        for b in background.rows() {
            for j in 0..d {
                z[j] = if mask >> j & 1 == 1 { row[j] } else { b[j] };
            }
            total += f(&z);
        }
        *v = total / background.nrows() as f64;
    }
    let fact = factorials(d);
    let mut phi = vec![0.0; d];
    for mask in 0..1usize << d {
        let s = mask.count_ones() as usize;
        for (i, p) in phi.iter_mut().enumerate() {
            if mask >> i & 1 == 0 {
                let weight = fact[s] * fact[d - s - 1] / fact[d];
                *p += weight * (value[mask | 1 << i] - value[mask]);
            }
        }
    }
    Ok(phi)
}

/// Attribution of one tree for the pair (x, z): walks every path a hybrid of
/// x and z can take. Features where x and z disagree are split into those
/// taking x's value (`from_x`) and those taking z's (`from_z`).
struct PairWalk<'a> {
    tree: &'a Tree,
    x: &'a [f64],
    z: &'a [f64],
    /// `pos[a][b]` = (a−1)!·b!/(a+b)!, `neg[a][b]` = a!·(b−1)!/(a+b)!.
    pos: &'a [Vec<f64>],
    neg: &'a [Vec<f64>],
    scale: f64,
}

impl PairWalk<'_> {
    fn walk(&self, node: usize, from_x: &mut Vec<usize>, from_z: &mut Vec<usize>, phi: &mut [f64]) {
        match self.tree.nodes[node] {
            Node::Leaf { value } => {
                let (a, b) = (from_x.len(), from_z.len());
                let v = self.scale * value;
                if a > 0 {
                    let w = v * self.pos[a][b];
                    for &i in from_x.iter() {
                        phi[i] += w;
                    }
                }
                if b > 0 {
                    let w = v * self.neg[a][b];
                    for &j in from_z.iter() {
                        phi[j] -= w;
                    }
                }
            }
            Node::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                let xn = if self.x[feature] <= threshold { left } else { right };
                let zn = if self.z[feature] <= threshold { left } else { right };
                if xn == zn || from_x.contains(&feature) {
                    self.walk(xn, from_x, from_z, phi);
                } else if from_z.contains(&feature) {
                    self.walk(zn, from_x, from_z, phi);
                } else {
                    from_x.push(feature);
                    self.walk(xn, from_x, from_z, phi);
                    from_x.pop();
                    from_z.push(feature);
                    self.walk(zn, from_x, from_z, phi);
                    from_z.pop();
                }
            }
        }
    }
}

fn weight_tables(depth: usize) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let fact = factorials(2 * depth + 1);
    let mut pos = vec![vec![0.0; depth + 1]; depth + 1];
    let mut neg = vec![vec![0.0; depth + 1]; depth + 1];
    for a in 0..=depth {
        for b in 0..=depth {
            if a >= 1 {
                pos[a][b] = fact[a - 1] * fact[b] / fact[a + b];
            }
            if b >= 1 {
                neg[a][b] = fact[a] * fact[b - 1] / fact[a + b];
            }
        }
    }
    (pos, neg)
}

fn gbdt_row_shap(model: &GbdtModel, x: &[f64], background: ArrayView2<f64>, pos: &[Vec<f64>], neg: &[Vec<f64>]) -> Vec<f64> {
    let d = x.len();
    let mut phi = vec![0.0; d];
    let mut from_x = Vec::new();
    let mut from_z = Vec::new();
    for z in background.rows() {
        let z = z.to_vec();
        for tree in &model.trees {
            let walk = PairWalk {
                tree,
                x,
                z: &z,
                pos,
                neg,
                scale: model.learning_rate,
            };
            walk.walk(0, &mut from_x, &mut from_z, &mut phi);
        }
    }
    let nb = background.nrows() as f64;
    phi.iter_mut().for_each(|p| *p /= nb);
    phi
}

/// Exact interventional SHAP for boosted trees in margin units, averaging
/// per-background-row attributions. Cost per explained row is linear in the
/// background size and in the number of hybrid paths per tree.
pub fn shap_tree(
    model: &TrainedModel,
    feature_names: &[String],
    rows: ArrayView2<f64>,
    background: ArrayView2<f64>,
) -> Result<ShapMatrix> {
    let Some(gbdt) = model.as_gbdt() else {
        return Err(Error::Unsupported("tree SHAP needs a boosted-tree model".into()));
    };
    let d = gbdt.n_features;
    if rows.ncols() != d || background.ncols() != d || feature_names.len() != d {
        return Err(Error::Schema(format!("tree SHAP expects {d} features")));
    }
    if background.nrows() == 0 {
        return Err(Error::Config("background must be nonempty".into()));
    }
    let depth = gbdt.trees.iter().map(Tree::depth).max().unwrap_or(0);
    let (pos, neg) = weight_tables(depth);
    let per_row: Vec<Vec<f64>> = rows
        .rows()
        .into_iter()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|r| gbdt_row_shap(gbdt, &r.to_vec(), background, &pos, &neg))
        .collect();
    let mut values = Array2::zeros((rows.nrows(), d));
    for (i, phi) in per_row.into_iter().enumerate() {
        for (j, p) in phi.into_iter().enumerate() {
            values[[i, j]] = p;
        }
    }
    let base_value = background.rows().into_iter().map(|b| gbdt.margin(&b.to_vec())).sum::<f64>()
        / background.nrows() as f64;
    Ok(ShapMatrix {
        feature_names: feature_names.to_vec(),
        values,
        base_value,
        data: rows.to_owned(),
    })
}

/// Per-feature SHAP CSV: `row,feature,value,shap`.
pub fn write_shap_csv<W: std::io::Write>(writer: W, shap: &ShapMatrix) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["row", "feature", "value", "shap"])?;
    for (i, (phi, x)) in shap.values.rows().into_iter().zip(shap.data.rows()).enumerate() {
        for (j, name) in shap.feature_names.iter().enumerate() {
            w.write_record([i.to_string(), name.clone(), x[j].to_string(), phi[j].to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}
