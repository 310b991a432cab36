use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::eval::quantile;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AleKind {
    /// Quantile bins with finite differences across each bin.
    Binned,
    /// Two-level difference between 0 and 1.
    Binary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AleCurve {
    pub feature: String,
    pub kind: AleKind,
    /// `z_0 < … < z_K`.
    pub edges: Vec<f64>,
    /// Accumulated effect at each edge, starting at 0.
    pub effects: Vec<f64>,
    /// `effects` minus their data-weighted mean.
    pub centered: Vec<f64>,
    /// Rows per bin for binned curves; rows at level 0 and 1 for binary ones.
    pub counts: Vec<usize>,
}

impl AleCurve {
    /// Data-weighted mean of `values` (given per edge): bin midpoints weighted
    /// by bin counts, or level values weighted by level counts.
    pub fn weighted_mean(&self, values: &[f64]) -> f64 {
        let n: usize = self.counts.iter().sum();
        let total: f64 = match self.kind {
            AleKind::Binned => self
                .counts
                .iter()
                .enumerate()
                .map(|(k, &c)| c as f64 * (values[k] + values[k + 1]) / 2.0)
                .sum(),
            AleKind::Binary => self.counts.iter().zip(values).map(|(&c, v)| c as f64 * v).sum(),
        };
        total / n as f64
    }

    /// Slope of the accumulated effect over each bin.
    pub fn slopes(&self) -> Vec<f64> {
        self.edges
            .windows(2)
            .zip(self.effects.windows(2))
            .map(|(e, a)| (a[1] - a[0]) / (e[1] - e[0]))
            .collect()
    }
}

/// Quantile edges of `values` with coincident edges removed.
pub fn quantile_edges(values: &[f64], n_bins: usize) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut edges: Vec<f64> = (0..=n_bins).map(|k| quantile(&sorted, k as f64 / n_bins as f64)).collect();
    edges.dedup();
    edges
}

/// Bin `k` (0-based) holds `z_k < v <= z_{k+1}`; the first bin also holds `z_0`.
fn bin_of(edges: &[f64], v: f64) -> usize {
    edges[1..].partition_point(|&e| e < v).min(edges.len() - 2)
}

/// Accumulated local effects of column `feature` of `data` under `f`.
pub fn ale<F>(f: F, data: ArrayView2<f64>, feature: usize, name: &str, kind: AleKind, n_bins: usize) -> Result<AleCurve>
where
    F: Fn(&[f64]) -> f64,
{
    if data.nrows() == 0 || feature >= data.ncols() {
        return Err(Error::Config("ALE needs rows and a valid feature index".into()));
    }
    if n_bins == 0 {
        return Err(Error::Config("ALE needs at least one bin".into()));
    }
    let col: Vec<f64> = data.column(feature).to_vec();
    let mut curve = match kind {
        AleKind::Binary => {
            let mut total = 0.0;
            let mut counts = vec![0usize; 2];
            let mut z = vec![0.0; data.ncols()];
            for (row, &v) in data.rows().into_iter().zip(&col) {
                z.iter_mut().zip(row).for_each(|(a, b)| *a = *b);
                z[feature] = 1.0;
                let hi = f(&z);
                z[feature] = 0.0;
                total += hi - f(&z);
                counts[usize::from(v >= 0.5)] += 1;
            }
            AleCurve {
                feature: name.to_string(),
                kind,
                edges: vec![0.0, 1.0],
                effects: vec![0.0, total / data.nrows() as f64],
                centered: Vec::new(),
                counts,
            }
        }
        AleKind::Binned => {
            let mut edges = quantile_edges(&col, n_bins);
            if edges.len() < 2 {
                return Err(Error::Selection(format!("ALE feature {name} is constant")));
            }
            // merge away empty bins by dropping their upper edge
            let counts = loop {
                let mut counts = vec![0usize; edges.len() - 1];
                for &v in &col {
                    counts[bin_of(&edges, v)] += 1;
                }
                match counts.iter().position(|&c| c == 0) {
                    Some(k) if edges.len() > 2 => {
                        let drop = if k + 1 == edges.len() - 1 { k } else { k + 1 };
                        edges.remove(drop);
                    }
                    _ => break counts,
                }
            };
            let mut local = vec![0.0; counts.len()];
            let mut z = vec![0.0; data.ncols()];
            for (row, &v) in data.rows().into_iter().zip(&col) {
                let k = bin_of(&edges, v);
                z.iter_mut().zip(row).for_each(|(a, b)| *a = *b);
                z[feature] = edges[k + 1];
                let hi = f(&z);
                z[feature] = edges[k];
                local[k] += hi - f(&z);
            }
            let mut effects = vec![0.0];
            for (l, &c) in local.iter().zip(&counts) {
                effects.push(effects.last().unwrap() + l / c as f64);
            }
            AleCurve {
                feature: name.to_string(),
                kind,
                edges,
                effects,
                centered: Vec::new(),
                counts,
            }
        }
    };
    let mean = curve.weighted_mean(&curve.effects);
    curve.centered = curve.effects.iter().map(|a| a - mean).collect();
    Ok(curve)
}

/// ALE CSV: `edge,effect,centered,count` with the count of the bin ending at
/// each edge (level count for binary curves).
pub fn write_ale_csv<W: std::io::Write>(writer: W, curve: &AleCurve) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["edge", "effect", "centered", "count"])?;
    for (k, ((e, a), c)) in curve.edges.iter().zip(&curve.effects).zip(&curve.centered).enumerate() {
        let count = match curve.kind {
            AleKind::Binned if k == 0 => 0,
            AleKind::Binned => curve.counts[k - 1],
            AleKind::Binary => curve.counts[k],
        };
        w.write_record([e.to_string(), a.to_string(), c.to_string(), count.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    #[test]
    fn bins_are_right_closed() {
        let edges = [0.0, 1.0, 2.0, 3.0];
        assert_eq!(bin_of(&edges, 0.0), 0);
        assert_eq!(bin_of(&edges, 1.0), 0);
        assert_eq!(bin_of(&edges, 1.5), 1);
        assert_eq!(bin_of(&edges, 3.0), 2);
    }

    #[test]
    fn unused_feature_has_a_flat_curve() {
        let data = Array2::from_shape_fn((50, 2), |(i, j)| ((i * 7 + j * 3) % 11) as f64);
        let c = ale(|x| x[1] * 2.0, data.view(), 0, "a", AleKind::Binned, 5).unwrap();
        assert!(c.centered.iter().all(|&v| v == 0.0));
    }
}
