//! Exact-greedy gradient boosting on the weighted logistic loss.
//!
//! Trees are grown level by level from presorted feature orders, so one pass
//! over each feature per level scores every candidate split of every open
//! node. Two growth policies are supported: depthwise (each node picks its own
//! split) and symmetric (one split shared by the whole level, giving oblivious
//! trees).

use ndarray::ArrayView2;
use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::{check_design, log1p_exp, logit, PROBA_CLIP};
use crate::rng;
use crate::Result;

const MIN_GAIN: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Growth {
    Depthwise,
    Symmetric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbdtParams {
    pub max_depth: usize,
    pub n_trees: usize,
    pub learning_rate: f64,
    /// Fraction of rows drawn without replacement for each tree.
    pub subsample: f64,
    pub l2_leaf: f64,
    /// Minimum hessian sum per child (depthwise growth only).
    pub min_child_weight: f64,
    pub growth: Growth,
    /// Train on ordered target statistics for encoded categorical columns.
    pub ordered_mode: bool,
}

impl Default for GbdtParams {
    fn default() -> Self {
        Self {
            max_depth: 3,
            n_trees: 100,
            learning_rate: 0.1,
            subsample: 1.0,
            l2_leaf: 1.0,
            min_child_weight: 1.0,
            growth: Growth::Depthwise,
            ordered_mode: false,
        }
    }
}

impl GbdtParams {
    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(crate::Error::Config(format!("gbdt: {m}")));
        if self.max_depth == 0 {
            return bad("max_depth must be >= 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return bad("subsample must be in (0, 1]");
        }
        if !(self.l2_leaf >= 0.0 && self.min_child_weight >= 0.0) {
            return bad("l2_leaf and min_child_weight must be nonnegative");
        }
        Ok(())
    }
}

/// Rows with `x[feature] <= threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

/// A binary tree stored as a node arena; the root is node 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf_index(&self, row: &[f64]) -> usize {
        let mut i = 0;
        while let Node::Split {
            feature,
            threshold,
            left,
            right,
        } = self.nodes[i]
        {
            i = if row[feature] <= threshold { left } else { right };
        }
        i
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        match self.nodes[self.leaf_index(row)] {
            Node::Leaf { value } => value,
            Node::Split { .. } => unreachable!(),
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            match t.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(t, left).max(go(t, right)),
            }
        }
        go(self, 0)
    }

    /// Features used by any split, ascending and deduplicated.
    pub fn split_features(&self) -> Vec<usize> {
        let mut f: Vec<usize> = self
            .nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split { feature, .. } => Some(*feature),
                Node::Leaf { .. } => None,
            })
            .collect();
        f.sort_unstable();
        f.dedup();
        f
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtModel {
    pub params: GbdtParams,
    pub n_features: usize,
    /// Log-odds of the weighted training prior.
    pub base_score: f64,
    pub learning_rate: f64,
    pub trees: Vec<Tree>,
    /// Weighted mean logistic loss on the training rows: the base model first,
    /// then after each kept tree.
    pub loss_trace: Vec<f64>,
}

impl GbdtModel {
    pub fn margin(&self, row: &[f64]) -> f64 {
        self.base_score + self.learning_rate * self.trees.iter().map(|t| t.predict(row)).sum::<f64>()
    }
}

fn weighted_loss(margin: &[f64], y: &[u8], w: &[f64]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for ((&m, &yi), &wi) in margin.iter().zip(y).zip(w) {
        num += wi * (log1p_exp(m) - f64::from(yi) * m);
        den += wi;
    }
    num / den
}

struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    if m >= b {
        a
    } else {
        m
    }
}

struct Builder<'a> {
    x: ArrayView2<'a, f64>,
    sorted: &'a [Vec<usize>],
    params: &'a GbdtParams,
}

impl Builder<'_> {
    fn score(&self, g: f64, h: f64) -> f64 {
        let den = h + self.params.l2_leaf;
        if den > 0.0 {
            g * g / den
        } else {
            0.0
        }
    }

    fn leaf_value(&self, g: f64, h: f64) -> f64 {
        let den = h + self.params.l2_leaf;
        if den > 0.0 {
            -g / den
        } else {
            0.0
        }
    }

    /// Grows one tree. `node_of[i]` is `Some(slot)` for rows in the sample.
    fn grow(&self, g: &[f64], h: &[f64], in_sample: &[bool]) -> Tree {
        let n = g.len();
        let mut nodes = vec![Node::Leaf { value: 0.0 }];
        // per row: node id, or usize::MAX when out of sample
        let mut node_of: Vec<usize> = in_sample.iter().map(|&s| if s { 0 } else { usize::MAX }).collect();
        let mut stats: Vec<(f64, f64)> = vec![(0.0, 0.0)];
        for i in 0..n {
            if in_sample[i] {
                stats[0].0 += g[i];
                stats[0].1 += h[i];
            }
        }
        let mut frontier = vec![0usize];
        for _ in 0..self.params.max_depth {
            if frontier.is_empty() {
                break;
            }
            let mut slot_of = vec![usize::MAX; nodes.len()];
            for (s, &id) in frontier.iter().enumerate() {
                slot_of[id] = s;
            }
            let splits: Vec<Option<Candidate>> = match self.params.growth {
                Growth::Depthwise => self.best_per_node(g, h, &node_of, &slot_of, &frontier, &stats),
                Growth::Symmetric => {
                    let shared = self.best_shared(g, h, &node_of, &slot_of, &frontier, &stats);
                    match shared {
                        Some(c) => frontier
                            .iter()
                            .map(|_| {
                                Some(Candidate {
                                    gain: c.gain,
                                    feature: c.feature,
                                    threshold: c.threshold,
                                })
                            })
                            .collect(),
                        None => break,
                    }
                }
            };
            let mut next = Vec::new();
            let mut child_of = vec![(usize::MAX, usize::MAX); frontier.len()];
            for (s, (&id, split)) in frontier.iter().zip(&splits).enumerate() {
                let Some(c) = split else { continue };
                let left = nodes.len();
                nodes.push(Node::Leaf { value: 0.0 });
                nodes.push(Node::Leaf { value: 0.0 });
                stats.push((0.0, 0.0));
                stats.push((0.0, 0.0));
                nodes[id] = Node::Split {
                    feature: c.feature,
                    threshold: c.threshold,
                    left,
                    right: left + 1,
                };
                child_of[s] = (left, left + 1);
                next.push(left);
                next.push(left + 1);
            }
            for i in 0..n {
                let id = node_of[i];
                if id == usize::MAX || slot_of[id] == usize::MAX {
                    continue;
                }
                let s = slot_of[id];
                let (left, right) = child_of[s];
                if left == usize::MAX {
                    continue;
                }
                let Node::Split { feature, threshold, .. } = nodes[id] else {
                    unreachable!()
                };
                let child = if self.x[[i, feature]] <= threshold { left } else { right };
                node_of[i] = child;
                stats[child].0 += g[i];
                stats[child].1 += h[i];
            }
            frontier = next;
        }
        for (id, node) in nodes.iter_mut().enumerate() {
            if let Node::Leaf { value } = node {
                *value = self.leaf_value(stats[id].0, stats[id].1);
            }
        }
        Tree { nodes }
    }

    fn best_per_node(
        &self,
        g: &[f64],
        h: &[f64],
        node_of: &[usize],
        slot_of: &[usize],
        frontier: &[usize],
        stats: &[(f64, f64)],
    ) -> Vec<Option<Candidate>> {
        let k = frontier.len();
        let mcw = self.params.min_child_weight;
        let mut best: Vec<Option<Candidate>> = (0..k).map(|_| None).collect();
        for (j, order) in self.sorted.iter().enumerate() {
            let mut gl = vec![0.0; k];
            let mut hl = vec![0.0; k];
            let mut last: Vec<Option<f64>> = vec![None; k];
            for &i in order {
                let id = node_of[i];
                if id == usize::MAX || slot_of[id] == usize::MAX {
                    continue;
                }
                let s = slot_of[id];
                let v = self.x[[i, j]];
                if let Some(prev) = last[s] {
                    if v > prev {
                        let (gt, ht) = stats[frontier[s]];
                        let (gr, hr) = (gt - gl[s], ht - hl[s]);
                        if hl[s] >= mcw && hr >= mcw {
                            let gain = self.score(gl[s], hl[s]) + self.score(gr, hr) - self.score(gt, ht);
                            if gain > MIN_GAIN && best[s].as_ref().is_none_or(|b| gain > b.gain) {
                                best[s] = Some(Candidate {
                                    gain,
                                    feature: j,
                                    threshold: midpoint(prev, v),
                                });
                            }
                        }
                    }
                }
                gl[s] += g[i];
                hl[s] += h[i];
                last[s] = Some(v);
            }
        }
        best
    }

    fn best_shared(
        &self,
        g: &[f64],
        h: &[f64],
        node_of: &[usize],
        slot_of: &[usize],
        frontier: &[usize],
        stats: &[(f64, f64)],
    ) -> Option<Candidate> {
        let k = frontier.len();
        let parent: f64 = frontier.iter().map(|&id| self.score(stats[id].0, stats[id].1)).sum();
        let mut best: Option<Candidate> = None;
        for (j, order) in self.sorted.iter().enumerate() {
            let mut gl = vec![0.0; k];
            let mut hl = vec![0.0; k];
            let mut last: Option<f64> = None;
            for &i in order {
                let id = node_of[i];
                if id == usize::MAX || slot_of[id] == usize::MAX {
                    continue;
                }
                let v = self.x[[i, j]];
                if let Some(prev) = last {
                    if v > prev {
                        let children: f64 = (0..k)
                            .map(|s| {
                                let (gt, ht) = stats[frontier[s]];
                                self.score(gl[s], hl[s]) + self.score(gt - gl[s], ht - hl[s])
                            })
                            .sum();
                        let gain = children - parent;
                        if gain > MIN_GAIN && best.as_ref().is_none_or(|b| gain > b.gain) {
                            best = Some(Candidate {
                                gain,
                                feature: j,
                                threshold: midpoint(prev, v),
                            });
                        }
                    }
                }
                let s = slot_of[id];
                gl[s] += g[i];
                hl[s] += h[i];
                last = Some(v);
            }
        }
        best
    }
}

/// Fits a boosted ensemble. `w` holds per-row loss multipliers.
pub fn train_gbdt(x: ArrayView2<f64>, y: &[u8], w: &[f64], params: &GbdtParams, seed: u64) -> Result<GbdtModel> {
    params.validate()?;
    check_design(x, y, w)?;
    let x = x.as_standard_layout();
    let x = x.view();
    let (n, d) = x.dim();
    let sorted: Vec<Vec<usize>> = (0..d)
        .map(|j| {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by(|&a, &b| x[[a, j]].total_cmp(&x[[b, j]]));
            idx
        })
        .collect();
    let wsum: f64 = w.iter().sum();
    let wpos: f64 = w.iter().zip(y).filter(|(_, &yi)| yi == 1).map(|(wi, _)| wi).sum();
    let prior = (wpos / wsum).clamp(PROBA_CLIP, 1.0 - PROBA_CLIP);
    let base_score = logit(prior);
    let mut margin = vec![base_score; n];
    let mut loss_trace = vec![weighted_loss(&margin, y, w)];
    let builder = Builder {
        x,
        sorted: &sorted,
        params,
    };
    let n_sample = ((params.subsample * n as f64).round() as usize).clamp(1, n);
    let mut trees = Vec::new();
    let mut g = vec![0.0; n];
    let mut h = vec![0.0; n];
    for t in 0..params.n_trees {
        for i in 0..n {
            let p = super::sigmoid(margin[i]);
            g[i] = w[i] * (p - f64::from(y[i]));
            h[i] = w[i] * p * (1.0 - p);
        }
        let in_sample = if n_sample < n {
            let mut r = rng::derived(seed, &[t as u64]);
            let mut mask = vec![false; n];
            for i in sample(&mut r, n, n_sample) {
                mask[i] = true;
            }
            mask
        } else {
            vec![true; n]
        };
        let tree = builder.grow(&g, &h, &in_sample);
        if tree.nodes.len() == 1 {
            continue;
        }
        for (m, row) in margin.iter_mut().zip(x.rows()) {
            *m += params.learning_rate * tree.predict(row.as_slice().expect("standard layout"));
        }
        loss_trace.push(weighted_loss(&margin, y, w));
        trees.push(tree);
    }
    Ok(GbdtModel {
        params: params.clone(),
        n_features: d,
        base_score,
        learning_rate: params.learning_rate,
        trees,
        loss_trace,
    })
}
