//! Extremely randomized trees for regression.
//!
//! Every tree sees the whole training set (no bootstrap). At a node, up to
//! `k` non-constant features are drawn at random; each gets one threshold
//! drawn uniformly from the node's observed range for that feature, and the
//! candidate with the largest variance reduction wins. Ties go to the lower
//! feature index. Growth stops when a node is pure, has fewer than
//! `2 * min_samples_leaf` rows, or no candidate leaves `min_samples_leaf` rows
//! on both sides.
//!
//! Training rows are put into a canonical order before growing and each tree
//! has its own ChaCha8 stream seeded with `seed + tree_index`, so the model is
//! independent of input row order and of the number of worker threads.

mod persist;

use std::cmp::Ordering;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use persist::{from_text, load_model, save_model, to_text, MODEL_FORMAT_VERSION};

use crate::error::{Error, Result};
use crate::feature_assembly::{Approach, FeatureVector};
use crate::util::bounded_mean;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtraTreesConfig {
    pub n_trees: usize,
    pub min_samples_leaf: usize,
    /// Candidate features per split; `None` means `ceil(d / 3)`.
    pub max_features: Option<usize>,
}

impl Default for ExtraTreesConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            min_samples_leaf: 1,
            max_features: None,
        }
    }
}

impl ExtraTreesConfig {
    pub fn candidate_features(&self, n_features: usize) -> usize {
        self.max_features
            .unwrap_or(n_features.div_ceil(3))
            .clamp(1, n_features.max(1))
    }
}

/// The feature layout a model is bound to.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureLayout {
    /// `None` for models trained on raw matrices.
    pub approach: Option<Approach>,
    pub columns: Vec<String>,
}

impl FeatureLayout {
    pub fn for_approach(approach: Approach) -> Self {
        Self {
            approach: Some(approach),
            columns: approach.column_names(),
        }
    }

    pub fn generic(n_features: usize) -> Self {
        Self {
            approach: None,
            columns: (0..n_features).map(|i| format!("x{i}")).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
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

/// Nodes in pre-order; `nodes[0]` is the root and a split's left child
/// immediately follows it.
#[derive(Clone, Debug, PartialEq)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            match t.nodes[i] {
                Node::Leaf { .. } => 1,
                Node::Split { left, right, .. } => 1 + go(t, left).max(go(t, right)),
            }
        }
        go(self, 0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExtraTreesModel {
    pub config: ExtraTreesConfig,
    pub layout: FeatureLayout,
    pub seed: u64,
    pub trees: Vec<Tree>,
}

/// A plain `(features, target)` matrix.
#[derive(Clone, Debug, Default)]
pub struct TrainingSet {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
}

impl TrainingSet {
    pub fn from_feature_vectors(rows: &[FeatureVector]) -> Result<(Self, Approach)> {
        let first = rows.first().ok_or(Error::EmptyTrainingSet)?;
        let approach = first.approach;
        let mut set = TrainingSet::default();
        for (i, r) in rows.iter().enumerate() {
            if r.approach != approach || r.values.len() != first.values.len() {
                return Err(Error::InconsistentLayout(format!(
                    "row {i} is approach {} with {} values, row 0 is approach {} with {}",
                    r.approach,
                    r.values.len(),
                    approach,
                    first.values.len()
                )));
            }
            let y = r
                .target
                .ok_or_else(|| Error::InconsistentLayout(format!("row {i} has no target")))?;
            set.x.push(r.values.clone());
            set.y.push(y);
        }
        Ok((set, approach))
    }
}

/// Trains on assembled feature vectors (targets must be present).
pub fn train(rows: &[FeatureVector], config: &ExtraTreesConfig, seed: u64) -> Result<ExtraTreesModel> {
    let (set, approach) = TrainingSet::from_feature_vectors(rows)?;
    fit(&set, FeatureLayout::for_approach(approach), config, seed)
}

fn cmp_rows(a: (&[f64], f64), b: (&[f64], f64)) -> Ordering {
    a.0.iter()
        .zip(b.0)
        .map(|(p, q)| p.total_cmp(q))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
        .then(a.1.total_cmp(&b.1))
}

pub fn fit(
    set: &TrainingSet,
    layout: FeatureLayout,
    config: &ExtraTreesConfig,
    seed: u64,
) -> Result<ExtraTreesModel> {
    if set.x.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    if set.x.len() != set.y.len() {
        return Err(Error::InconsistentLayout(format!(
            "{} feature rows but {} targets",
            set.x.len(),
            set.y.len()
        )));
    }
    let d = layout.len();
    if let Some((i, row)) = set.x.iter().enumerate().find(|(_, r)| r.len() != d) {
        return Err(Error::InconsistentLayout(format!(
            "row {i} has {} values, layout has {d}",
            row.len()
        )));
    }
    if set.x.iter().flatten().chain(&set.y).any(|v| !v.is_finite()) {
        return Err(Error::InconsistentLayout("non-finite value in training data".into()));
    }
    if config.n_trees == 0 || config.min_samples_leaf == 0 {
        return Err(Error::InconsistentLayout(
            "n_trees and min_samples_leaf must be at least 1".into(),
        ));
    }

    let mut order: Vec<usize> = (0..set.x.len()).collect();
    order.sort_by(|&a, &b| cmp_rows((&set.x[a], set.y[a]), (&set.x[b], set.y[b])));
    let x: Vec<&[f64]> = order.iter().map(|&i| set.x[i].as_slice()).collect();
    let y: Vec<f64> = order.iter().map(|&i| set.y[i]).collect();
    let data = Data {
        x: &x,
        y: &y,
        n_features: d,
        k: config.candidate_features(d),
        min_leaf: config.min_samples_leaf,
    };

    let trees = (0..config.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(t as u64));
            let mut nodes = Vec::new();
            let mut idx: Vec<usize> = (0..y.len()).collect();
            grow(&data, &mut idx, &mut rng, &mut nodes);
            Tree { nodes }
        })
        .collect();
    Ok(ExtraTreesModel {
        config: config.clone(),
        layout,
        seed,
        trees,
    })
}

struct Data<'a> {
    x: &'a [&'a [f64]],
    y: &'a [f64],
    n_features: usize,
    k: usize,
    min_leaf: usize,
}

struct Candidate {
    feature: usize,
    threshold: f64,
    score: f64,
}

fn leaf(data: &Data, idx: &[usize], nodes: &mut Vec<Node>) {
    let ys: Vec<f64> = idx.iter().map(|&i| data.y[i]).collect();
    nodes.push(Node::Leaf {
        value: bounded_mean(&ys),
    });
}

fn grow(data: &Data, idx: &mut [usize], rng: &mut ChaCha8Rng, nodes: &mut Vec<Node>) {
    let n = idx.len();
    let y0 = data.y[idx[0]];
    if n < 2 * data.min_leaf || idx.iter().all(|&i| data.y[i] == y0) {
        return leaf(data, idx, nodes);
    }

    let mut features: Vec<usize> = (0..data.n_features).collect();
    features.shuffle(rng);
    let mut candidates: Vec<Candidate> = Vec::with_capacity(data.k);
    let mut drawn = 0;
    for &f in &features {
        if drawn == data.k {
            break;
        }
        let (lo, hi) = idx.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
            let v = data.x[i][f];
            (lo.min(v), hi.max(v))
        });
        if lo == hi {
            continue;
        }
        drawn += 1;
        let mut threshold = lo + rng.gen::<f64>() * (hi - lo);
        if threshold >= hi {
            threshold = lo;
        }
        if let Some(score) = split_score(data, idx, f, threshold) {
            candidates.push(Candidate {
                feature: f,
                threshold,
                score,
            });
        }
    }
    let best = candidates.into_iter().reduce(|best, c| {
        match c
            .score
            .total_cmp(&best.score)
            .then(best.feature.cmp(&c.feature))
            .then(best.threshold.total_cmp(&c.threshold))
        {
            Ordering::Greater => c,
            _ => best,
        }
    });
    let Some(best) = best else {
        return leaf(data, idx, nodes);
    };

    let at = partition(idx, |i| data.x[i][best.feature] <= best.threshold);
    let me = nodes.len();
    nodes.push(Node::Leaf { value: f64::NAN });
    let (l, r) = idx.split_at_mut(at);
    let left = nodes.len();
    grow(data, l, rng, nodes);
    let right = nodes.len();
    grow(data, r, rng, nodes);
    nodes[me] = Node::Split {
        feature: best.feature,
        threshold: best.threshold,
        left,
        right,
    };
}

/// Variance-reduction proxy `S_L^2 / n_L + S_R^2 / n_R` (the parent term is
/// the same for every candidate), or `None` if a side is below `min_leaf`.
fn split_score(data: &Data, idx: &[usize], feature: usize, threshold: f64) -> Option<f64> {
    let (mut nl, mut sl, mut sr) = (0usize, 0.0, 0.0);
    for &i in idx {
        if data.x[i][feature] <= threshold {
            nl += 1;
            sl += data.y[i];
        } else {
            sr += data.y[i];
        }
    }
    let nr = idx.len() - nl;
    if nl < data.min_leaf || nr < data.min_leaf {
        return None;
    }
    Some(sl * sl / nl as f64 + sr * sr / nr as f64)
}

/// Stable in-place partition; returns the number of elements satisfying `pred`.
fn partition(idx: &mut [usize], pred: impl Fn(usize) -> bool) -> usize {
    let (mut yes, no): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| pred(i));
    let at = yes.len();
    yes.extend(no);
    idx.copy_from_slice(&yes);
    at
}

impl ExtraTreesModel {
    pub fn n_features(&self) -> usize {
        self.layout.len()
    }

    /// Mean of per-tree predictions for a raw value slice.
    pub fn predict_values(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n_features() {
            return Err(Error::LayoutMismatch(format!(
                "{} values for a {}-feature model",
                x.len(),
                self.n_features()
            )));
        }
        let per_tree: Vec<f64> = self.trees.iter().map(|t| t.predict(x)).collect();
        Ok(bounded_mean(&per_tree))
    }

    pub fn predict(&self, x: &FeatureVector) -> Result<f64> {
        if let Some(a) = self.layout.approach {
            if a != x.approach {
                return Err(Error::LayoutMismatch(format!(
                    "model is bound to approach {a}, vector is approach {}",
                    x.approach
                )));
            }
        }
        self.predict_values(&x.values)
    }

    pub fn predict_batch(&self, xs: &[FeatureVector]) -> Result<Vec<f64>> {
        xs.par_iter().map(|x| self.predict(x)).collect()
    }
}

/// Coefficient of determination.
pub fn r_squared(truth: &[f64], pred: &[f64]) -> f64 {
    let mean = truth.iter().sum::<f64>() / truth.len() as f64;
    let ss_tot: f64 = truth.iter().map(|t| (t - mean).powi(2)).sum();
    let ss_res: f64 = truth.iter().zip(pred).map(|(t, p)| (t - p).powi(2)).sum();
    if ss_tot == 0.0 {
        if ss_res == 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        1.0 - ss_res / ss_tot
    }
}

fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (average_ranks(a), average_ranks(b));
    let n = ra.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    if va == 0.0 || vb == 0.0 {
        0.0
    } else {
        cov / (va * vb).sqrt()
    }
}

#[cfg(test)]
mod tests;
