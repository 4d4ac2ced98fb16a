//! Exact-greedy gradient-boosted regression trees under squared error.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{FeatureMatrix, ModelError};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub depth: usize,
    pub iterations: usize,
    pub l2: f64,
    pub learning_rate: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self { depth: 8, iterations: 300, l2: 9.0, learning_rate: 0.1 }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(ModelError::InvalidHyperparams(format!("l2 = {}", self.l2)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(ModelError::InvalidHyperparams(format!("learning_rate = {}", self.learning_rate)));
        }
        Ok(())
    }
}

/// Samples with `x[feature] <= threshold` go left.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Split { feature: usize, threshold: f64, left: usize, right: usize, cover: f64 },
    Leaf { value: f64, cover: f64 },
}

impl Node {
    pub fn cover(&self) -> f64 {
        match *self {
            Node::Split { cover, .. } | Node::Leaf { cover, .. } => cover,
        }
    }
}

/// Flat tree; the root is node 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf_value(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value, .. } => return value,
                Node::Split { feature, threshold, left, right, .. } => {
                    i = if row[feature] <= threshold { left } else { right };
                }
            }
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

    /// Cover-weighted mean of the leaf values.
    pub fn expected_value(&self) -> f64 {
        let root = self.nodes[0].cover();
        self.nodes
            .iter()
            .filter_map(|n| match *n {
                Node::Leaf { value, cover } => Some(value * cover),
                Node::Split { .. } => None,
            })
            .sum::<f64>()
            / root
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    pub feature_names: Vec<String>,
    pub base_score: f64,
    pub learning_rate: f64,
    pub hyperparams: Hyperparams,
    pub seed: u64,
    pub trees: Vec<Tree>,
    /// Mean squared training error before boosting and after each tree.
    pub training_loss: Vec<f64>,
}

impl GbtModel {
    /// Trees are added one at a time, exactly as during training.
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.trees
            .iter()
            .fold(self.base_score, |acc, t| acc + self.learning_rate * t.leaf_value(row))
    }

    pub fn predict_matrix(&self, x: &FeatureMatrix) -> Result<Vec<f64>, ModelError> {
        let x = if x.names() == self.feature_names.as_slice() {
            x.clone()
        } else {
            x.select_columns(&self.feature_names)?
        };
        Ok(x.rows().map(|r| self.predict_row(r)).collect())
    }

    /// Looks up each model feature by name.
    pub fn predict<F>(&self, lookup: F) -> Result<f64, ModelError>
    where
        F: Fn(&str) -> Option<f64>,
    {
        let row = self
            .feature_names
            .iter()
            .map(|n| lookup(n).ok_or_else(|| ModelError::MissingFeature(n.clone())))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(self.predict_row(&row))
    }
}

/// Split candidate; compared by gain, then lower feature, then lower threshold.
#[derive(Clone, Copy, Debug)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

/// Below this a split is not worth making.
const MIN_GAIN: f64 = 1e-14;
/// Nodes smaller than this search features sequentially.
const PARALLEL_MIN_ROWS: usize = 512;

struct Builder<'a> {
    columns: &'a [Vec<f64>],
    residual: &'a [f64],
    l2: f64,
    max_depth: usize,
    nodes: Vec<Node>,
    leaf_of_row: Vec<f64>,
    goes_left: Vec<bool>,
}

impl Builder<'_> {
    fn best_for_feature(&self, f: usize, order: &[usize], g: f64) -> Option<Candidate> {
        let col = &self.columns[f];
        let n = order.len() as f64;
        let parent = g * g / (n + self.l2);
        let mut gl = 0.0;
        let mut best: Option<Candidate> = None;
        for k in 0..order.len() - 1 {
            gl += self.residual[order[k]];
            let (a, b) = (col[order[k]], col[order[k + 1]]);
            if a == b {
                continue;
            }
            let nl = (k + 1) as f64;
            let gr = g - gl;
            let gain = gl * gl / (nl + self.l2) + gr * gr / (n - nl + self.l2) - parent;
            if best.is_none_or(|c| gain > c.gain) {
                let mid = 0.5 * (a + b);
                let threshold = if mid < b { mid } else { a };
                best = Some(Candidate { gain, feature: f, threshold });
            }
        }
        best
    }

    fn build(&mut self, sorted: Vec<Vec<usize>>, depth: usize) -> usize {
        let rows = &sorted[0];
        let n = rows.len();
        let g: f64 = rows.iter().map(|&i| self.residual[i]).sum();
        let id = self.nodes.len();
        let leaf = |b: &mut Self| {
            let value = g / (n as f64 + b.l2);
            for &i in rows {
                b.leaf_of_row[i] = value;
            }
            b.nodes.push(Node::Leaf { value, cover: n as f64 });
            id
        };
        if depth >= self.max_depth || n < 2 {
            return leaf(self);
        }
        let p = sorted.len();
        let per_feature: Vec<Option<Candidate>> = if n >= PARALLEL_MIN_ROWS {
            (0..p).into_par_iter().map(|f| self.best_for_feature(f, &sorted[f], g)).collect()
        } else {
            (0..p).map(|f| self.best_for_feature(f, &sorted[f], g)).collect()
        };
        // strict > keeps the lowest feature index on ties
        let best = per_feature
            .into_iter()
            .flatten()
            .fold(None::<Candidate>, |acc, c| match acc {
                Some(a) if c.gain <= a.gain => Some(a),
                _ => Some(c),
            });
        let Some(best) = best.filter(|c| c.gain > MIN_GAIN) else {
            return leaf(self);
        };

        let col = &self.columns[best.feature];
        for &i in rows {
            self.goes_left[i] = col[i] <= best.threshold;
        }
        let (left_sorted, right_sorted): (Vec<_>, Vec<_>) = sorted
            .iter()
            .map(|order| order.iter().partition::<Vec<usize>, _>(|&&i| self.goes_left[i]))
            .unzip();
        self.nodes.push(Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left: 0,
            right: 0,
            cover: n as f64,
        });
        drop(sorted);
        let l = self.build(left_sorted, depth + 1);
        let r = self.build(right_sorted, depth + 1);
        if let Node::Split { left, right, .. } = &mut self.nodes[id] {
            *left = l;
            *right = r;
        }
        id
    }
}

fn mse(y: &[f64], pred: &[f64]) -> f64 {
    y.iter().zip(pred).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len() as f64
}

/// Fits `hp.iterations` trees to the residuals of a squared-error model that
/// starts at the target mean. `seed` is recorded with the model; the exact
/// greedy search itself draws no randomness.
pub fn train_gbt(x: &FeatureMatrix, y: &[f64], hp: &Hyperparams, seed: u64) -> Result<GbtModel, ModelError> {
    hp.validate()?;
    let n = x.n_rows();
    if n == 0 {
        return Err(ModelError::EmptyTrainingSet);
    }
    if y.len() != n {
        return Err(ModelError::LengthMismatch(n, y.len()));
    }
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(ModelError::NonFiniteTarget(i));
    }
    let p = x.n_cols();
    let columns: Vec<Vec<f64>> = (0..p).map(|j| x.column(j)).collect();
    for (j, col) in columns.iter().enumerate() {
        if let Some(row) = col.iter().position(|v| !v.is_finite()) {
            return Err(ModelError::NonFiniteFeature { feature: x.names()[j].clone(), row });
        }
    }
    let presorted: Vec<Vec<usize>> = columns
        .par_iter()
        .map(|col| {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by(|&a, &b| col[a].total_cmp(&col[b]).then(a.cmp(&b)));
            idx
        })
        .collect();
    // a model with no features still fits the mean
    let presorted = if p == 0 { vec![(0..n).collect()] } else { presorted };

    let base_score = y.iter().sum::<f64>() / n as f64;
    let mut pred = vec![base_score; n];
    let mut training_loss = vec![mse(y, &pred)];
    let mut trees = Vec::with_capacity(hp.iterations);
    let mut residual = vec![0.0; n];
    for _ in 0..hp.iterations {
        for i in 0..n {
            residual[i] = y[i] - pred[i];
        }
        let mut b = Builder {
            columns: &columns,
            residual: &residual,
            l2: hp.l2,
            max_depth: if p == 0 { 0 } else { hp.depth },
            nodes: Vec::new(),
            leaf_of_row: vec![0.0; n],
            goes_left: vec![false; n],
        };
        b.build(presorted.clone(), 0);
        for (pi, v) in pred.iter_mut().zip(&b.leaf_of_row) {
            *pi += hp.learning_rate * v;
        }
        trees.push(Tree { nodes: b.nodes });
        training_loss.push(mse(y, &pred));
    }
    Ok(GbtModel {
        feature_names: x.names().to_vec(),
        base_score,
        learning_rate: hp.learning_rate,
        hyperparams: *hp,
        seed,
        trees,
        training_loss,
    })
}
