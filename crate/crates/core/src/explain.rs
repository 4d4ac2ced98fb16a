//! Permutation importance, exact path-dependent tree SHAP and decision-plot
//! paths.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::{metrics, FeatureMatrix, GbtModel, ModelError, Node, Tree};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExplainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("n_repeats must be at least 1")]
    NoRepeats,
    #[error("sample is empty")]
    EmptySample,
    #[error("sample of {sample} exceeds {rows} rows")]
    SampleExceedsRows { sample: usize, rows: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImportanceRow {
    pub feature: String,
    /// Mean increase in MAE when the column is shuffled.
    pub importance: f64,
    /// Sample standard deviation over repeats.
    pub std: f64,
    /// 1 is the most important; ties keep column order.
    pub rank: usize,
}

/// Shuffles each column `n_repeats` times and records the MAE increase.
/// The shuffle for `(feature, repeat)` uses its own ChaCha stream, so the
/// table is reproducible under any thread count.
pub fn permutation_importance(
    model: &GbtModel,
    x: &FeatureMatrix,
    truth: &[f64],
    n_repeats: usize,
    seed: u64,
) -> Result<Vec<ImportanceRow>, ExplainError> {
    if n_repeats == 0 {
        return Err(ExplainError::NoRepeats);
    }
    let x = x.select_columns(&model.feature_names)?;
    let baseline = metrics(&model.predict_matrix(&x)?, truth)?.mae;
    let p = x.n_cols();
    let deltas = (0..p * n_repeats)
        .into_par_iter()
        .map(|job| {
            let j = job / n_repeats;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(job as u64);
            let mut col = x.column(j);
            col.shuffle(&mut rng);
            let mut xp = x.clone();
            for (i, v) in col.into_iter().enumerate() {
                xp.set(i, j, v);
            }
            Ok(metrics(&model.predict_matrix(&xp)?, truth)?.mae - baseline)
        })
        .collect::<Result<Vec<f64>, ExplainError>>()?;
    let mut rows: Vec<ImportanceRow> = deltas
        .chunks(n_repeats)
        .zip(x.names())
        .map(|(d, name)| {
            let mean = d.iter().sum::<f64>() / n_repeats as f64;
            let std = if n_repeats > 1 {
                (d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n_repeats - 1) as f64).sqrt()
            } else {
                0.0
            };
            ImportanceRow { feature: name.clone(), importance: mean, std, rank: 0 }
        })
        .collect();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| rows[b].importance.total_cmp(&rows[a].importance).then(a.cmp(&b)));
    for (rank, i) in order.into_iter().enumerate() {
        rows[i].rank = rank + 1;
    }
    Ok(rows)
}

#[derive(Clone, Copy, Debug)]
struct PathElement {
    feature: Option<usize>,
    zero_fraction: f64,
    one_fraction: f64,
    weight: f64,
}

fn extend(path: &mut Vec<PathElement>, zero_fraction: f64, one_fraction: f64, feature: Option<usize>) {
    let d = path.len();
    path.push(PathElement { feature, zero_fraction, one_fraction, weight: if d == 0 { 1.0 } else { 0.0 } });
    let df = d as f64;
    for i in (0..d).rev() {
        let w = path[i].weight;
        path[i + 1].weight += one_fraction * w * (i + 1) as f64 / (df + 1.0);
        path[i].weight = zero_fraction * w * (df - i as f64) / (df + 1.0);
    }
}

fn unwind(path: &mut Vec<PathElement>, at: usize) {
    let d = path.len() - 1;
    let df = d as f64;
    let (one, zero) = (path[at].one_fraction, path[at].zero_fraction);
    let mut next = path[d].weight;
    for i in (0..d).rev() {
        if one != 0.0 {
            let tmp = path[i].weight;
            path[i].weight = next * (df + 1.0) / ((i + 1) as f64 * one);
            next = tmp - path[i].weight * zero * (df - i as f64) / (df + 1.0);
        } else {
            path[i].weight = path[i].weight * (df + 1.0) / (zero * (df - i as f64));
        }
    }
    // weights stay put; the feature data above `at` shifts down one slot
    for i in at..d {
        path[i].feature = path[i + 1].feature;
        path[i].zero_fraction = path[i + 1].zero_fraction;
        path[i].one_fraction = path[i + 1].one_fraction;
    }
    path.pop();
}

fn unwound_sum(path: &[PathElement], at: usize) -> f64 {
    let d = path.len() - 1;
    let df = d as f64;
    let (one, zero) = (path[at].one_fraction, path[at].zero_fraction);
    let mut next = path[d].weight;
    let mut total = 0.0;
    for i in (0..d).rev() {
        if one != 0.0 {
            let tmp = next * (df + 1.0) / ((i + 1) as f64 * one);
            total += tmp;
            next = path[i].weight - tmp * zero * (df - i as f64) / (df + 1.0);
        } else if zero != 0.0 {
            total += path[i].weight / zero / ((df - i as f64) / (df + 1.0));
        }
    }
    total
}

fn recurse(
    tree: &Tree,
    node: usize,
    row: &[f64],
    phi: &mut [f64],
    parent: &[PathElement],
    zero_fraction: f64,
    one_fraction: f64,
    feature: Option<usize>,
) {
    let mut path = parent.to_vec();
    extend(&mut path, zero_fraction, one_fraction, feature);
    match tree.nodes[node] {
        Node::Leaf { value, .. } => {
            for i in 1..path.len() {
                let w = unwound_sum(&path, i);
                let e = path[i];
                phi[e.feature.expect("only the root element lacks a feature")] +=
                    w * (e.one_fraction - e.zero_fraction) * value;
            }
        }
        Node::Split { feature: f, threshold, left, right, cover } => {
            let (hot, cold) = if row[f] <= threshold { (left, right) } else { (right, left) };
            let (mut in_zero, mut in_one) = (1.0, 1.0);
            if let Some(k) = (1..path.len()).find(|&k| path[k].feature == Some(f)) {
                in_zero = path[k].zero_fraction;
                in_one = path[k].one_fraction;
                unwind(&mut path, k);
            }
            let hot_frac = tree.nodes[hot].cover() / cover;
            let cold_frac = tree.nodes[cold].cover() / cover;
            recurse(tree, hot, row, phi, &path, hot_frac * in_zero, in_one, Some(f));
            recurse(tree, cold, row, phi, &path, cold_frac * in_zero, 0.0, Some(f));
        }
    }
}

/// Exact path-dependent SHAP values of one tree, added into `phi`.
pub fn tree_shap_single(tree: &Tree, row: &[f64], phi: &mut [f64]) {
    recurse(tree, 0, row, phi, &[], 1.0, 1.0, None);
}

/// Per-feature contributions and the base value of the ensemble for one row.
/// `base + sum(contributions)` equals the model prediction.
pub fn tree_shap(model: &GbtModel, row: &[f64]) -> Result<(Vec<f64>, f64), ExplainError> {
    let p = model.feature_names.len();
    if row.len() < p {
        return Err(ModelError::MissingFeature(model.feature_names[row.len()].clone()).into());
    }
    let mut total = vec![0.0; p];
    let mut per_tree = vec![0.0; p];
    for tree in &model.trees {
        per_tree.iter_mut().for_each(|v| *v = 0.0);
        tree_shap_single(tree, row, &mut per_tree);
        for (t, v) in total.iter_mut().zip(&per_tree) {
            *t += model.learning_rate * v;
        }
    }
    Ok((total, base_value(model)))
}

/// Prediction when no feature is known: the cover-weighted tree means.
pub fn base_value(model: &GbtModel) -> f64 {
    model
        .trees
        .iter()
        .fold(model.base_score, |acc, t| acc + model.learning_rate * t.expected_value())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapMatrix {
    pub feature_names: Vec<String>,
    pub base_value: f64,
    pub row_ids: Vec<String>,
    /// One contribution vector per row.
    pub rows: Vec<Vec<f64>>,
    pub predictions: Vec<f64>,
}

impl ShapMatrix {
    /// Mean absolute contribution per feature, in column order.
    pub fn mean_abs(&self) -> Vec<f64> {
        let n = self.rows.len().max(1) as f64;
        (0..self.feature_names.len())
            .map(|j| self.rows.iter().map(|r| r[j].abs()).sum::<f64>() / n)
            .collect()
    }

    /// Largest `|base + sum - prediction|` over rows.
    pub fn max_local_error(&self) -> f64 {
        self.rows
            .iter()
            .zip(&self.predictions)
            .map(|(r, p)| (self.base_value + r.iter().sum::<f64>() - p).abs())
            .fold(0.0, f64::max)
    }
}

pub fn shap_matrix(model: &GbtModel, x: &FeatureMatrix, row_ids: Vec<String>) -> Result<ShapMatrix, ExplainError> {
    let x = x.select_columns(&model.feature_names)?;
    if row_ids.len() != x.n_rows() {
        return Err(ModelError::LengthMismatch(row_ids.len(), x.n_rows()).into());
    }
    let rows = (0..x.n_rows())
        .into_par_iter()
        .map(|i| tree_shap(model, x.row(i)).map(|r| r.0))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ShapMatrix {
        feature_names: model.feature_names.clone(),
        base_value: base_value(model),
        row_ids,
        rows,
        predictions: x.rows().map(|r| model.predict_row(r)).collect(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionStep {
    pub row_id: String,
    pub step: usize,
    pub feature: String,
    pub cumulative_value: f64,
}

/// Name used for step 0, which holds the base value.
pub const BASE_STEP: &str = "base_value";

/// Cumulative contribution paths for a seeded sample of rows. Features are
/// added least important first (by global mean |contribution|), so each path
/// ends with the most important feature and lands on the prediction.
/// Sampled rows are emitted in their original order.
pub fn decision_paths(shap: &ShapMatrix, sample_size: usize, seed: u64) -> Result<Vec<DecisionStep>, ExplainError> {
    let n = shap.rows.len();
    if sample_size == 0 || n == 0 {
        return Err(ExplainError::EmptySample);
    }
    if sample_size > n {
        return Err(ExplainError::SampleExceedsRows { sample: sample_size, rows: n });
    }
    let mut picked = rand::seq::index::sample(&mut ChaCha8Rng::seed_from_u64(seed), n, sample_size).into_vec();
    picked.sort_unstable();
    let imp = shap.mean_abs();
    let mut order: Vec<usize> = (0..shap.feature_names.len()).collect();
    order.sort_by(|&a, &b| imp[a].total_cmp(&imp[b]).then(a.cmp(&b)));

    let mut out = Vec::with_capacity(sample_size * (order.len() + 1));
    for i in picked {
        let id = &shap.row_ids[i];
        let mut acc = shap.base_value;
        out.push(DecisionStep { row_id: id.clone(), step: 0, feature: BASE_STEP.into(), cumulative_value: acc });
        for (k, &j) in order.iter().enumerate() {
            acc += shap.rows[i][j];
            out.push(DecisionStep {
                row_id: id.clone(),
                step: k + 1,
                feature: shap.feature_names[j].clone(),
                cumulative_value: acc,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Hyperparams;

    fn model(trees: Vec<Tree>, p: usize) -> GbtModel {
        GbtModel {
            feature_names: (0..p).map(|j| format!("f{j}")).collect(),
            base_score: 0.5,
            learning_rate: 1.0,
            hyperparams: Hyperparams::default(),
            seed: 0,
            trees,
            training_loss: vec![],
        }
    }

    fn stump(feature: usize, threshold: f64, lo: f64, hi: f64, covers: (f64, f64)) -> Tree {
        Tree {
            nodes: vec![
                Node::Split { feature, threshold, left: 1, right: 2, cover: covers.0 + covers.1 },
                Node::Leaf { value: lo, cover: covers.0 },
                Node::Leaf { value: hi, cover: covers.1 },
            ],
        }
    }

    #[test]
    fn single_leaf_has_no_contributions() {
        let m = model(vec![Tree { nodes: vec![Node::Leaf { value: 2.0, cover: 10.0 }] }], 3);
        let (phi, base) = tree_shap(&m, &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(phi, vec![0.0; 3]);
        assert_eq!(base, 2.5);
    }

    #[test]
    fn stump_gives_everything_to_its_feature() {
        let m = model(vec![stump(1, 0.0, -1.0, 3.0, (3.0, 1.0))], 2);
        // expected leaf = (-3 + 3)/4 = 0
        let (phi, base) = tree_shap(&m, &[9.0, 1.0]).unwrap();
        assert_eq!(base, 0.5);
        assert_eq!(phi, vec![0.0, 3.0]);
        assert_eq!(base + phi.iter().sum::<f64>(), m.predict_row(&[9.0, 1.0]));
        assert!(tree_shap(&m, &[1.0]).is_err());
    }

    #[test]
    fn two_level_tree_by_hand() {
        // root on f0 (cover 4); left leaf 0 (cover 2); right splits f1: 4 (1), 8 (1)
        let t = Tree {
            nodes: vec![
                Node::Split { feature: 0, threshold: 0.5, left: 1, right: 2, cover: 4.0 },
                Node::Leaf { value: 0.0, cover: 2.0 },
                Node::Split { feature: 1, threshold: 0.5, left: 3, right: 4, cover: 2.0 },
                Node::Leaf { value: 4.0, cover: 1.0 },
                Node::Leaf { value: 8.0, cover: 1.0 },
            ],
        };
        let mut phi = [0.0; 2];
        tree_shap_single(&t, &[1.0, 1.0], &mut phi);
        // v({}) = 3, v({0}) = 6, v({1}) = 4, v({0,1}) = 8
        // phi0 = (6-3 + 8-4)/2 = 3.5, phi1 = (4-3 + 8-6)/2 = 1.5
        assert!((phi[0] - 3.5).abs() < 1e-12 && (phi[1] - 1.5).abs() < 1e-12, "{phi:?}");
    }

    #[test]
    fn ensemble_is_sum_of_scaled_trees() {
        let a = stump(0, 0.0, -1.0, 1.0, (1.0, 1.0));
        let b = stump(1, 0.0, 2.0, -2.0, (1.0, 3.0));
        let mut m = model(vec![a.clone(), b.clone()], 2);
        m.learning_rate = 0.3;
        let row = [1.0, -1.0];
        let (phi, base) = tree_shap(&m, &row).unwrap();
        let (mut pa, mut pb) = ([0.0; 2], [0.0; 2]);
        tree_shap_single(&a, &row, &mut pa);
        tree_shap_single(&b, &row, &mut pb);
        for j in 0..2 {
            assert!((phi[j] - 0.3 * (pa[j] + pb[j])).abs() < 1e-15);
        }
        assert!((base + phi.iter().sum::<f64>() - m.predict_row(&row)).abs() < 1e-12);
    }

    fn shap_fixture(rows: Vec<Vec<f64>>, base: f64) -> ShapMatrix {
        let predictions = rows.iter().map(|r| base + r.iter().sum::<f64>()).collect();
        ShapMatrix {
            feature_names: vec!["a".into(), "b".into()],
            base_value: base,
            row_ids: (0..rows.len()).map(|i| format!("r{i}")).collect(),
            rows,
            predictions,
        }
    }

    #[test]
    fn decision_path_examples() {
        let one = shap_fixture(vec![vec![0.25, -0.5]], 1.0);
        let p = decision_paths(&one, 1, 0).unwrap();
        assert_eq!(p.last().unwrap().cumulative_value, one.predictions[0]);
        let flat = shap_fixture(vec![vec![0.0, 0.0]; 2], 0.5);
        assert!(decision_paths(&flat, 2, 0).unwrap().iter().all(|s| s.cumulative_value == 0.5));

        // mean |a| = 1/3, mean |b| = 1: a is added first
        let three = shap_fixture(vec![vec![0.5, -1.0], vec![-0.5, 2.0], vec![0.0, 0.0]], 1.0);
        let p = decision_paths(&three, 3, 9).unwrap();
        let cum: Vec<(String, f64)> = p.iter().map(|s| (s.feature.clone(), s.cumulative_value)).collect();
        let expect = [
            (BASE_STEP, 1.0), ("a", 1.5), ("b", 0.5),
            (BASE_STEP, 1.0), ("a", 0.5), ("b", 2.5),
            (BASE_STEP, 1.0), ("a", 1.0), ("b", 1.0),
        ];
        assert_eq!(cum.len(), expect.len());
        for ((f, v), (ef, ev)) in cum.iter().zip(expect) {
            assert_eq!((f.as_str(), *v), (ef, ev));
        }
        assert_eq!(decision_paths(&three, 0, 0), Err(ExplainError::EmptySample));
        assert!(matches!(decision_paths(&three, 4, 0), Err(ExplainError::SampleExceedsRows { .. })));
    }

    #[test]
    fn unused_feature_has_zero_importance() {
        let rows: Vec<Vec<f64>> = (0..60).map(|i| vec![(i % 10) as f64, ((i * 7) % 13) as f64]).collect();
        let y: Vec<f64> = rows.iter().map(|r| if r[0] > 4.5 { 1.0 } else { -1.0 }).collect();
        let x = FeatureMatrix::from_rows(vec!["f0".into(), "f1".into()], &rows).unwrap();
        let m = model(vec![stump(0, 4.5, -1.5, 0.5, (30.0, 30.0))], 2);
        let imp = permutation_importance(&m, &x, &y, 5, 3).unwrap();
        assert_eq!((imp[1].importance, imp[1].std), (0.0, 0.0));
        assert!(imp[0].importance > 0.0);
        assert_eq!((imp[0].rank, imp[1].rank), (1, 2));
        assert_eq!(imp, permutation_importance(&m, &x, &y, 5, 3).unwrap());
        assert_eq!(permutation_importance(&m, &x, &y, 0, 3), Err(ExplainError::NoRepeats));
    }
}
