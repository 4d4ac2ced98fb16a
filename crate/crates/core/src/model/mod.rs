//! Feature screening, target scaling, gradient-boosted regression trees and
//! their evaluation.

mod cv;
mod gbt;
mod vif;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use cv::{grid_search_cv, kfold_assignments, CvCell, GridSearchResult};
pub use gbt::{train_gbt, GbtModel, Hyperparams, Node, Tree};
pub use vif::{variance_inflation_factors, vif_filter, VifEntry, VifReport, DEFAULT_VIF_THRESHOLD};

use crate::domain::{Feature, FeatureVector};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("feature {feature} has a non-finite value in row {row}")]
    NonFiniteFeature { feature: String, row: usize },
    #[error("target has a non-finite value in row {0}")]
    NonFiniteTarget(usize),
    #[error("model expects feature {0}, which the input lacks")]
    MissingFeature(String),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {need} features, got {got}")]
    TooFewFeatures { need: usize, got: usize },
    #[error("need more rows ({rows}) than features ({features})")]
    TooFewRows { rows: usize, features: usize },
    #[error("all targets are equal; cannot rescale")]
    DegenerateRange,
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparams(String),
    #[error("{n} rows cannot fill {k} folds of at least 2 rows")]
    FoldTooSmall { n: usize, k: usize },
    #[error("grid is empty")]
    EmptyGrid,
    #[error("empty input")]
    EmptyInput,
    #[error("rows have unequal length")]
    Ragged,
}

/// Row-major design matrix with named columns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    names: Vec<String>,
    n_rows: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn from_rows(names: Vec<String>, rows: &[Vec<f64>]) -> Result<Self, ModelError> {
        let p = names.len();
        if rows.iter().any(|r| r.len() != p) {
            return Err(ModelError::Ragged);
        }
        Ok(Self { names, n_rows: rows.len(), data: rows.concat() })
    }

    /// One row per feature vector, columns in canonical feature order.
    pub fn from_feature_vectors(vectors: &[&FeatureVector]) -> Self {
        Self {
            names: Feature::ALL.iter().map(|f| f.name().to_string()).collect(),
            n_rows: vectors.len(),
            data: vectors.iter().flat_map(|v| v.proportions).collect(),
        }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.names.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.n_cols();
        &self.data[i * p..(i + 1) * p]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.n_rows).map(|i| self.row(i))
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let p = self.n_cols();
        self.data[i * p + j] = v;
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            names: self.names.clone(),
            n_rows: rows.len(),
            data: rows.iter().flat_map(|&i| self.row(i).iter().copied()).collect(),
        }
    }

    /// Keeps the named columns, in the order given.
    pub fn select_columns(&self, names: &[String]) -> Result<Self, ModelError> {
        let idx = names
            .iter()
            .map(|n| self.column_index(n).ok_or_else(|| ModelError::MissingFeature(n.clone())))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            names: names.to_vec(),
            n_rows: self.n_rows,
            data: self.rows().flat_map(|r| idx.iter().map(move |&j| r[j])).collect(),
        })
    }
}

/// Raw per-class segmentation proportions keyed by class name.
pub type RawSegmentation = BTreeMap<String, f64>;

/// Vehicle subclasses that collapse into `road_transport`.
pub const VEHICLE_CLASSES: [&str; 6] = ["car", "truck", "bus", "train", "motorcycle", "bicycle"];

/// Sums the vehicle subclasses into `road_transport` and passes the other
/// canonical classes through. Missing classes count as 0.
pub fn consolidate_transport(image_id: &str, raw: &RawSegmentation) -> FeatureVector {
    let mut proportions = [0.0; Feature::COUNT];
    for f in Feature::ALL {
        proportions[f.index()] = raw.get(f.name()).copied().unwrap_or(0.0);
    }
    proportions[Feature::RoadTransport.index()] +=
        VEHICLE_CLASSES.iter().filter_map(|c| raw.get(*c)).sum::<f64>();
    FeatureVector { image_id: image_id.to_string(), proportions }
}

/// Linear min-max map of observed targets onto `[-1, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetScaler {
    pub observed_min: f64,
    pub observed_max: f64,
}

impl TargetScaler {
    pub fn fit(targets: &[f64]) -> Result<Self, ModelError> {
        if targets.is_empty() {
            return Err(ModelError::EmptyInput);
        }
        let lo = targets.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = targets.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(ModelError::DegenerateRange);
        }
        Ok(Self { observed_min: lo, observed_max: hi })
    }

    /// Maps into `[-1, 1]`, clamping values outside the observed range.
    pub fn apply(&self, value: f64) -> f64 {
        (2.0 * (value - self.observed_min) / (self.observed_max - self.observed_min) - 1.0).clamp(-1.0, 1.0)
    }

    pub fn inverse(&self, scaled: f64) -> f64 {
        self.observed_min + (scaled + 1.0) * 0.5 * (self.observed_max - self.observed_min)
    }
}

pub fn fit_scaler(targets: &[f64]) -> Result<TargetScaler, ModelError> {
    TargetScaler::fit(targets)
}

pub fn apply_scaler(scaler: &TargetScaler, value: f64) -> f64 {
    scaler.apply(value)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mae: f64,
    pub mse: f64,
}

pub fn metrics(predictions: &[f64], truth: &[f64]) -> Result<Metrics, ModelError> {
    if predictions.len() != truth.len() {
        return Err(ModelError::LengthMismatch(predictions.len(), truth.len()));
    }
    if predictions.is_empty() {
        return Err(ModelError::EmptyInput);
    }
    let n = predictions.len() as f64;
    let (mut abs, mut sq) = (0.0, 0.0);
    for (p, t) in predictions.iter().zip(truth) {
        let e = p - t;
        abs += e.abs();
        sq += e * e;
    }
    Ok(Metrics { mae: abs / n, mse: sq / n })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn consolidates_vehicle_subclasses() {
        let raw: RawSegmentation = [("car", 0.02), ("bus", 0.01), ("road", 0.4)]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        let fv = consolidate_transport("x", &raw);
        assert!((fv.get(Feature::RoadTransport) - 0.03).abs() < 1e-15);
        assert_eq!(fv.get(Feature::Road), 0.4);

        let none = consolidate_transport("y", &RawSegmentation::new());
        assert_eq!(none.get(Feature::RoadTransport), 0.0);

        let all: RawSegmentation = VEHICLE_CLASSES
            .iter()
            .zip([0.01, 0.02, 0.03, 0.004, 0.005, 0.006])
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        // 0.01 + 0.02 + 0.03 + 0.004 + 0.005 + 0.006
        assert!((consolidate_transport("z", &all).get(Feature::RoadTransport) - 0.075).abs() < 1e-15);
    }

    #[test]
    fn scaler_endpoints_and_midpoint() {
        let s = fit_scaler(&[-2.0, 0.0, 6.0]).unwrap();
        assert_eq!(apply_scaler(&s, -2.0), -1.0);
        assert_eq!(apply_scaler(&s, 6.0), 1.0);
        assert_eq!(apply_scaler(&s, 2.0), 0.0);
        assert_eq!(apply_scaler(&s, 0.0), -0.5);
        assert_eq!(apply_scaler(&s, 100.0), 1.0);
        assert_eq!(apply_scaler(&s, -100.0), -1.0);
        assert_eq!(fit_scaler(&[3.0, 3.0]), Err(ModelError::DegenerateRange));
    }

    #[test]
    fn metrics_examples() {
        let t = [0.1, -0.4, 0.9];
        assert_eq!(metrics(&t, &t).unwrap(), Metrics { mae: 0.0, mse: 0.0 });
        let off: Vec<f64> = [0.0, 1.0, -1.0].iter().map(|v| v + 0.5).collect();
        let m = metrics(&off, &[0.0, 1.0, -1.0]).unwrap();
        assert!((m.mae - 0.5).abs() < 1e-15 && (m.mse - 0.25).abs() < 1e-15);
        // errors 1, -2, 0.5: mae 3.5/3, mse 5.25/3
        let m = metrics(&[1.0, 0.0, 2.5], &[0.0, 2.0, 2.0]).unwrap();
        assert!((m.mae - 3.5 / 3.0).abs() < 1e-15);
        assert!((m.mse - 1.75).abs() < 1e-15);
        assert_eq!(metrics(&[1.0], &[]), Err(ModelError::LengthMismatch(1, 0)));
    }

    #[test]
    fn select_columns_reorders() {
        let m = FeatureMatrix::from_rows(
            vec!["a".into(), "b".into(), "c".into()],
            &[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]],
        )
        .unwrap();
        let s = m.select_columns(&["c".into(), "a".into()]).unwrap();
        assert_eq!(s.row(1), &[6.0, 4.0]);
        assert!(m.select_columns(&["zz".into()]).is_err());
        assert_eq!(m.select_rows(&[1]).row(0), &[4.0, 5.0, 6.0]);
    }

    proptest::proptest! {
        #[test]
        fn scaler_inverse_round_trips(lo in -50.0f64..50.0, span in 1e-3f64..100.0, t in 0.0f64..=1.0) {
            let s = TargetScaler { observed_min: lo, observed_max: lo + span };
            let v = lo + t * span;
            proptest::prop_assert!((s.inverse(s.apply(v)) - v).abs() <= 1e-12 * (1.0 + v.abs() + span));
        }
    }
}
