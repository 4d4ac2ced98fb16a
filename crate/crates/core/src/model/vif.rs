//! Variance inflation factors and iterative collinearity screening.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{FeatureMatrix, ModelError};

pub const DEFAULT_VIF_THRESHOLD: f64 = 10.0;

/// `1 - R²` at or below this is treated as exact collinearity.
const COLLINEAR_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VifEntry {
    pub feature: String,
    pub vif: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VifReport {
    pub threshold: f64,
    /// VIFs of all input features before any removal, sorted by name.
    pub initial: Vec<VifEntry>,
    /// VIFs of the retained features after the last removal, sorted by name.
    pub retained: Vec<VifEntry>,
    /// Removed features in removal order, with their VIF when removed.
    pub removed: Vec<VifEntry>,
}

impl VifReport {
    pub fn retained_names(&self) -> Vec<String> {
        self.retained.iter().map(|e| e.feature.clone()).collect()
    }
}

/// Centers the columns of `m` selected by `cols` into an n x |cols| matrix.
fn centered(m: &FeatureMatrix, cols: &[usize]) -> DMatrix<f64> {
    let n = m.n_rows();
    let mut out = DMatrix::zeros(n, cols.len());
    for (k, &j) in cols.iter().enumerate() {
        let col = m.column(j);
        let mean = col.iter().sum::<f64>() / n as f64;
        for (i, v) in col.into_iter().enumerate() {
            out[(i, k)] = v - mean;
        }
    }
    out
}

/// VIF of every listed column against the other listed columns, by
/// least squares with an intercept. Exact collinearity yields `+inf`.
fn vifs_for(m: &FeatureMatrix, cols: &[usize]) -> Vec<f64> {
    if cols.len() == 1 {
        let c = centered(m, cols);
        return vec![if c.norm_squared() == 0.0 { f64::INFINITY } else { 1.0 }];
    }
    let all = centered(m, cols);
    (0..cols.len())
        .map(|k| {
            let y: DVector<f64> = all.column(k).into_owned();
            let ss_tot = y.norm_squared();
            if ss_tot == 0.0 {
                return f64::INFINITY;
            }
            let others: Vec<usize> = (0..cols.len()).filter(|&o| o != k).collect();
            let x = all.select_columns(&others);
            let svd = x.clone().svd(true, true);
            let s_max = svd.singular_values.max();
            let beta = match svd.solve(&y, s_max * 1e-12) {
                Ok(b) => b,
                Err(_) => return f64::INFINITY,
            };
            let ss_res = (y - x * beta).norm_squared();
            let unexplained = ss_res / ss_tot;
            if unexplained <= COLLINEAR_TOLERANCE {
                f64::INFINITY
            } else {
                1.0 / unexplained
            }
        })
        .collect()
}

/// VIF of every column, in column order.
pub fn variance_inflation_factors(m: &FeatureMatrix) -> Vec<f64> {
    vifs_for(m, &(0..m.n_cols()).collect::<Vec<_>>())
}

/// Repeatedly drops the feature with the largest VIF until every remaining
/// VIF is at most `threshold`. Columns are processed in name order, and a
/// tie on the largest VIF removes the name that sorts last.
pub fn vif_filter(m: &FeatureMatrix, threshold: f64) -> Result<VifReport, ModelError> {
    let p = m.n_cols();
    if p < 2 {
        return Err(ModelError::TooFewFeatures { need: 2, got: p });
    }
    if m.n_rows() <= p {
        return Err(ModelError::TooFewRows { rows: m.n_rows(), features: p });
    }
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| m.names()[a].cmp(&m.names()[b]));
    let entries = |cols: &[usize], vifs: &[f64]| -> Vec<VifEntry> {
        cols.iter()
            .zip(vifs)
            .map(|(&j, &vif)| VifEntry { feature: m.names()[j].clone(), vif })
            .collect()
    };

    let mut active = order;
    let mut vifs = vifs_for(m, &active);
    let initial = entries(&active, &vifs);
    let mut removed = Vec::new();
    while active.len() > 1 {
        // last maximal entry in name order
        let (worst, &max) = vifs
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1).then(a.0.cmp(&b.0)))
            .expect("non-empty");
        if max <= threshold {
            break;
        }
        removed.push(VifEntry { feature: m.names()[active[worst]].clone(), vif: max });
        active.remove(worst);
        vifs = vifs_for(m, &active);
    }
    Ok(VifReport { threshold, initial, retained: entries(&active, &vifs), removed })
}
