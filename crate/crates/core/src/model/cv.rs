//! K-fold grid search over boosting hyperparameters.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{metrics, train_gbt, FeatureMatrix, Hyperparams, ModelError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvCell {
    pub params: Hyperparams,
    pub fold_mae: Vec<f64>,
    pub mean_mae: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub best: Hyperparams,
    pub cells: Vec<CvCell>,
}

/// Fold index of each row: a seeded shuffle cut into `k` contiguous blocks
/// whose sizes differ by at most one.
pub fn kfold_assignments(n: usize, k: usize, seed: u64) -> Result<Vec<usize>, ModelError> {
    if k < 2 || n < 2 * k {
        return Err(ModelError::FoldTooSmall { n, k });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold = vec![0; n];
    let (base, extra) = (n / k, n % k);
    let mut pos = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        for &i in &order[pos..pos + size] {
            fold[i] = f;
        }
        pos += size;
    }
    Ok(fold)
}

/// Two mean MAEs this close count as tied.
const TIE_TOLERANCE: f64 = 1e-12;

/// Scores every grid cell by mean validation MAE over `k` folds. Ties go to
/// the smaller `(iterations, depth)`.
pub fn grid_search_cv(
    x: &FeatureMatrix,
    y: &[f64],
    grid: &[Hyperparams],
    k: usize,
    seed: u64,
) -> Result<GridSearchResult, ModelError> {
    if grid.is_empty() {
        return Err(ModelError::EmptyGrid);
    }
    if y.len() != x.n_rows() {
        return Err(ModelError::LengthMismatch(x.n_rows(), y.len()));
    }
    let fold = kfold_assignments(x.n_rows(), k, seed)?;
    let splits: Vec<(Vec<usize>, Vec<usize>)> = (0..k)
        .map(|f| (0..fold.len()).partition(|&i| fold[i] != f))
        .collect();

    let cells = grid
        .par_iter()
        .map(|params| {
            let fold_mae = splits
                .iter()
                .map(|(train, valid)| {
                    let ty: Vec<f64> = train.iter().map(|&i| y[i]).collect();
                    let model = train_gbt(&x.select_rows(train), &ty, params, seed)?;
                    let pred = model.predict_matrix(&x.select_rows(valid))?;
                    let vy: Vec<f64> = valid.iter().map(|&i| y[i]).collect();
                    Ok(metrics(&pred, &vy)?.mae)
                })
                .collect::<Result<Vec<f64>, ModelError>>()?;
            let mean_mae = fold_mae.iter().sum::<f64>() / k as f64;
            Ok(CvCell { params: *params, fold_mae, mean_mae })
        })
        .collect::<Result<Vec<_>, ModelError>>()?;

    let min = cells.iter().map(|c| c.mean_mae).fold(f64::INFINITY, f64::min);
    let best = cells
        .iter()
        .filter(|c| c.mean_mae <= min + TIE_TOLERANCE)
        .min_by_key(|c| (c.params.iterations, c.params.depth))
        .expect("grid is non-empty")
        .params;
    Ok(GridSearchResult { best, cells })
}
