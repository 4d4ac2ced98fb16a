//! Rater standardization, per-image targets, inter-rater reliability and
//! the luminosity confound check.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::RatingRecord;
use crate::stats::{self, StatsError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RatingsError {
    #[error("rater {rater_id} has {count} rating(s); at least 2 are needed")]
    RaterTooFewRatings { rater_id: String, count: usize },
    #[error("raters {0} and {1} share fewer than 2 images")]
    InsufficientOverlap(String, String),
    #[error("need at least 2 raters and 2 images, got {raters} and {images}")]
    TooFewRatersOrImages { raters: usize, images: usize },
    #[error("total-score variance is zero")]
    DegenerateVariance,
    #[error("image has no pixels")]
    EmptyImage,
    #[error("cannot decode image {path}: {message}")]
    Decode { path: String, message: String },
    #[error(transparent)]
    Stats(#[from] StatsError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RaterProfile {
    pub rater_id: String,
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator).
    pub sd: f64,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StandardizedRating {
    pub rater_id: String,
    pub image_id: String,
    pub raw_score: i64,
    pub z: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageTarget {
    pub image_id: String,
    pub mean_z: f64,
    pub n_ratings: usize,
}

/// Z-scores each rater's scores against that rater's own mean and sample sd.
/// A rater with zero spread gets all-zero z-scores. Output keeps input order.
pub fn standardize(
    ratings: &[RatingRecord],
) -> Result<(Vec<RaterProfile>, Vec<StandardizedRating>), RatingsError> {
    let mut by_rater: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for r in ratings {
        by_rater.entry(r.rater_id.as_str()).or_default().push(r.raw_score as f64);
    }
    let profiles: Vec<RaterProfile> = by_rater
        .into_par_iter()
        .map(|(rater_id, scores)| {
            let n = scores.len();
            if n < 2 {
                return Err(RatingsError::RaterTooFewRatings { rater_id: rater_id.to_string(), count: n });
            }
            let mean = scores.iter().sum::<f64>() / n as f64;
            let ss: f64 = scores.iter().map(|s| (s - mean) * (s - mean)).sum();
            Ok(RaterProfile { rater_id: rater_id.to_string(), mean, sd: (ss / (n - 1) as f64).sqrt(), count: n })
        })
        .collect::<Result<_, _>>()?;
    let lookup: BTreeMap<&str, &RaterProfile> = profiles.iter().map(|p| (p.rater_id.as_str(), p)).collect();
    let standardized = ratings
        .iter()
        .map(|r| {
            let p = lookup[r.rater_id.as_str()];
            let z = if p.sd > 0.0 { (r.raw_score as f64 - p.mean) / p.sd } else { 0.0 };
            StandardizedRating { rater_id: r.rater_id.clone(), image_id: r.image_id.clone(), raw_score: r.raw_score, z }
        })
        .collect();
    Ok((profiles, standardized))
}

fn mean_by_image<'a>(items: impl Iterator<Item = (&'a str, f64)>) -> Vec<(String, f64, usize)> {
    let mut groups: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for (id, v) in items {
        groups.entry(id).or_default().push(v);
    }
    groups
        .into_iter()
        .map(|(id, mut vs)| {
            // sorted summation makes the mean independent of rating order
            vs.sort_by(f64::total_cmp);
            let n = vs.len();
            (id.to_string(), vs.iter().sum::<f64>() / n as f64, n)
        })
        .collect()
}

/// Mean z-score per image, sorted by image id.
pub fn image_targets(standardized: &[StandardizedRating]) -> Vec<ImageTarget> {
    mean_by_image(standardized.iter().map(|s| (s.image_id.as_str(), s.z)))
        .into_iter()
        .map(|(image_id, mean_z, n_ratings)| ImageTarget { image_id, mean_z, n_ratings })
        .collect()
}

/// Mean raw score per image, sorted by image id.
pub fn raw_image_means(ratings: &[RatingRecord]) -> Vec<(String, f64)> {
    mean_by_image(ratings.iter().map(|r| (r.image_id.as_str(), r.raw_score as f64)))
        .into_iter()
        .map(|(id, m, _)| (id, m))
        .collect()
}

/// Raters (items) by images (subjects), with missing cells.
#[derive(Clone, Debug, PartialEq)]
pub struct RatingMatrix {
    pub rater_ids: Vec<String>,
    pub image_ids: Vec<String>,
    /// `cells[rater][image]`
    pub cells: Vec<Vec<Option<f64>>>,
}

impl RatingMatrix {
    pub fn from_ratings(ratings: &[RatingRecord]) -> Self {
        let mut raters: Vec<String> = ratings.iter().map(|r| r.rater_id.clone()).collect();
        raters.sort();
        raters.dedup();
        let mut images: Vec<String> = ratings.iter().map(|r| r.image_id.clone()).collect();
        images.sort();
        images.dedup();
        let ri: BTreeMap<&str, usize> = raters.iter().enumerate().map(|(i, r)| (r.as_str(), i)).collect();
        let ii: BTreeMap<&str, usize> = images.iter().enumerate().map(|(i, r)| (r.as_str(), i)).collect();
        let mut cells = vec![vec![None; images.len()]; raters.len()];
        for r in ratings {
            cells[ri[r.rater_id.as_str()]][ii[r.image_id.as_str()]] = Some(r.raw_score as f64);
        }
        Self { rater_ids: raters, image_ids: images, cells }
    }

    /// Complete matrix from dense rows, one row per rater.
    pub fn from_dense(rows: &[Vec<f64>]) -> Self {
        let n_images = rows.first().map_or(0, Vec::len);
        Self {
            rater_ids: (0..rows.len()).map(|i| format!("r{i}")).collect(),
            image_ids: (0..n_images).map(|i| format!("i{i}")).collect(),
            cells: rows.iter().map(|r| r.iter().copied().map(Some).collect()).collect(),
        }
    }
}

/// Sample covariance of two raters over the images both of them scored.
fn pairwise_cov(a: &[Option<f64>], b: &[Option<f64>]) -> Option<f64> {
    let pairs: Vec<(f64, f64)> = a.iter().zip(b).filter_map(|(x, y)| Some(((*x)?, (*y)?))).collect();
    if pairs.len() < 2 {
        return None;
    }
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    Some(pairs.iter().map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / (n - 1.0))
}

/// Cronbach's alpha with raters as items. Item variances use every score a
/// rater gave; each covariance uses the images the two raters share
/// (pairwise deletion).
pub fn cronbach_alpha(matrix: &RatingMatrix) -> Result<f64, RatingsError> {
    let k = matrix.cells.len();
    let n_images = matrix.image_ids.len();
    if k < 2 || n_images < 2 {
        return Err(RatingsError::TooFewRatersOrImages { raters: k, images: n_images });
    }
    let mut item_var_sum = 0.0;
    let mut cov_sum = 0.0;
    for i in 0..k {
        let var = pairwise_cov(&matrix.cells[i], &matrix.cells[i]).ok_or_else(|| {
            RatingsError::InsufficientOverlap(matrix.rater_ids[i].clone(), matrix.rater_ids[i].clone())
        })?;
        item_var_sum += var;
        for j in i + 1..k {
            cov_sum += pairwise_cov(&matrix.cells[i], &matrix.cells[j]).ok_or_else(|| {
                RatingsError::InsufficientOverlap(matrix.rater_ids[i].clone(), matrix.rater_ids[j].clone())
            })?;
        }
    }
    let total_var = item_var_sum + 2.0 * cov_sum;
    if total_var.abs() <= 1e-12 * item_var_sum.abs().max(f64::MIN_POSITIVE) {
        return Err(RatingsError::DegenerateVariance);
    }
    let kf = k as f64;
    Ok(kf / (kf - 1.0) * (1.0 - item_var_sum / total_var))
}

/// Relative luminance weights for linear R, G, B.
pub const LUMA_WEIGHTS: [f64; 3] = [0.2126, 0.7152, 0.0722];

/// Mean per-pixel luminance of an RGB image with channels in `[0, 255]`.
pub fn luminosity(pixels: &[[u8; 3]]) -> Result<f64, RatingsError> {
    if pixels.is_empty() {
        return Err(RatingsError::EmptyImage);
    }
    let total: f64 = pixels
        .iter()
        .map(|p| LUMA_WEIGHTS[0] * p[0] as f64 + LUMA_WEIGHTS[1] * p[1] as f64 + LUMA_WEIGHTS[2] * p[2] as f64)
        .sum();
    Ok(total / pixels.len() as f64)
}

/// Decodes a PNG or PPM file into RGB pixels.
pub fn load_rgb(path: &Path) -> Result<Vec<[u8; 3]>, RatingsError> {
    let img = image::open(path)
        .map_err(|e| RatingsError::Decode { path: path.display().to_string(), message: e.to_string() })?;
    Ok(img.to_rgb8().pixels().map(|p| p.0).collect())
}

/// Pearson correlation between image luminosities and mean raw ratings.
pub fn luminosity_rating_correlation(luminosities: &[f64], mean_ratings: &[f64]) -> Result<f64, RatingsError> {
    Ok(stats::pearson_r(luminosities, mean_ratings)?)
}
