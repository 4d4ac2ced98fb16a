//! Buffer-averaged predictions at participatory mapping points and their
//! agreement with the citywide prediction distribution.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{Label, PpgisPoint};
use crate::geo::PointIndex;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AlignmentError {
    #[error("prediction spread is zero")]
    DegenerateSigma,
    #[error("empty input")]
    EmptyInput,
    #[error("no scores for label {0}")]
    EmptyLabel(&'static str),
    #[error("{predictions} predictions for {images} indexed images")]
    LengthMismatch { predictions: usize, images: usize },
}

pub const DEFAULT_BUFFER_RADIUS: f64 = 50.0;
pub const DEFAULT_MIN_IMAGES: usize = 5;

/// Mean and sample standard deviation of every prediction in the study area.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionDistribution {
    pub mu: f64,
    pub sigma: f64,
    pub n: usize,
}

impl PredictionDistribution {
    pub fn from_predictions(predictions: &[f64]) -> Result<Self, AlignmentError> {
        let n = predictions.len();
        if n == 0 {
            return Err(AlignmentError::EmptyInput);
        }
        let mu = predictions.iter().sum::<f64>() / n as f64;
        let sigma = if n > 1 {
            (predictions.iter().map(|p| (p - mu).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Ok(Self { mu, sigma, n })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointScore {
    pub point_id: String,
    pub label: Label,
    pub mean_pred: f64,
    pub n_images: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub point_id: String,
    pub label: Label,
    pub n_images: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BufferScores {
    pub scores: Vec<PointScore>,
    pub excluded: Vec<Exclusion>,
}

/// Averages the predictions of indexed images within `radius` of each point.
/// Points with fewer than `min_images` images are excluded, not dropped.
/// The mean is taken over values in sorted order so it does not depend on
/// image insertion order.
pub fn buffer_scores(
    points: &[PpgisPoint],
    index: &PointIndex,
    predictions: &[f64],
    radius: f64,
    min_images: usize,
) -> Result<BufferScores, AlignmentError> {
    if predictions.len() != index.len() {
        return Err(AlignmentError::LengthMismatch { predictions: predictions.len(), images: index.len() });
    }
    let per_point: Vec<(usize, Option<f64>)> = points
        .par_iter()
        .map(|p| {
            let mut vals: Vec<f64> = index.radius_query(&p.location, radius).into_iter().map(|i| predictions[i]).collect();
            let n = vals.len();
            if n < min_images.max(1) {
                return (n, None);
            }
            vals.sort_by(f64::total_cmp);
            (n, Some(vals.iter().sum::<f64>() / n as f64))
        })
        .collect();
    let mut out = BufferScores { scores: Vec::new(), excluded: Vec::new() };
    for (p, (n_images, mean)) in points.iter().zip(per_point) {
        match mean {
            Some(mean_pred) => out.scores.push(PointScore {
                point_id: p.point_id.clone(),
                label: p.label,
                mean_pred,
                n_images,
            }),
            None => out.excluded.push(Exclusion { point_id: p.point_id.clone(), label: p.label, n_images }),
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Classification {
    StrictAgree,
    ModerateAgree,
    Disagree,
}

impl Classification {
    pub fn name(self) -> &'static str {
        match self {
            Classification::StrictAgree => "strict_agree",
            Classification::ModerateAgree => "moderate_agree",
            Classification::Disagree => "disagree",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Self::StrictAgree, Self::ModerateAgree, Self::Disagree].into_iter().find(|c| c.name() == s)
    }

    /// Strict agreement counts as moderate agreement too.
    pub fn is_moderate(self) -> bool {
        self != Classification::Disagree
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgreementRecord {
    pub point_id: String,
    pub label: Label,
    pub mean_pred: f64,
    pub classification: Classification,
}

/// Attractive points agree strictly above `mu + sigma` and moderately above
/// `mu`; unattractive points mirror this below. Boundaries fall to the
/// weaker class.
pub fn classify_agreement(score: &PointScore, dist: &PredictionDistribution) -> Result<AgreementRecord, AlignmentError> {
    if !(dist.sigma > 0.0) {
        return Err(AlignmentError::DegenerateSigma);
    }
    let (mu, s, v) = (dist.mu, dist.sigma, score.mean_pred);
    let classification = match score.label {
        Label::Attractive if v > mu + s => Classification::StrictAgree,
        Label::Attractive if v > mu => Classification::ModerateAgree,
        Label::Unattractive if v < mu - s => Classification::StrictAgree,
        Label::Unattractive if v < mu => Classification::ModerateAgree,
        _ => Classification::Disagree,
    };
    Ok(AgreementRecord { point_id: score.point_id.clone(), label: score.label, mean_pred: v, classification })
}

pub fn classify_all(scores: &[PointScore], dist: &PredictionDistribution) -> Result<Vec<AgreementRecord>, AlignmentError> {
    scores.iter().map(|s| classify_agreement(s, dist)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelSummary {
    pub label: Label,
    pub n: usize,
    pub strict_rate: f64,
    /// Includes strict agreement.
    pub moderate_rate: f64,
}

/// Per-label agreement rates; labels without records are omitted.
pub fn agreement_summary(records: &[AgreementRecord]) -> Result<Vec<LabelSummary>, AlignmentError> {
    if records.is_empty() {
        return Err(AlignmentError::EmptyInput);
    }
    Ok(Label::ALL
        .into_iter()
        .filter_map(|label| {
            let rs: Vec<_> = records.iter().filter(|r| r.label == label).collect();
            let n = rs.len();
            (n > 0).then(|| {
                let strict = rs.iter().filter(|r| r.classification == Classification::StrictAgree).count();
                let moderate = rs.iter().filter(|r| r.classification.is_moderate()).count();
                LabelSummary { label, n, strict_rate: strict as f64 / n as f64, moderate_rate: moderate as f64 / n as f64 }
            })
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Descriptive {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation; 0 for a single value.
    pub sd: f64,
    pub min: f64,
    /// Lower middle value for even counts.
    pub median: f64,
    pub max: f64,
}

pub fn describe(values: &[f64]) -> Result<Descriptive, AlignmentError> {
    if values.is_empty() {
        return Err(AlignmentError::EmptyInput);
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let mean = v.iter().sum::<f64>() / n as f64;
    let sd = if n > 1 { (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt() } else { 0.0 };
    Ok(Descriptive { n, mean, sd, min: v[0], median: v[(n - 1) / 2], max: v[n - 1] })
}

/// Descriptive statistics of buffer means per label.
pub fn score_distributions(scores: &[PointScore]) -> Result<BTreeMap<Label, Descriptive>, AlignmentError> {
    Label::ALL
        .into_iter()
        .map(|label| {
            let v: Vec<f64> = scores.iter().filter(|s| s.label == label).map(|s| s.mean_pred).collect();
            if v.is_empty() {
                return Err(AlignmentError::EmptyLabel(label.name()));
            }
            Ok((label, describe(&v)?))
        })
        .collect()
}
