//! Shared data model and ingest validation.
//!
//! Every table is plain data; [`validate_dataset`] checks the cross-table
//! invariants and [`Dataset::validate`] is the only way to obtain a
//! [`ValidatedDataset`], which the pipeline stages require.

pub mod grid;
pub mod io;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

pub use grid::{GridLayer, LayerSemantic};

/// Lowest and highest admissible raw rating.
pub const MIN_SCORE: i64 = 1;
pub const MAX_SCORE: i64 = 7;

/// Slack allowed on the sum of a feature vector's proportions.
pub const PROPORTION_SUM_TOLERANCE: f64 = 1e-6;

/// A location in a projected, metric coordinate system.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn distance_squared(&self, other: &Point2) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    pub fn distance(&self, other: &Point2) -> f64 {
        self.distance_squared(other).sqrt()
    }
}

/// The eight canonical segmentation classes used as model features.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    Road,
    Sidewalk,
    Building,
    Vegetation,
    Terrain,
    Sky,
    Person,
    RoadTransport,
}

impl Feature {
    pub const COUNT: usize = 8;

    pub const ALL: [Feature; Feature::COUNT] = [
        Feature::Road,
        Feature::Sidewalk,
        Feature::Building,
        Feature::Vegetation,
        Feature::Terrain,
        Feature::Sky,
        Feature::Person,
        Feature::RoadTransport,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Feature::Road => "road",
            Feature::Sidewalk => "sidewalk",
            Feature::Building => "building",
            Feature::Vegetation => "vegetation",
            Feature::Terrain => "terrain",
            Feature::Sky => "sky",
            Feature::Person => "person",
            Feature::RoadTransport => "road_transport",
        }
    }

    pub fn from_name(name: &str) -> Option<Feature> {
        Feature::ALL.into_iter().find(|f| f.name() == name)
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingRecord {
    pub rater_id: String,
    pub image_id: String,
    pub raw_score: i64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub image_id: String,
    pub location: Point2,
    pub capture_year: i32,
    pub capture_month: u32,
}

/// Per-image proportions of the canonical classes, indexed by [`Feature::index`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub image_id: String,
    pub proportions: [f64; Feature::COUNT],
}

impl FeatureVector {
    pub fn get(&self, feature: Feature) -> f64 {
        self.proportions[feature.index()]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Attractive,
    Unattractive,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::Attractive, Label::Unattractive];

    pub fn name(self) -> &'static str {
        match self {
            Label::Attractive => "attractive",
            Label::Unattractive => "unattractive",
        }
    }

    pub fn parse(s: &str) -> Option<Label> {
        match s.trim().to_ascii_lowercase().as_str() {
            "attractive" => Some(Label::Attractive),
            "unattractive" => Some(Label::Unattractive),
            _ => None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PpgisPoint {
    pub point_id: String,
    pub location: Point2,
    pub label: Label,
    pub comment: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StreetSegment {
    pub segment_id: String,
    pub geometry: Vec<Point2>,
    /// Vehicles per day.
    pub traffic_volume: f64,
    /// km/h.
    pub speed_limit: f64,
}

impl StreetSegment {
    /// Euclidean distance from `p` to the nearest point of the polyline.
    pub fn distance_to(&self, p: &Point2) -> f64 {
        match self.geometry.as_slice() {
            [] => f64::INFINITY,
            [only] => only.distance(p),
            pts => pts
                .windows(2)
                .map(|w| point_segment_distance(p, &w[0], &w[1]))
                .fold(f64::INFINITY, f64::min),
        }
    }
}

pub(crate) fn point_segment_distance(p: &Point2, a: &Point2, b: &Point2) -> f64 {
    let (vx, vy) = (b.x - a.x, b.y - a.y);
    let len2 = vx * vx + vy * vy;
    if len2 == 0.0 {
        return p.distance(a);
    }
    let t = (((p.x - a.x) * vx + (p.y - a.y) * vy) / len2).clamp(0.0, 1.0);
    p.distance(&Point2::new(a.x + t * vx, a.y + t * vy))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SegmentAttributeSet {
    pub segments: Vec<StreetSegment>,
}

impl SegmentAttributeSet {
    /// Checks geometry and attribute invariants, returning one issue per bad segment.
    pub fn validate(&self) -> Vec<Issue> {
        let mut issues = Vec::new();
        for (row, s) in self.segments.iter().enumerate() {
            if s.geometry.len() < 2 || s.geometry.iter().any(|p| !p.is_finite()) {
                issues.push(Issue::error(
                    IssueKind::MalformedGeometry,
                    Some(row),
                    format!("segment {} needs at least two finite vertices", s.segment_id),
                ));
            }
            if !(s.traffic_volume >= 0.0 && s.traffic_volume.is_finite()) {
                issues.push(Issue::error(
                    IssueKind::InvalidAttribute,
                    Some(row),
                    format!("segment {} has traffic volume {}", s.segment_id, s.traffic_volume),
                ));
            }
            if !(s.speed_limit > 0.0 && s.speed_limit.is_finite()) {
                issues.push(Issue::error(
                    IssueKind::InvalidAttribute,
                    Some(row),
                    format!("segment {} has speed limit {}", s.segment_id, s.speed_limit),
                ));
            }
        }
        issues
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IssueKind {
    MissingForeignKey,
    OutOfRangeScore,
    MalformedGeometry,
    DuplicateRating,
    DuplicateId,
    InvalidMonth,
    InvalidProportion,
    InvalidAttribute,
    Unreferenced,
}

impl IssueKind {
    pub fn name(self) -> &'static str {
        match self {
            IssueKind::MissingForeignKey => "missing_foreign_key",
            IssueKind::OutOfRangeScore => "out_of_range_score",
            IssueKind::MalformedGeometry => "malformed_geometry",
            IssueKind::DuplicateRating => "duplicate_rating",
            IssueKind::DuplicateId => "duplicate_id",
            IssueKind::InvalidMonth => "invalid_month",
            IssueKind::InvalidProportion => "invalid_proportion",
            IssueKind::InvalidAttribute => "invalid_attribute",
            IssueKind::Unreferenced => "unreferenced",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Issue {
    pub severity: Severity,
    pub kind: IssueKind,
    /// Zero-based data row, when the issue concerns a single row.
    pub row: Option<usize>,
    pub message: String,
}

impl Issue {
    pub fn error(kind: IssueKind, row: Option<usize>, message: impl Into<String>) -> Self {
        Self { severity: Severity::Error, kind, row, message: message.into() }
    }

    pub fn warning(kind: IssueKind, row: Option<usize>, message: impl Into<String>) -> Self {
        Self { severity: Severity::Warning, kind, row, message: message.into() }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub ratings: Vec<Issue>,
    pub images: Vec<Issue>,
    pub features: Vec<Issue>,
    pub ppgis: Vec<Issue>,
}

impl ValidationReport {
    pub fn tables(&self) -> [(&'static str, &[Issue]); 4] {
        [
            ("ratings", &self.ratings),
            ("images", &self.images),
            ("features", &self.features),
            ("ppgis", &self.ppgis),
        ]
    }

    pub fn errors(&self) -> impl Iterator<Item = (&'static str, &Issue)> {
        self.all().filter(|(_, i)| i.severity == Severity::Error)
    }

    pub fn all(&self) -> impl Iterator<Item = (&'static str, &Issue)> {
        self.tables()
            .into_iter()
            .flat_map(|(name, issues)| issues.iter().map(move |i| (name, i)))
    }

    pub fn passes(&self) -> bool {
        self.errors().next().is_none()
    }
}

/// Checks every table invariant plus referential integrity between tables.
pub fn validate_dataset(
    ratings: &[RatingRecord],
    images: &[ImageRecord],
    features: &[FeatureVector],
    ppgis: &[PpgisPoint],
) -> ValidationReport {
    let mut report = ValidationReport::default();

    let mut image_ids = BTreeSet::new();
    for (row, img) in images.iter().enumerate() {
        if !image_ids.insert(img.image_id.as_str()) {
            report.images.push(Issue::error(
                IssueKind::DuplicateId,
                Some(row),
                format!("duplicate image_id {}", img.image_id),
            ));
        }
        if !img.location.is_finite() {
            report.images.push(Issue::error(
                IssueKind::MalformedGeometry,
                Some(row),
                format!("image {} has non-finite coordinates", img.image_id),
            ));
        }
        if !(1..=12).contains(&img.capture_month) {
            report.images.push(Issue::error(
                IssueKind::InvalidMonth,
                Some(row),
                format!("image {} has capture month {}", img.image_id, img.capture_month),
            ));
        }
    }

    let mut feature_ids = BTreeSet::new();
    for (row, fv) in features.iter().enumerate() {
        if !feature_ids.insert(fv.image_id.as_str()) {
            report.features.push(Issue::error(
                IssueKind::DuplicateId,
                Some(row),
                format!("duplicate feature vector for image {}", fv.image_id),
            ));
        }
        for feature in Feature::ALL {
            let v = fv.get(feature);
            if !(0.0..=1.0).contains(&v) {
                report.features.push(Issue::error(
                    IssueKind::InvalidProportion,
                    Some(row),
                    format!("image {}: {} = {} outside [0, 1]", fv.image_id, feature, v),
                ));
            }
        }
        let sum: f64 = fv.proportions.iter().sum();
        if sum > 1.0 + PROPORTION_SUM_TOLERANCE {
            report.features.push(Issue::error(
                IssueKind::InvalidProportion,
                Some(row),
                format!("image {}: proportions sum to {}", fv.image_id, sum),
            ));
        }
        if !image_ids.contains(fv.image_id.as_str()) {
            report.features.push(Issue::warning(
                IssueKind::Unreferenced,
                Some(row),
                format!("feature vector for unknown image {}", fv.image_id),
            ));
        }
    }

    let mut pairs = BTreeSet::new();
    let mut rated = BTreeSet::new();
    for (row, r) in ratings.iter().enumerate() {
        if !(MIN_SCORE..=MAX_SCORE).contains(&r.raw_score) {
            report.ratings.push(Issue::error(
                IssueKind::OutOfRangeScore,
                Some(row),
                format!(
                    "rater {} image {}: score {} outside [{MIN_SCORE}, {MAX_SCORE}]",
                    r.rater_id, r.image_id, r.raw_score
                ),
            ));
        }
        if !pairs.insert((r.rater_id.as_str(), r.image_id.as_str())) {
            report.ratings.push(Issue::error(
                IssueKind::DuplicateRating,
                Some(row),
                format!("rater {} rated image {} more than once", r.rater_id, r.image_id),
            ));
        }
        if !image_ids.contains(r.image_id.as_str()) {
            report.ratings.push(Issue::error(
                IssueKind::MissingForeignKey,
                Some(row),
                format!("rating references unknown image {}", r.image_id),
            ));
        }
        if !feature_ids.contains(r.image_id.as_str()) && rated.insert(r.image_id.as_str()) {
            report.ratings.push(Issue::error(
                IssueKind::MissingForeignKey,
                Some(row),
                format!("rated image {} has no feature vector", r.image_id),
            ));
        }
    }

    let rated: BTreeSet<&str> = ratings.iter().map(|r| r.image_id.as_str()).collect();
    for (row, img) in images.iter().enumerate() {
        if !rated.contains(img.image_id.as_str()) {
            report.images.push(Issue::warning(
                IssueKind::Unreferenced,
                Some(row),
                format!("image {} has no ratings", img.image_id),
            ));
        }
    }

    let mut point_ids = BTreeSet::new();
    for (row, p) in ppgis.iter().enumerate() {
        if !point_ids.insert(p.point_id.as_str()) {
            report.ppgis.push(Issue::error(
                IssueKind::DuplicateId,
                Some(row),
                format!("duplicate point_id {}", p.point_id),
            ));
        }
        if !p.location.is_finite() {
            report.ppgis.push(Issue::error(
                IssueKind::MalformedGeometry,
                Some(row),
                format!("point {} has non-finite coordinates", p.point_id),
            ));
        }
    }

    report
}

/// The four core tables of a study.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub ratings: Vec<RatingRecord>,
    pub images: Vec<ImageRecord>,
    pub features: Vec<FeatureVector>,
    pub ppgis: Vec<PpgisPoint>,
}

impl Dataset {
    pub fn report(&self) -> ValidationReport {
        validate_dataset(&self.ratings, &self.images, &self.features, &self.ppgis)
    }

    pub fn validate(self) -> Result<ValidatedDataset, Box<ValidationReport>> {
        let report = self.report();
        if report.passes() {
            Ok(ValidatedDataset { inner: self, report })
        } else {
            Err(Box::new(report))
        }
    }
}

/// A dataset that passed [`validate_dataset`]. Stages take this type so that
/// an invalid dataset can never reach them.
#[derive(Clone, Debug)]
pub struct ValidatedDataset {
    inner: Dataset,
    report: ValidationReport,
}

impl ValidatedDataset {
    pub fn dataset(&self) -> &Dataset {
        &self.inner
    }

    /// Warnings collected during validation.
    pub fn report(&self) -> &ValidationReport {
        &self.report
    }

    pub fn into_inner(self) -> Dataset {
        self.inner
    }

    pub fn image_index_by_id(&self) -> BTreeMap<&str, usize> {
        self.inner.images.iter().enumerate().map(|(i, img)| (img.image_id.as_str(), i)).collect()
    }
}

impl std::ops::Deref for ValidatedDataset {
    type Target = Dataset;

    fn deref(&self) -> &Dataset {
        &self.inner
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CoverageStats {
    pub per_image: BTreeMap<String, usize>,
    pub per_rater: BTreeMap<String, usize>,
    pub min_per_image: usize,
    pub mean_per_image: f64,
    pub min_per_rater: usize,
    pub mean_per_rater: f64,
}

/// Rating counts per image (every image in `images`, rated or not) and per rater.
pub fn coverage_summary(ratings: &[RatingRecord], images: &[ImageRecord]) -> CoverageStats {
    let mut per_image: BTreeMap<String, usize> =
        images.iter().map(|i| (i.image_id.clone(), 0)).collect();
    let mut per_rater: BTreeMap<String, usize> = BTreeMap::new();
    for r in ratings {
        *per_image.entry(r.image_id.clone()).or_default() += 1;
        *per_rater.entry(r.rater_id.clone()).or_default() += 1;
    }
    let min_mean = |m: &BTreeMap<String, usize>| {
        if m.is_empty() {
            (0, 0.0)
        } else {
            let total: usize = m.values().sum();
            (*m.values().min().unwrap_or(&0), total as f64 / m.len() as f64)
        }
    };
    let (min_per_image, mean_per_image) = min_mean(&per_image);
    let (min_per_rater, mean_per_rater) = min_mean(&per_rater);
    CoverageStats { per_image, per_rater, min_per_image, mean_per_image, min_per_rater, mean_per_rater }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn toy_dataset() -> Dataset {
        let images = (1..=3)
            .map(|i| ImageRecord {
                image_id: format!("img{i}"),
                location: Point2::new(10.0 * i as f64, 5.0),
                capture_year: 2021,
                capture_month: 6,
            })
            .collect();
        let features = (1..=3)
            .map(|i| {
                let mut p = [0.0; Feature::COUNT];
                p[Feature::Vegetation.index()] = 0.1 * i as f64;
                p[Feature::Road.index()] = 0.3;
                FeatureVector { image_id: format!("img{i}"), proportions: p }
            })
            .collect();
        let mut ratings = Vec::new();
        for rater in ["a", "b"] {
            for i in 1..=3 {
                ratings.push(RatingRecord {
                    rater_id: rater.into(),
                    image_id: format!("img{i}"),
                    raw_score: i + if rater == "b" { 2 } else { 0 },
                });
            }
        }
        let ppgis = vec![PpgisPoint {
            point_id: "p1".into(),
            location: Point2::new(0.0, 0.0),
            label: Label::Attractive,
            comment: None,
        }];
        Dataset { ratings, images, features, ppgis }
    }

    #[test]
    fn consistent_toy_dataset_has_no_issues() {
        let d = toy_dataset();
        let report = d.report();
        assert_eq!(report, ValidationReport::default());
        assert!(d.validate().is_ok());
    }

    #[test]
    fn score_out_of_range_is_an_error() {
        let mut d = toy_dataset();
        d.ratings[0].raw_score = 8;
        let report = d.report();
        assert!(!report.passes());
        assert_eq!(report.ratings.len(), 1);
        assert_eq!(report.ratings[0].kind, IssueKind::OutOfRangeScore);
        assert_eq!(report.ratings[0].row, Some(0));
    }

    #[test]
    fn unknown_image_is_missing_foreign_key() {
        let mut d = toy_dataset();
        d.ratings[1].image_id = "ghost".into();
        let report = d.report();
        assert!(report
            .ratings
            .iter()
            .any(|i| i.kind == IssueKind::MissingForeignKey && i.row == Some(1)));
    }

    #[test]
    fn rated_image_without_features_is_rejected() {
        let mut d = toy_dataset();
        d.features.pop();
        let report = d.report();
        assert!(!report.passes());
        assert!(report.ratings.iter().all(|i| i.kind == IssueKind::MissingForeignKey));
    }

    #[test]
    fn duplicate_rating_is_hard_error() {
        let mut d = toy_dataset();
        let dup = d.ratings[0].clone();
        d.ratings.push(dup);
        let report = d.report();
        assert_eq!(report.ratings.len(), 1);
        assert_eq!(report.ratings[0].kind, IssueKind::DuplicateRating);
    }

    #[test]
    fn bad_month_geometry_and_proportions() {
        let mut d = toy_dataset();
        d.images[0].capture_month = 13;
        d.images[1].location.x = f64::NAN;
        d.features[2].proportions[0] = 0.9;
        d.ppgis[0].location.y = f64::INFINITY;
        let r = d.report();
        assert!(r.images.iter().any(|i| i.kind == IssueKind::InvalidMonth));
        assert!(r.images.iter().any(|i| i.kind == IssueKind::MalformedGeometry));
        assert!(r.features.iter().any(|i| i.kind == IssueKind::InvalidProportion));
        assert!(r.ppgis.iter().any(|i| i.kind == IssueKind::MalformedGeometry));
    }

    #[test]
    fn validation_is_idempotent() {
        let d = toy_dataset();
        let v = d.clone().validate().unwrap();
        let again = v.into_inner().validate().unwrap();
        assert_eq!(again.report(), &d.report());
    }

    #[test]
    fn coverage_counts() {
        let d = toy_dataset();
        let c = coverage_summary(&d.ratings, &d.images);
        assert_eq!(c.min_per_image, 2);
        assert_eq!(c.mean_per_rater, 3.0);
        assert_eq!(c.per_rater["a"], 3);

        let empty = coverage_summary(&[], &[]);
        assert_eq!(empty.min_per_image, 0);
        assert_eq!(empty.mean_per_image, 0.0);
        assert_eq!(empty.min_per_rater, 0);
        assert_eq!(empty.mean_per_rater, 0.0);
    }

    #[test]
    fn uneven_coverage_matches_hand_tally() {
        let mut d = toy_dataset();
        // rater c only sees img1; img3 loses rater a
        d.ratings.push(RatingRecord { rater_id: "c".into(), image_id: "img1".into(), raw_score: 4 });
        d.ratings.retain(|r| !(r.rater_id == "a" && r.image_id == "img3"));
        let c = coverage_summary(&d.ratings, &d.images);
        assert_eq!(c.per_image["img1"], 3);
        assert_eq!(c.per_image["img2"], 2);
        assert_eq!(c.per_image["img3"], 1);
        assert_eq!(c.min_per_image, 1);
        assert!((c.mean_per_image - 2.0).abs() < 1e-12);
        assert_eq!(c.per_rater["a"], 2);
        assert_eq!(c.per_rater["c"], 1);
        assert_eq!(c.min_per_rater, 1);
        assert!((c.mean_per_rater - 2.0).abs() < 1e-12);
    }

    #[test]
    fn segment_distance_and_validation() {
        let s = StreetSegment {
            segment_id: "s".into(),
            geometry: vec![Point2::new(0.0, 0.0), Point2::new(10.0, 0.0), Point2::new(10.0, 10.0)],
            traffic_volume: 10.0,
            speed_limit: 30.0,
        };
        assert_eq!(s.distance_to(&Point2::new(5.0, 3.0)), 3.0);
        assert_eq!(s.distance_to(&Point2::new(13.0, 5.0)), 3.0);
        assert_eq!(s.distance_to(&Point2::new(-3.0, -4.0)), 5.0);
        let bad = SegmentAttributeSet {
            segments: vec![StreetSegment { geometry: vec![Point2::new(0.0, 0.0)], speed_limit: 0.0, ..s }],
        };
        assert_eq!(bad.validate().len(), 2);
    }
}
