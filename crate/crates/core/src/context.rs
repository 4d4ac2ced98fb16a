//! Non-visual covariates around each participatory mapping point.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::io::FormatError;
use crate::domain::{GridLayer, ImageRecord, LayerSemantic, Point2, SegmentAttributeSet};
use crate::geo::PointIndex;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ContextError {
    #[error("no valid cells within the buffer")]
    NoCoverage,
    #[error("no street segments within the buffer")]
    NoSegments,
    #[error("no images within the buffer")]
    NoImages,
    #[error("classes missing from the category map: {}", .0.join(", "))]
    UnmappedClass(Vec<String>),
    #[error("expected a {expected:?} layer, got {got:?}")]
    WrongSemantic { expected: LayerSemantic, got: LayerSemantic },
    #[error("no noise layers given")]
    NoLayers,
    #[error("unknown land-use category {0:?}")]
    UnknownCategory(String),
}

pub const DEFAULT_BUFFER_RADIUS: f64 = 50.0;
pub const DEFAULT_LANDUSE_RADIUS: f64 = 1000.0;
/// Hourly slabs averaged for population presence: 07:00 through 21:00.
pub const PRESENCE_HOURS: std::ops::RangeInclusive<usize> = 7..=21;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LandUseCategory {
    Urban,
    Suburban,
    ParksRecreation,
    Agricultural,
    Natural,
    Blue,
}

impl LandUseCategory {
    pub const ALL: [LandUseCategory; 6] = [
        LandUseCategory::Urban,
        LandUseCategory::Suburban,
        LandUseCategory::ParksRecreation,
        LandUseCategory::Agricultural,
        LandUseCategory::Natural,
        LandUseCategory::Blue,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            LandUseCategory::Urban => "urban",
            LandUseCategory::Suburban => "suburban",
            LandUseCategory::ParksRecreation => "parks_recreation",
            LandUseCategory::Agricultural => "agricultural",
            LandUseCategory::Natural => "natural",
            LandUseCategory::Blue => "blue",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == s)
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }
}

const DEFAULT_CATEGORY_CSV: &str = include_str!("../fixtures/corine_categories.csv");

/// Land-cover class name to aggregated category.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LandUseCategoryMap {
    classes: BTreeMap<String, LandUseCategory>,
}

#[derive(Serialize, Deserialize)]
struct MapRow {
    class_name: String,
    category: String,
}

impl Default for LandUseCategoryMap {
    /// Default grouping of CORINE land-cover classes into the six categories.
    fn default() -> Self {
        Self::from_csv_str(DEFAULT_CATEGORY_CSV).expect("shipped category map parses")
    }
}

impl LandUseCategoryMap {
    pub fn new(classes: BTreeMap<String, LandUseCategory>) -> Self {
        Self { classes }
    }

    /// Maps each category name to itself, for relabelling aggregated layers.
    pub fn identity() -> Self {
        Self::new(LandUseCategory::ALL.into_iter().map(|c| (c.name().to_string(), c)).collect())
    }

    pub fn get(&self, class_name: &str) -> Option<LandUseCategory> {
        self.classes.get(class_name).copied()
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, LandUseCategory)> {
        self.classes.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn from_csv_str(text: &str) -> Result<Self, ContextError> {
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let mut classes = BTreeMap::new();
        for row in rdr.deserialize::<MapRow>() {
            let row = row.map_err(|e| ContextError::UnknownCategory(e.to_string()))?;
            let cat = LandUseCategory::from_name(&row.category).ok_or(ContextError::UnknownCategory(row.category))?;
            classes.insert(row.class_name, cat);
        }
        Ok(Self { classes })
    }

    pub fn load(path: &Path) -> Result<Self, FormatError> {
        let text = crate::domain::io::read_to_string(path)?;
        Self::from_csv_str(&text).map_err(|e| FormatError::parse(path, e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<(), FormatError> {
        let rows: Vec<MapRow> = self
            .classes
            .iter()
            .map(|(k, v)| MapRow { class_name: k.clone(), category: v.name().to_string() })
            .collect();
        crate::domain::io::write_csv(path, &["class_name", "category"], &rows)
    }
}

fn expect(layer: &GridLayer, semantic: LayerSemantic) -> Result<(), ContextError> {
    if layer.semantic != semantic {
        return Err(ContextError::WrongSemantic { expected: semantic, got: layer.semantic });
    }
    Ok(())
}

/// Mean over the daytime hourly slabs of the mean presence in cells that
/// overlap the buffer. Missing cells and empty hours are skipped.
pub fn population_presence(point: &Point2, grid: &GridLayer, radius: f64) -> Result<f64, ContextError> {
    expect(grid, LayerSemantic::PopulationPresenceHourly)?;
    let cells = grid.cells_intersecting_disk(point, radius);
    let hourly: Vec<f64> = PRESENCE_HOURS
        .filter_map(|h| {
            let vals: Vec<f64> = cells.iter().filter_map(|&(r, c)| grid.value(h, r, c)).collect();
            (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
        })
        .collect();
    if hourly.is_empty() {
        return Err(ContextError::NoCoverage);
    }
    Ok(hourly.iter().sum::<f64>() / hourly.len() as f64)
}

/// Loudest cell overlapping the buffer across all noise sources.
pub fn noise_max(point: &Point2, layers: &[GridLayer], radius: f64) -> Result<f64, ContextError> {
    if layers.is_empty() {
        return Err(ContextError::NoLayers);
    }
    let mut best: Option<f64> = None;
    for layer in layers {
        expect(layer, LayerSemantic::NoiseLaeq)?;
        for (r, c) in layer.cells_intersecting_disk(point, radius) {
            if let Some(v) = layer.value(0, r, c) {
                best = Some(best.map_or(v, |b| b.max(v)));
            }
        }
    }
    best.ok_or(ContextError::NoCoverage)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrafficValue {
    pub volume: f64,
    /// False when no segment was in range and `volume` is the 0 stand-in.
    pub in_range: bool,
}

fn segments_in_range<'a>(
    point: &'a Point2,
    segments: &'a SegmentAttributeSet,
    radius: f64,
) -> impl Iterator<Item = &'a crate::domain::StreetSegment> {
    segments.segments.iter().filter(move |s| s.distance_to(point) <= radius)
}

/// Highest traffic volume on any segment within `radius`.
pub fn traffic_max(point: &Point2, segments: &SegmentAttributeSet, radius: f64) -> TrafficValue {
    segments_in_range(point, segments, radius).fold(TrafficValue { volume: 0.0, in_range: false }, |acc, s| {
        TrafficValue { volume: if acc.in_range { acc.volume.max(s.traffic_volume) } else { s.traffic_volume }, in_range: true }
    })
}

/// Unweighted mean speed limit of segments within `radius`.
pub fn speed_mean(point: &Point2, segments: &SegmentAttributeSet, radius: f64) -> Result<f64, ContextError> {
    let mut v: Vec<f64> = segments_in_range(point, segments, radius).map(|s| s.speed_limit).collect();
    if v.is_empty() {
        return Err(ContextError::NoSegments);
    }
    v.sort_by(f64::total_cmp);
    Ok(v.iter().sum::<f64>() / v.len() as f64)
}

/// Inverse-squared-distance weighted share of each category among pixel
/// centres within `radius`. Distances are clamped below at half a cell.
pub fn landuse_proportions(point: &Point2, raster: &GridLayer, radius: f64) -> Result<[f64; 6], ContextError> {
    expect(raster, LayerSemantic::LandUseClass)?;
    let floor = 0.5 * raster.cell_size;
    let mut per: [Vec<f64>; 6] = Default::default();
    for (r, c) in raster.cells_with_center_within(point, radius) {
        let Some(cat) = raster.value(0, r, c).and_then(|v| LandUseCategory::from_index(v as usize)) else {
            continue;
        };
        let d = raster.cell_center(r, c).distance(point).max(floor);
        per[cat.index()].push(1.0 / (d * d));
    }
    weights_to_proportions(per)
}

/// Normalizes per-category inverse-squared weights. Each category is summed
/// in sorted order so the result ignores pixel enumeration order.
pub fn weights_to_proportions(mut per: [Vec<f64>; 6]) -> Result<[f64; 6], ContextError> {
    let mut sums = [0.0; 6];
    for (s, w) in sums.iter_mut().zip(per.iter_mut()) {
        w.sort_by(f64::total_cmp);
        // fold from +0 so an empty category is not -0
        *s = w.iter().fold(0.0, |acc, v| acc + v);
    }
    let total: f64 = sums.iter().sum();
    if !(total > 0.0) {
        return Err(ContextError::NoCoverage);
    }
    Ok(sums.map(|s| s / total))
}

/// Relabels land-cover codes through `legend` and `map` into a category
/// index layer. Missing pixels stay missing.
pub fn aggregate_corine(
    raw: &GridLayer,
    legend: &BTreeMap<i64, String>,
    map: &LandUseCategoryMap,
) -> Result<GridLayer, ContextError> {
    let mut unmapped = BTreeSet::new();
    let lookup = |v: f64, unmapped: &mut BTreeSet<String>| -> f64 {
        if v.is_nan() {
            return f64::NAN;
        }
        let code = v.round() as i64;
        match legend.get(&code) {
            Some(name) => match map.get(name) {
                Some(cat) => cat.index() as f64,
                None => {
                    unmapped.insert(name.clone());
                    f64::NAN
                }
            },
            None => {
                unmapped.insert(format!("code {code}"));
                f64::NAN
            }
        }
    };
    let slab: Vec<f64> = raw.slabs[0].iter().map(|&v| lookup(v, &mut unmapped)).collect();
    if !unmapped.is_empty() {
        return Err(ContextError::UnmappedClass(unmapped.into_iter().collect()));
    }
    Ok(GridLayer {
        origin: raw.origin,
        cell_size: raw.cell_size,
        nrows: raw.nrows,
        ncols: raw.ncols,
        slabs: vec![slab],
        semantic: LayerSemantic::LandUseClass,
    })
}

/// Legend that maps category indices to their names, for use with
/// [`LandUseCategoryMap::identity`].
pub fn category_legend() -> BTreeMap<i64, String> {
    LandUseCategory::ALL.into_iter().map(|c| (c.index() as i64, c.name().to_string())).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Season {
    Winter,
    Spring,
    Summer,
    Fall,
}

impl Season {
    pub const ALL: [Season; 4] = [Season::Winter, Season::Spring, Season::Summer, Season::Fall];

    pub fn from_month(month: u32) -> Option<Season> {
        match month {
            12 | 1 | 2 => Some(Season::Winter),
            3..=5 => Some(Season::Spring),
            6..=8 => Some(Season::Summer),
            9..=11 => Some(Season::Fall),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Season::Winter => "winter",
            Season::Spring => "spring",
            Season::Summer => "summer",
            Season::Fall => "fall",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeasonProfile {
    pub point_id: String,
    /// Winter, spring, summer, fall.
    pub proportions: [f64; 4],
    /// Earliest season in calendar order among those with the top share.
    pub dominant: Season,
    pub n_images: usize,
}

/// Seasonal mix of the images within `radius`. `index` must be built over
/// `images` in the same order.
pub fn season_profile(
    point_id: &str,
    point: &Point2,
    index: &PointIndex,
    images: &[ImageRecord],
    radius: f64,
) -> Result<SeasonProfile, ContextError> {
    let mut counts = [0usize; 4];
    for i in index.radius_query(point, radius) {
        if let Some(s) = Season::from_month(images[i].capture_month) {
            counts[s as usize] += 1;
        }
    }
    let n: usize = counts.iter().sum();
    if n == 0 {
        return Err(ContextError::NoImages);
    }
    let top = *counts.iter().max().expect("four seasons");
    let dominant = Season::ALL[counts.iter().position(|&c| c == top).expect("max exists")];
    Ok(SeasonProfile {
        point_id: point_id.to_string(),
        proportions: counts.map(|c| c as f64 / n as f64),
        dominant,
        n_images: n,
    })
}

/// All covariates of one point. Missing values mean the extraction had no
/// data in range.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContextSample {
    pub point_id: String,
    pub population: Option<f64>,
    pub noise_laeq: Option<f64>,
    pub traffic: f64,
    pub traffic_in_range: bool,
    pub speed: Option<f64>,
    pub landuse: Option<[f64; 6]>,
}

/// Layers needed to build [`ContextSample`]s.
pub struct ContextLayers<'a> {
    pub population: &'a GridLayer,
    pub noise: &'a [GridLayer],
    pub segments: &'a SegmentAttributeSet,
    pub landuse: &'a GridLayer,
}

pub fn context_sample(point_id: &str, point: &Point2, layers: &ContextLayers<'_>, buffer: f64, landuse_radius: f64) -> ContextSample {
    let traffic = traffic_max(point, layers.segments, buffer);
    ContextSample {
        point_id: point_id.to_string(),
        population: population_presence(point, layers.population, buffer).ok(),
        noise_laeq: noise_max(point, layers.noise, buffer).ok(),
        traffic: traffic.volume,
        traffic_in_range: traffic.in_range,
        speed: speed_mean(point, layers.segments, buffer).ok(),
        landuse: landuse_proportions(point, layers.landuse, landuse_radius).ok(),
    }
}
