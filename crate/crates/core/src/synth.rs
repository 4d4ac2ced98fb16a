//! Seeded synthetic city: street imagery features, ratings, participatory
//! mapping points and context layers with planted structure, plus
//! brute-force oracles for testing.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::alignment::{AgreementRecord, Classification, PointScore};
use crate::context::{LandUseCategoryMap, Season};
use crate::domain::io::{self, FormatError};
use crate::domain::{
    Feature, FeatureVector, GridLayer, ImageRecord, Label, LayerSemantic, Point2, PpgisPoint, RatingRecord,
    SegmentAttributeSet, StreetSegment,
};
use crate::model::RawSegmentation;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SynthError {
    #[error("infeasible spec: {0}")]
    InfeasibleSpec(String),
}

/// Generator parameters. Every field has a default, so `{}` is a valid spec.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub seed: u64,
    pub n_images: usize,
    pub n_raters: usize,
    pub ratings_per_image: usize,
    pub n_ppgis_attractive: usize,
    pub n_ppgis_unattractive: usize,
    /// Side of the square study area in metres.
    pub extent_m: f64,
    pub street_spacing_m: f64,
    /// Ground-truth attractiveness weights in canonical feature order.
    pub weights: [f64; Feature::COUNT],
    /// Standard deviation of per-rating noise, in rating points.
    pub rater_noise_sd: f64,
    /// Share of each label's points placed where imagery contradicts the label.
    pub disagreement_fraction: f64,
    /// Added to noise cells at disagreement-designated points.
    pub noise_shift_db: f64,
    /// Share of images, from each end of the ranking, eligible as anchors.
    pub anchor_quantile: f64,
    pub min_point_separation_m: f64,
    /// Separation between a disagreement-designated point and any point
    /// that is not designated, so shifted cells stay out of their buffers.
    pub designated_separation_m: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            seed: 42,
            n_images: 5000,
            n_raters: 24,
            ratings_per_image: 10,
            n_ppgis_attractive: 110,
            n_ppgis_unattractive: 110,
            extent_m: 2000.0,
            street_spacing_m: 150.0,
            weights: [-0.5, 0.5, -0.5, 2.5, 0.5, 0.5, 0.0, -0.5],
            rater_noise_sd: 0.3,
            disagreement_fraction: 0.4,
            noise_shift_db: 10.0,
            anchor_quantile: 0.3,
            min_point_separation_m: 50.0,
            designated_separation_m: 72.0,
        }
    }
}

impl SynthSpec {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    fn check(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InfeasibleSpec(m.to_string()));
        if self.n_images == 0 || self.n_raters < 2 || self.n_ppgis_attractive == 0 || self.n_ppgis_unattractive == 0 {
            return bad("counts must be positive and there must be at least 2 raters");
        }
        if !(self.extent_m > 0.0) || !(self.street_spacing_m > 0.0) || self.street_spacing_m > self.extent_m {
            return bad("extent and street spacing must be positive, spacing at most the extent");
        }
        if self.ratings_per_image == 0 || self.ratings_per_image > self.n_raters {
            return bad("ratings_per_image must be in 1..=n_raters");
        }
        if !(0.0..=1.0).contains(&self.disagreement_fraction) || !(self.anchor_quantile > 0.0 && self.anchor_quantile <= 0.5) {
            return bad("disagreement_fraction must be in [0, 1] and anchor_quantile in (0, 0.5]");
        }
        if !(self.rater_noise_sd >= 0.0) || self.weights.iter().any(|w| !w.is_finite()) {
            return bad("noise sd must be non-negative and weights finite");
        }
        Ok(())
    }
}

/// What the generator planted, for checking recovered structure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthTruth {
    pub weights: [f64; Feature::COUNT],
    /// Ground-truth attractiveness per image, in image order.
    pub g: Vec<f64>,
    /// Points placed against their label, which carry the noise shift.
    pub disagreement_points: Vec<String>,
}

/// A generated dataset held in memory.
#[derive(Clone, Debug)]
pub struct Bundle {
    pub spec: SynthSpec,
    pub images: Vec<ImageRecord>,
    pub segmentation: Vec<(String, RawSegmentation)>,
    pub features: Vec<FeatureVector>,
    pub ratings: Vec<RatingRecord>,
    pub ppgis: Vec<PpgisPoint>,
    pub segments: SegmentAttributeSet,
    pub population: GridLayer,
    /// Named noise sources.
    pub noise: Vec<(String, GridLayer)>,
    pub land_cover: GridLayer,
    pub legend: BTreeMap<i64, String>,
    pub category_map: LandUseCategoryMap,
    pub truth: SynthTruth,
}

/// Relative paths of a bundle written to disk.
pub mod paths {
    pub const RATINGS: &str = "ratings.csv";
    pub const IMAGES: &str = "images.csv";
    pub const FEATURES: &str = "features.csv";
    pub const PPGIS: &str = "ppgis.geojson";
    pub const SEGMENTS: &str = "segments.geojson";
    pub const POPULATION_DIR: &str = "population";
    pub const NOISE_DIR: &str = "noise";
    pub const LAND_COVER: &str = "landcover/corine.asc";
    pub const LEGEND: &str = "landcover/legend.csv";
    pub const CATEGORIES: &str = "landcover/categories.csv";
    pub const TRUTH: &str = "synth_truth.json";
}

/// Sum of random plane waves, roughly in [-1.5, 1.5].
struct SmoothField {
    waves: Vec<(f64, f64, f64, f64)>,
}

impl SmoothField {
    fn new(rng: &mut ChaCha8Rng, extent: f64) -> Self {
        let waves = (0..3)
            .map(|_| {
                let angle = rng.random_range(0.0..2.0 * PI);
                let cycles = rng.random_range(0.6..1.8);
                let k = 2.0 * PI * cycles / extent;
                (k * angle.cos(), k * angle.sin(), rng.random_range(0.0..2.0 * PI), rng.random_range(0.35..0.6))
            })
            .collect();
        Self { waves }
    }

    fn at(&self, p: &Point2) -> f64 {
        self.waves.iter().map(|&(kx, ky, phase, amp)| amp * (kx * p.x + ky * p.y + phase).sin()).sum()
    }
}

const VEHICLE_SPLIT: [(&str, f64); 6] =
    [("car", 0.7), ("bus", 0.1), ("truck", 0.08), ("train", 0.02), ("motorcycle", 0.04), ("bicycle", 0.06)];

const LAND_COVER_CLASSES: [(i64, &str); 7] = [
    (111, "Continuous urban fabric"),
    (112, "Discontinuous urban fabric"),
    (121, "Commercial units"),
    (141, "Green urban areas"),
    (211, "Non-irrigated arable land"),
    (3111, "Broad-leaved forest on mineral soil"),
    (512, "Water bodies"),
];

fn gaussian(rng: &mut ChaCha8Rng, sd: f64) -> f64 {
    if sd == 0.0 {
        return 0.0;
    }
    Normal::new(0.0, sd).expect("finite sd").sample(rng)
}

fn streets(spec: &SynthSpec) -> Vec<f64> {
    let n = (spec.extent_m / spec.street_spacing_m).floor() as usize;
    (0..=n).map(|k| k as f64 * spec.street_spacing_m).collect()
}

/// Generates a bundle. Deterministic in `spec`.
pub fn generate(spec: &SynthSpec) -> Result<Bundle, SynthError> {
    spec.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let extent = spec.extent_m;
    let lines = streets(spec);

    let greenery = SmoothField::new(&mut rng, extent);
    let density = SmoothField::new(&mut rng, extent);
    let openness = SmoothField::new(&mut rng, extent);
    let loudness = SmoothField::new(&mut rng, extent);
    let wetness = SmoothField::new(&mut rng, extent);

    // images scattered along streets
    let mut images = Vec::with_capacity(spec.n_images);
    let mut features = Vec::with_capacity(spec.n_images);
    let mut segmentation = Vec::with_capacity(spec.n_images);
    let mut g = Vec::with_capacity(spec.n_images);
    for i in 0..spec.n_images {
        let along = rng.random_range(0.0..extent);
        let street = lines[rng.random_range(0..lines.len())];
        let offset = rng.random_range(-3.0..3.0);
        let location = if rng.random_bool(0.5) {
            Point2::new(along, street + offset)
        } else {
            Point2::new(street + offset, along)
        };
        let month = if rng.random_bool(0.6) { rng.random_range(6..=8) } else { rng.random_range(1..=12) };
        let image_id = format!("img{i:05}");
        images.push(ImageRecord {
            image_id: image_id.clone(),
            location,
            capture_year: rng.random_range(2009..=2022),
            capture_month: month,
        });

        let (gr, de, op) = (greenery.at(&location), density.at(&location), openness.at(&location));
        let logits = [
            1.0 + gaussian(&mut rng, 0.25),
            -0.2 + 0.3 * de + gaussian(&mut rng, 0.25),
            0.6 + 0.8 * de - 0.4 * gr + gaussian(&mut rng, 0.3),
            0.1 + 2.8 * (2.5 * gr).tanh() + gaussian(&mut rng, 0.35),
            -0.8 + 0.5 * op + gaussian(&mut rng, 0.3),
            0.4 + 0.7 * op - 0.4 * de + gaussian(&mut rng, 0.3),
            -2.5 + 0.5 * de + gaussian(&mut rng, 0.3),
            -1.2 + 0.6 * de + gaussian(&mut rng, 0.3),
            // classes outside the modelled set (walls, poles, fences)
            1.0 + gaussian(&mut rng, 0.9),
        ];
        let max = logits.iter().copied().fold(f64::MIN, f64::max);
        let exp = logits.map(|l| (l - max).exp());
        let total: f64 = exp.iter().sum();
        let shares = exp.map(|e| e / total);
        let proportions: [f64; Feature::COUNT] = std::array::from_fn(|j| shares[j]);
        g.push(proportions.iter().zip(&spec.weights).map(|(x, w)| x * w).sum::<f64>());

        let mut raw: RawSegmentation = Feature::ALL
            .iter()
            .filter(|f| **f != Feature::RoadTransport)
            .map(|f| (f.name().to_string(), proportions[f.index()]))
            .collect();
        let transport = proportions[Feature::RoadTransport.index()];
        for (name, share) in VEHICLE_SPLIT {
            raw.insert(name.to_string(), transport * share);
        }
        features.push(crate::model::consolidate_transport(&image_id, &raw));
        segmentation.push((image_id, raw));
    }

    let ratings = generate_ratings(spec, &g, &images, &mut rng);
    let (ppgis, designated) = place_points(spec, &images, &g, &mut rng)?;
    let segments = street_segments(&lines, &mut rng);
    let population = population_layer(spec, &mut rng);
    let noise = noise_layers(spec, &loudness, &ppgis, &designated, &mut rng);
    let (land_cover, legend) = land_cover_layer(spec, &greenery, &density, &wetness);

    let disagreement_points = ppgis
        .iter()
        .zip(&designated)
        .filter(|(_, d)| **d)
        .map(|(p, _)| p.point_id.clone())
        .collect();
    Ok(Bundle {
        spec: spec.clone(),
        images,
        segmentation,
        features,
        ratings,
        ppgis,
        segments,
        population,
        noise,
        land_cover,
        legend,
        category_map: LandUseCategoryMap::default(),
        truth: SynthTruth { weights: spec.weights, g, disagreement_points },
    })
}

/// Each image is rated by `ratings_per_image` distinct raters. A rater adds
/// an integer bias and Gaussian noise to the latent score, which spans
/// [2, 6], then rounds and clips to the 1..=7 scale.
fn generate_ratings(spec: &SynthSpec, g: &[f64], images: &[ImageRecord], rng: &mut ChaCha8Rng) -> Vec<RatingRecord> {
    let lo = g.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let biases: Vec<f64> = (0..spec.n_raters).map(|_| rng.random_range(-1i32..=1) as f64).collect();
    let mut raters: Vec<usize> = (0..spec.n_raters).collect();
    let mut out = Vec::with_capacity(images.len() * spec.ratings_per_image);
    for (img, gi) in images.iter().zip(g) {
        let latent = 2.0 + 4.0 * (gi - lo) / span;
        let (chosen, _) = raters.partial_shuffle(rng, spec.ratings_per_image);
        let mut chosen = chosen.to_vec();
        chosen.sort_unstable();
        for r in chosen {
            let score = (latent + biases[r] + gaussian(rng, spec.rater_noise_sd)).round().clamp(1.0, 7.0);
            out.push(RatingRecord {
                rater_id: format!("rater{r:02}"),
                image_id: img.image_id.clone(),
                raw_score: score as i64,
            });
        }
    }
    out
}

fn place_points(
    spec: &SynthSpec,
    images: &[ImageRecord],
    g: &[f64],
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<PpgisPoint>, Vec<bool>), SynthError> {
    let mut order: Vec<usize> = (0..images.len()).collect();
    order.sort_by(|&a, &b| g[a].total_cmp(&g[b]).then(a.cmp(&b)));
    let q = ((images.len() as f64 * spec.anchor_quantile).ceil() as usize).max(1);
    let low: Vec<usize> = order[..q].to_vec();
    let high: Vec<usize> = order[order.len() - q..].to_vec();

    let split = |n: usize| {
        let d = (n as f64 * spec.disagreement_fraction).round() as usize;
        (n - d, d)
    };
    let (att_agree, att_dis) = split(spec.n_ppgis_attractive);
    let (un_agree, un_dis) = split(spec.n_ppgis_unattractive);
    // designated points first, so they get the widest berth
    let groups = [
        (Label::Unattractive, true, &high, un_dis),
        (Label::Attractive, true, &low, att_dis),
        (Label::Attractive, false, &high, att_agree),
        (Label::Unattractive, false, &low, un_agree),
    ];

    let mut placed: Vec<(Point2, bool, Label)> = Vec::new();
    for (label, designated, pool, count) in groups {
        let mut candidates = pool.clone();
        candidates.shuffle(rng);
        let mut got = 0;
        for &i in &candidates {
            if got == count {
                break;
            }
            let r = 10.0 * rng.random::<f64>().sqrt();
            let a = rng.random_range(0.0..2.0 * PI);
            let loc = Point2::new(images[i].location.x + r * a.cos(), images[i].location.y + r * a.sin());
            let clear = placed.iter().all(|(q, d, _)| {
                let need = if designated != *d { spec.designated_separation_m } else { spec.min_point_separation_m };
                q.distance(&loc) >= need
            });
            if clear {
                placed.push((loc, designated, label));
                got += 1;
            }
        }
        if got < count {
            return Err(SynthError::InfeasibleSpec(format!(
                "placed only {got} of {count} {} points; reduce counts or separations",
                label.name()
            )));
        }
    }
    let mut points = Vec::with_capacity(placed.len());
    let mut designated = Vec::with_capacity(placed.len());
    for (k, (loc, d, label)) in placed.into_iter().enumerate() {
        points.push(PpgisPoint { point_id: format!("p{k:04}"), location: loc, label, comment: None });
        designated.push(d);
    }
    Ok((points, designated))
}

fn street_segments(lines: &[f64], rng: &mut ChaCha8Rng) -> SegmentAttributeSet {
    let mut segments = Vec::new();
    for (horizontal, coords) in [(true, lines), (false, lines)] {
        for (k, &c) in coords.iter().enumerate() {
            let arterial = k % 3 == 1;
            for w in lines.windows(2) {
                let (a, b) = if horizontal {
                    (Point2::new(w[0], c), Point2::new(w[1], c))
                } else {
                    (Point2::new(c, w[0]), Point2::new(c, w[1]))
                };
                let base = if arterial { 15_000.0 } else { 2_000.0 };
                let volume = (base * (1.0 + gaussian(rng, 0.4).clamp(-0.9, 2.0))).round();
                let speed = if arterial { 50.0 } else { *[30.0, 40.0].choose(rng).expect("non-empty") };
                segments.push(StreetSegment {
                    segment_id: format!("s{:05}", segments.len()),
                    geometry: vec![a, b],
                    traffic_volume: volume,
                    speed_limit: speed,
                });
            }
        }
    }
    SegmentAttributeSet { segments }
}

fn cells(extent: f64, size: f64) -> usize {
    (extent / size).ceil() as usize
}

/// Hourly presence on 25 m cells, drawn independently per cell so it carries
/// no spatial structure shared with anything else.
fn population_layer(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> GridLayer {
    let cs = 25.0;
    let n = cells(spec.extent_m, cs);
    let base: Vec<f64> = (0..n * n).map(|_| rng.random_range(0.0..4.0)).collect();
    let slabs = (0..24)
        .map(|h| {
            let daytime = 0.6 + 0.4 * ((h as f64 - 4.0) / 24.0 * 2.0 * PI).sin().max(0.0);
            base.iter().map(|b| (b * daytime * 1000.0).round() / 1000.0).collect()
        })
        .collect();
    GridLayer::new(Point2::new(0.0, 0.0), cs, n, n, slabs, LayerSemantic::PopulationPresenceHourly)
        .expect("valid population grid")
}

/// Road noise on 10 m cells plus a rail corridor. Cells within 12 m of a
/// disagreement-designated point are raised by the planted shift.
fn noise_layers(
    spec: &SynthSpec,
    loudness: &SmoothField,
    points: &[PpgisPoint],
    designated: &[bool],
    rng: &mut ChaCha8Rng,
) -> Vec<(String, GridLayer)> {
    let cs = 10.0;
    let n = cells(spec.extent_m, cs);
    let mut road = GridLayer::filled(Point2::new(0.0, 0.0), cs, n, n, 0.0, LayerSemantic::NoiseLaeq).expect("valid");
    for r in 0..n {
        for c in 0..n {
            let p = road.cell_center(r, c);
            let v = 55.0 + 2.0 * loudness.at(&p) + rng.random_range(-1.5..1.5);
            road.set(0, r, c, (v * 10.0).round() / 10.0);
        }
    }
    for (p, _) in points.iter().zip(designated).filter(|(_, d)| **d) {
        for (r, c) in road.cells_with_center_within(&p.location, 12.0) {
            let v = road.value(0, r, c).expect("filled");
            road.set(0, r, c, v + spec.noise_shift_db);
        }
    }

    let rcs = 50.0;
    let rn = cells(spec.extent_m, rcs);
    let mut rail = GridLayer::filled(Point2::new(0.0, 0.0), rcs, rn, rn, f64::NAN, LayerSemantic::NoiseLaeq).expect("valid");
    let col = rn / 3;
    for r in 0..rn {
        rail.set(0, r, col, 58.0);
    }
    vec![("road".to_string(), road), ("rail".to_string(), rail)]
}

fn land_cover_layer(
    spec: &SynthSpec,
    greenery: &SmoothField,
    density: &SmoothField,
    wetness: &SmoothField,
) -> (GridLayer, BTreeMap<i64, String>) {
    let cs = 20.0;
    let n = cells(spec.extent_m, cs);
    let mut layer = GridLayer::filled(Point2::new(0.0, 0.0), cs, n, n, 0.0, LayerSemantic::LandCoverCode).expect("valid");
    for r in 0..n {
        for c in 0..n {
            let p = layer.cell_center(r, c);
            let (gr, de, we) = (greenery.at(&p), density.at(&p), wetness.at(&p));
            let code = if we > 1.1 {
                512
            } else if gr > 0.8 {
                3111
            } else if gr > 0.3 {
                141
            } else if de > 0.7 {
                111
            } else if de > 0.2 {
                121
            } else if gr < -0.9 {
                211
            } else {
                112
            };
            layer.set(0, r, c, code as f64);
        }
    }
    let legend = LAND_COVER_CLASSES.iter().map(|(k, v)| (*k, v.to_string())).collect();
    (layer, legend)
}

impl Bundle {
    /// Writes every table and layer under `dir` in the ingest formats.
    pub fn write(&self, dir: &Path) -> Result<(), FormatError> {
        io::write_ratings(&dir.join(paths::RATINGS), &self.ratings)?;
        io::write_images(&dir.join(paths::IMAGES), &self.images)?;
        io::write_segmentation(&dir.join(paths::FEATURES), &self.segmentation)?;
        io::write_ppgis(&dir.join(paths::PPGIS), &self.ppgis)?;
        io::write_segments(&dir.join(paths::SEGMENTS), &self.segments)?;
        io::write_population_dir(&dir.join(paths::POPULATION_DIR), &self.population)?;
        for (name, layer) in &self.noise {
            io::write_ascii_grid(&dir.join(paths::NOISE_DIR).join(format!("{name}.asc")), layer, 0)?;
        }
        io::write_ascii_grid(&dir.join(paths::LAND_COVER), &self.land_cover, 0)?;
        io::write_legend(&dir.join(paths::LEGEND), &self.legend)?;
        self.category_map.save(&dir.join(paths::CATEGORIES))?;
        let truth = serde_json::to_string_pretty(&self.truth).expect("truth serializes");
        io::write_file(&dir.join(paths::TRUTH), truth + "\n")
    }

    pub fn noise_file_names(&self) -> Vec<String> {
        self.noise.iter().map(|(n, _)| format!("{}/{n}.asc", paths::NOISE_DIR)).collect()
    }
}

/// Recomputes buffer means, the prediction distribution and every
/// classification by scanning all images for every point, with no index.
/// `predictions` is keyed by image id; images without a prediction are
/// ignored.
pub fn oracle_agreement(
    images: &[ImageRecord],
    points: &[PpgisPoint],
    predictions: &BTreeMap<String, f64>,
    radius: f64,
    min_images: usize,
) -> Vec<AgreementRecord> {
    let located: Vec<(Point2, f64)> = images
        .iter()
        .filter_map(|im| predictions.get(&im.image_id).map(|&p| (im.location, p)))
        .collect();
    if located.is_empty() {
        return Vec::new();
    }
    let n = located.len() as f64;
    let mu = located.iter().map(|e| e.1).sum::<f64>() / n;
    let sigma = if located.len() > 1 {
        (located.iter().map(|e| (e.1 - mu) * (e.1 - mu)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let mut out = Vec::new();
    for p in points {
        let mut inside: Vec<f64> = located
            .iter()
            .filter(|(loc, _)| {
                let (dx, dy) = (loc.x - p.location.x, loc.y - p.location.y);
                dx * dx + dy * dy <= radius * radius
            })
            .map(|e| e.1)
            .collect();
        if inside.len() < min_images.max(1) {
            continue;
        }
        inside.sort_by(f64::total_cmp);
        let mean_pred = inside.iter().sum::<f64>() / inside.len() as f64;
        let score = PointScore { point_id: p.point_id.clone(), label: p.label, mean_pred, n_images: inside.len() };
        let s = sigma;
        let classification = if s <= 0.0 {
            Classification::Disagree
        } else {
            match score.label {
                Label::Attractive if mean_pred > mu + s => Classification::StrictAgree,
                Label::Attractive if mean_pred > mu => Classification::ModerateAgree,
                Label::Unattractive if mean_pred < mu - s => Classification::StrictAgree,
                Label::Unattractive if mean_pred < mu => Classification::ModerateAgree,
                _ => Classification::Disagree,
            }
        };
        out.push(AgreementRecord { point_id: score.point_id, label: score.label, mean_pred, classification });
    }
    out
}

/// Two series of length `n` whose Pearson correlation is `r` up to rounding,
/// e.g. image luminosities against mean ratings.
pub fn correlated_pair(n: usize, r: f64, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let standardize = |v: Vec<f64>| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        let s = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>()).sqrt();
        v.into_iter().map(|x| (x - m) / s).collect::<Vec<f64>>()
    };
    let x = standardize((0..n).map(|_| gaussian(&mut rng, 1.0)).collect());
    let e: Vec<f64> = (0..n).map(|_| gaussian(&mut rng, 1.0)).collect();
    // remove the component of e along x
    let dot: f64 = x.iter().zip(&e).map(|(a, b)| a * b).sum();
    let e = standardize(e.iter().zip(&x).map(|(ei, xi)| ei - dot * xi).collect());
    let y = x.iter().zip(&e).map(|(xi, ei)| r * xi + (1.0 - r * r).sqrt() * ei).collect();
    let lum = x.iter().map(|v| 120.0 + 400.0 * v).collect();
    (lum, y)
}

/// Season counts of a set of months, winter first.
pub fn season_tally(months: &[u32]) -> [usize; 4] {
    let mut t = [0; 4];
    for m in months {
        if let Some(s) = Season::from_month(*m) {
            t[s as usize] += 1;
        }
    }
    t
}
