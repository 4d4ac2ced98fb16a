//! File-driven runs. A [`RunConfig`] names the inputs and parameters; each
//! stage reads files and writes files into the output directory, so any
//! stage can be rerun on its own.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::alignment::{
    agreement_summary, buffer_scores, classify_all, describe, AgreementRecord, Classification, PredictionDistribution,
};
use crate::context::{aggregate_corine, context_sample, season_profile, ContextLayers, ContextSample, LandUseCategory, LandUseCategoryMap};
use crate::domain::io::{self, FormatError};
use crate::domain::{Dataset, FeatureVector, ImageRecord, Label, LayerSemantic, PpgisPoint, ValidationReport};
use crate::explain::{decision_paths, permutation_importance, shap_matrix};
use crate::geo::{getis_ord_gstar, knn_weights, morans_i, PointIndex, WeightScheme};
use crate::model::{
    grid_search_cv, metrics, train_gbt, vif_filter, FeatureMatrix, GbtModel, GridSearchResult, Hyperparams, Metrics,
    TargetScaler, VifReport,
};
use crate::ratings::{image_targets, standardize};
use crate::stats::{contrast_table, ThresholdMode, CONTRAST_HEADER};
use crate::synth::{self, SynthSpec};

pub const VALIDATION_FILE: &str = "validation.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Every file a full run leaves in the output directory.
pub const OUTPUT_FILES: [&str; 15] = [
    "vif.csv",
    "model.json",
    "importance.csv",
    "shap.csv",
    "decision_paths.csv",
    "point_scores.csv",
    "agreement.csv",
    "summary.csv",
    "hotspots_attractive.csv",
    "hotspots_unattractive.csv",
    "context.csv",
    "contrasts_strict.csv",
    "contrasts_moderate.csv",
    "seasonality.csv",
    MANIFEST_FILE,
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Config,
    Validate,
    Synth,
    Train,
    Align,
    Context,
    Report,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Config => "config",
            Stage::Validate => "validate",
            Stage::Synth => "synth",
            Stage::Train => "train",
            Stage::Align => "align",
            Stage::Context => "context",
            Stage::Report => "report",
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("[config] {0}")]
    Config(String),
    #[error("[validate] {errors} error(s) in input tables; {hint}")]
    Validation { errors: usize, hint: String },
    #[error("[{stage}] {message}")]
    Stage { stage: Stage, message: String },
}

impl PipelineError {
    /// Process exit code: 2 for bad configuration or inputs, 3 for a failed stage.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) | PipelineError::Validation { .. } => 2,
            PipelineError::Stage { .. } => 3,
        }
    }
}

fn fail<E: fmt::Display>(stage: Stage) -> impl Fn(E) -> PipelineError {
    move |e| PipelineError::Stage { stage, message: e.to_string() }
}

/// Input locations, relative to the config file's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Inputs {
    pub ratings: PathBuf,
    pub images: PathBuf,
    /// Segmentation table; vehicle classes are merged on load.
    pub features: PathBuf,
    pub ppgis: PathBuf,
    pub segments: PathBuf,
    /// Directory of hourly presence grids.
    pub population_dir: PathBuf,
    /// Noise grids; the maximum over all of them is used.
    pub noise: Vec<PathBuf>,
    pub land_cover: PathBuf,
    pub legend: PathBuf,
    /// Class-to-category table; the built-in one when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub categories: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub inputs: Inputs,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub buffer_radius_m: f64,
    pub landuse_radius_m: f64,
    pub min_images: usize,
    pub vif_threshold: f64,
    pub knn: usize,
    pub significance: f64,
    /// Used as is when `grid` is empty.
    pub hyperparams: Hyperparams,
    /// Candidates for k-fold grid search on the training split.
    pub grid: Vec<Hyperparams>,
    pub cv_folds: usize,
    pub test_fraction: f64,
    pub importance_repeats: usize,
    pub decision_sample: usize,
    pub moran_permutations: usize,
    #[serde(skip)]
    base_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let p = |s: &str| PathBuf::from(s);
        Self {
            inputs: Inputs {
                ratings: p(synth::paths::RATINGS),
                images: p(synth::paths::IMAGES),
                features: p(synth::paths::FEATURES),
                ppgis: p(synth::paths::PPGIS),
                segments: p(synth::paths::SEGMENTS),
                population_dir: p(synth::paths::POPULATION_DIR),
                noise: vec![p("noise/road.asc"), p("noise/rail.asc")],
                land_cover: p(synth::paths::LAND_COVER),
                legend: p(synth::paths::LEGEND),
                categories: Some(p(synth::paths::CATEGORIES)),
            },
            seed: 42,
            output_dir: p("out"),
            buffer_radius_m: crate::alignment::DEFAULT_BUFFER_RADIUS,
            landuse_radius_m: crate::context::DEFAULT_LANDUSE_RADIUS,
            min_images: crate::alignment::DEFAULT_MIN_IMAGES,
            vif_threshold: crate::model::DEFAULT_VIF_THRESHOLD,
            knn: crate::geo::GSTAR_NEIGHBOURS,
            significance: 0.05,
            hyperparams: Hyperparams::default(),
            grid: Vec::new(),
            cv_folds: 5,
            test_fraction: 0.2,
            importance_repeats: 5,
            decision_sample: 100,
            moran_permutations: crate::geo::DEFAULT_PERMUTATIONS,
            base_dir: PathBuf::new(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self, PipelineError> {
        let mut cfg: RunConfig = serde_json::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.check()?;
        Ok(cfg)
    }

    /// Reads a config; relative paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text, path.parent().unwrap_or(Path::new("")))
    }

    pub fn with_base_dir(mut self, dir: &Path) -> Self {
        self.base_dir = dir.to_path_buf();
        self
    }

    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        self.base_dir.join(p)
    }

    pub fn output_path(&self) -> PathBuf {
        self.resolve(&self.output_dir)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    /// Hex SHA-256 of the serialized config.
    pub fn hash(&self) -> String {
        sha256_hex(self.to_json().as_bytes())
    }

    pub fn check(&self) -> Result<(), PipelineError> {
        let positive = [
            ("buffer_radius_m", self.buffer_radius_m),
            ("landuse_radius_m", self.landuse_radius_m),
            ("vif_threshold", self.vif_threshold),
            ("significance", self.significance),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(PipelineError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        let counts = [
            ("min_images", self.min_images),
            ("knn", self.knn),
            ("importance_repeats", self.importance_repeats),
            ("decision_sample", self.decision_sample),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(PipelineError::Config(format!("{name} must be positive")));
            }
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(PipelineError::Config(format!("test_fraction must be in (0, 1), got {}", self.test_fraction)));
        }
        if self.significance >= 1.0 {
            return Err(PipelineError::Config("significance must be below 1".into()));
        }
        for hp in std::iter::once(&self.hyperparams).chain(&self.grid) {
            hp.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        }
        Ok(())
    }

    fn input_paths(&self) -> Vec<PathBuf> {
        let i = &self.inputs;
        let mut v = vec![&i.ratings, &i.images, &i.features, &i.ppgis, &i.segments, &i.population_dir, &i.land_cover, &i.legend];
        v.extend(&i.noise);
        v.extend(&i.categories);
        v.into_iter().map(|p| self.resolve(p)).collect()
    }

    fn check_paths(&self) -> Result<(), PipelineError> {
        match self.input_paths().into_iter().find(|p| !p.exists()) {
            Some(p) => Err(PipelineError::Config(format!("input {} does not exist", p.display()))),
            None => Ok(()),
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Offsets that give each stage its own seed.
mod seeds {
    pub const SPLIT: u64 = 1;
    pub const CV: u64 = 2;
    pub const TRAIN: u64 = 3;
    pub const IMPORTANCE: u64 = 4;
    pub const DECISION: u64 = 5;
    pub const MORAN: u64 = 6;
    pub const CONTRAST: u64 = 7;
}

fn sub_seed(seed: u64, offset: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(offset)
}

fn fmt_err(e: FormatError) -> String {
    e.to_string()
}

fn write_csv<T: Serialize>(out: &Path, name: &str, header: &[&str], rows: &[T], stage: Stage) -> Result<(), PipelineError> {
    io::write_csv(&out.join(name), header, rows).map_err(|e| fail(stage)(fmt_err(e)))
}

fn write_records(out: &Path, name: &str, header: &[String], rows: &[Vec<String>], stage: Stage) -> Result<(), PipelineError> {
    let h: Vec<&str> = header.iter().map(String::as_str).collect();
    write_csv(out, name, &h, rows, stage)
}

fn read_csv<T: serde::de::DeserializeOwned>(path: &Path, stage: Stage) -> Result<Vec<T>, PipelineError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| fail(stage)(format!("{}: {e}", path.display())))?;
    r.deserialize().collect::<Result<Vec<T>, _>>().map_err(|e| fail(stage)(format!("{}: {e}", path.display())))
}

fn num(v: f64) -> String {
    v.to_string()
}

/// Tables checked by the validate stage, loaded from the config's inputs.
pub fn load_dataset(cfg: &RunConfig, stage: Stage) -> Result<Dataset, PipelineError> {
    cfg.check_paths()?;
    let i = &cfg.inputs;
    let e = |err: FormatError| fail(stage)(fmt_err(err));
    Ok(Dataset {
        ratings: io::read_ratings(&cfg.resolve(&i.ratings)).map_err(e)?,
        images: io::read_images(&cfg.resolve(&i.images)).map_err(e)?,
        features: io::read_features(&cfg.resolve(&i.features)).map_err(e)?,
        ppgis: io::read_ppgis(&cfg.resolve(&i.ppgis)).map_err(e)?,
    })
}

#[derive(Serialize)]
struct IssueRow<'a> {
    table: &'a str,
    severity: &'static str,
    kind: &'static str,
    row: Option<usize>,
    message: &'a str,
}

/// Writes the report as CSV, one issue per line.
pub fn write_validation_report(report: &ValidationReport, path: &Path) -> Result<(), FormatError> {
    let rows: Vec<IssueRow> = report
        .all()
        .map(|(table, issue)| IssueRow {
            table,
            severity: match issue.severity {
                crate::domain::Severity::Error => "error",
                crate::domain::Severity::Warning => "warning",
            },
            kind: issue.kind.name(),
            row: issue.row,
            message: &issue.message,
        })
        .collect();
    io::write_csv(path, &["table", "severity", "kind", "row", "message"], &rows)
}

/// Validates the input tables and writes `validation.csv` to `out`.
pub fn cmd_validate(cfg: &RunConfig, out: &Path) -> Result<ValidationReport, PipelineError> {
    let report = load_dataset(cfg, Stage::Validate)?.report();
    let path = out.join(VALIDATION_FILE);
    write_validation_report(&report, &path).map_err(|e| fail(Stage::Validate)(fmt_err(e)))?;
    let errors = report.errors().count();
    if errors > 0 {
        return Err(PipelineError::Validation { errors, hint: format!("see {}", path.display()) });
    }
    Ok(report)
}

fn validated(cfg: &RunConfig, stage: Stage) -> Result<Dataset, PipelineError> {
    let data = load_dataset(cfg, stage)?;
    let errors = data.report().errors().count();
    if errors > 0 {
        let hint = "run the validate subcommand for the full report".to_string();
        return Err(PipelineError::Validation { errors, hint });
    }
    Ok(data)
}

/// Writes a bundle from a synthetic spec file, with a ready-to-run
/// `config.json` beside it.
pub fn cmd_synth(spec_path: &Path, out: &Path, seed: Option<u64>) -> Result<synth::Bundle, PipelineError> {
    let text = std::fs::read_to_string(spec_path).map_err(|e| PipelineError::Config(format!("{}: {e}", spec_path.display())))?;
    let mut spec = SynthSpec::from_json(&text).map_err(|e| PipelineError::Config(e.to_string()))?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    write_synth(&spec, out)
}

pub fn write_synth(spec: &SynthSpec, out: &Path) -> Result<synth::Bundle, PipelineError> {
    let bundle = synth::generate(spec).map_err(fail(Stage::Synth))?;
    bundle.write(out).map_err(|e| fail(Stage::Synth)(fmt_err(e)))?;
    let mut cfg = RunConfig { seed: spec.seed, ..RunConfig::default() };
    cfg.inputs.noise = bundle.noise_file_names().into_iter().map(PathBuf::from).collect();
    io::write_file(&out.join("config.json"), cfg.to_json()).map_err(|e| fail(Stage::Synth)(fmt_err(e)))?;
    let spec_json = serde_json::to_string_pretty(spec).expect("spec serializes") + "\n";
    io::write_file(&out.join("spec.json"), spec_json).map_err(|e| fail(Stage::Synth)(fmt_err(e)))?;
    Ok(bundle)
}

/// Contents of `model.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub scaler: TargetScaler,
    pub n_train: usize,
    pub n_test: usize,
    pub test_metrics: Metrics,
    /// Predicting the training-split mean for every test image.
    pub baseline_metrics: Metrics,
    pub cv: Option<GridSearchResult>,
    pub model: GbtModel,
}

/// Scaled regression targets joined with features, sorted by image id.
pub struct TrainingSet {
    pub image_ids: Vec<String>,
    pub x: FeatureMatrix,
    pub y: Vec<f64>,
    pub scaler: TargetScaler,
}

pub fn training_set(data: &Dataset) -> Result<TrainingSet, String> {
    let (_, standardized) = standardize(&data.ratings).map_err(|e| e.to_string())?;
    let targets = image_targets(&standardized);
    let by_id: BTreeMap<&str, &FeatureVector> = data.features.iter().map(|f| (f.image_id.as_str(), f)).collect();
    let joined: Vec<(&str, f64, &FeatureVector)> = targets
        .iter()
        .filter_map(|t| by_id.get(t.image_id.as_str()).map(|f| (t.image_id.as_str(), t.mean_z, *f)))
        .collect();
    let raw: Vec<f64> = joined.iter().map(|j| j.1).collect();
    let scaler = TargetScaler::fit(&raw).map_err(|e| e.to_string())?;
    let vectors: Vec<&FeatureVector> = joined.iter().map(|j| j.2).collect();
    Ok(TrainingSet {
        image_ids: joined.iter().map(|j| j.0.to_string()).collect(),
        x: FeatureMatrix::from_feature_vectors(&vectors),
        y: raw.iter().map(|&v| scaler.apply(v)).collect(),
        scaler,
    })
}

/// Seeded train/test row split; both halves sorted.
pub fn split_rows(n: usize, test_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = ((n as f64 * test_fraction).round() as usize).clamp(usize::from(n > 1), n.saturating_sub(1));
    let mut test = order[..n_test].to_vec();
    let mut train = order[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    (train, test)
}

#[derive(Serialize)]
struct VifRow<'a> {
    feature: &'a str,
    initial_vif: f64,
    final_vif: f64,
    status: &'static str,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImportanceCsvRow {
    pub feature: String,
    pub importance: f64,
    pub std: f64,
    pub rank: usize,
}

/// A trained model with the held-out rows it was scored on.
pub struct Fitted {
    pub trained: TrainedModel,
    pub vif: VifReport,
    pub x_test: FeatureMatrix,
    pub y_test: Vec<f64>,
    pub test_ids: Vec<String>,
}

/// Target scaling, train/test split, VIF screen, optional grid search and
/// the final fit on the training rows.
pub fn fit(cfg: &RunConfig, data: &Dataset) -> Result<Fitted, PipelineError> {
    const S: Stage = Stage::Train;
    let set = training_set(data).map_err(fail(S))?;
    let (train, test) = split_rows(set.y.len(), cfg.test_fraction, sub_seed(cfg.seed, seeds::SPLIT));
    let pick = |rows: &[usize]| rows.iter().map(|&i| set.y[i]).collect::<Vec<f64>>();
    let (y_train, y_test) = (pick(&train), pick(&test));
    let x_train_all = set.x.select_rows(&train);

    let vif = vif_filter(&x_train_all, cfg.vif_threshold).map_err(fail(S))?;
    let retained = vif.retained_names();
    let x_train = x_train_all.select_columns(&retained).map_err(fail(S))?;
    let x_test = set.x.select_rows(&test).select_columns(&retained).map_err(fail(S))?;

    let cv = if cfg.grid.is_empty() {
        None
    } else {
        Some(grid_search_cv(&x_train, &y_train, &cfg.grid, cfg.cv_folds, sub_seed(cfg.seed, seeds::CV)).map_err(fail(S))?)
    };
    let hp = cv.as_ref().map_or(cfg.hyperparams, |c| c.best);
    let model = train_gbt(&x_train, &y_train, &hp, sub_seed(cfg.seed, seeds::TRAIN)).map_err(fail(S))?;
    let predictions = model.predict_matrix(&x_test).map_err(fail(S))?;
    let test_metrics = metrics(&predictions, &y_test).map_err(fail(S))?;
    let mean = y_train.iter().sum::<f64>() / y_train.len() as f64;
    let baseline_metrics = metrics(&vec![mean; y_test.len()], &y_test).map_err(fail(S))?;
    Ok(Fitted {
        trained: TrainedModel {
            scaler: set.scaler,
            n_train: train.len(),
            n_test: test.len(),
            test_metrics,
            baseline_metrics,
            cv,
            model,
        },
        vif,
        x_test,
        y_test,
        test_ids: test.iter().map(|&i| set.image_ids[i].clone()).collect(),
    })
}

pub fn write_model(trained: &TrainedModel, out: &Path) -> Result<(), PipelineError> {
    let json = serde_json::to_string_pretty(trained).expect("model serializes") + "\n";
    io::write_file(&out.join("model.json"), json).map_err(|e| fail(Stage::Train)(fmt_err(e)))
}

/// VIF screen, training, test metrics, importance, SHAP and decision paths.
pub fn cmd_train(cfg: &RunConfig, out: &Path) -> Result<TrainedModel, PipelineError> {
    const S: Stage = Stage::Train;
    let data = validated(cfg, S)?;
    let Fitted { trained, vif, x_test, y_test, test_ids } = fit(cfg, &data)?;
    let model = &trained.model;
    let retained = vif.retained_names();

    let final_vif: BTreeMap<&str, f64> = vif
        .retained
        .iter()
        .chain(&vif.removed)
        .map(|e| (e.feature.as_str(), e.vif))
        .collect();
    let vif_rows: Vec<VifRow> = vif
        .initial
        .iter()
        .map(|e| VifRow {
            feature: &e.feature,
            initial_vif: e.vif,
            final_vif: final_vif[e.feature.as_str()],
            status: if retained.contains(&e.feature) { "retained" } else { "removed" },
        })
        .collect();
    write_csv(out, "vif.csv", &["feature", "initial_vif", "final_vif", "status"], &vif_rows, S)?;

    let importance = permutation_importance(model, &x_test, &y_test, cfg.importance_repeats, sub_seed(cfg.seed, seeds::IMPORTANCE))
        .map_err(fail(S))?;
    let rows: Vec<ImportanceCsvRow> = importance
        .into_iter()
        .map(|r| ImportanceCsvRow { feature: r.feature, importance: r.importance, std: r.std, rank: r.rank })
        .collect();
    write_csv(out, "importance.csv", &["feature", "importance", "std", "rank"], &rows, S)?;

    let shap = shap_matrix(model, &x_test, test_ids).map_err(fail(S))?;
    let mut header = vec!["image_id".to_string(), "base_value".into(), "prediction".into()];
    header.extend(shap.feature_names.iter().cloned());
    let shap_rows: Vec<Vec<String>> = shap
        .row_ids
        .iter()
        .zip(&shap.rows)
        .zip(&shap.predictions)
        .map(|((id, phi), p)| {
            let mut r = vec![id.clone(), num(shap.base_value), num(*p)];
            r.extend(phi.iter().map(|v| num(*v)));
            r
        })
        .collect();
    write_records(out, "shap.csv", &header, &shap_rows, S)?;

    let sample = cfg.decision_sample.min(shap.rows.len());
    let steps = decision_paths(&shap, sample, sub_seed(cfg.seed, seeds::DECISION)).map_err(fail(S))?;
    write_csv(out, "decision_paths.csv", &["image_id", "step", "feature", "cumulative_value"], &steps, S)?;

    write_model(&trained, out)?;
    Ok(trained)
}

pub fn load_model(out: &Path, stage: Stage) -> Result<TrainedModel, PipelineError> {
    let path = out.join("model.json");
    let text = std::fs::read_to_string(&path).map_err(|e| fail(stage)(format!("{}: {e}; run the train stage first", path.display())))?;
    serde_json::from_str(&text).map_err(|e| fail(stage)(format!("{}: {e}", path.display())))
}

/// Model predictions for every image with features, in image order.
pub fn image_predictions(model: &GbtModel, data: &Dataset) -> Result<(Vec<ImageRecord>, Vec<f64>), String> {
    let by_id: BTreeMap<&str, &FeatureVector> = data.features.iter().map(|f| (f.image_id.as_str(), f)).collect();
    let mut images = Vec::new();
    let mut preds = Vec::new();
    for im in &data.images {
        if let Some(fv) = by_id.get(im.image_id.as_str()) {
            let p = model
                .predict(|name| crate::domain::Feature::from_name(name).map(|f| fv.get(f)))
                .map_err(|e| e.to_string())?;
            images.push(im.clone());
            preds.push(p);
        }
    }
    Ok((images, preds))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointScoreRow {
    pub point_id: String,
    pub label: Label,
    pub x: f64,
    pub y: f64,
    pub n_images: usize,
    pub mean_pred: Option<f64>,
    /// `scored` or `excluded` (too few images in the buffer).
    pub status: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgreementRow {
    pub point_id: String,
    pub label: Label,
    pub mean_pred: f64,
    pub classification: String,
}

impl AgreementRow {
    pub fn record(&self) -> Option<AgreementRecord> {
        Some(AgreementRecord {
            point_id: self.point_id.clone(),
            label: self.label,
            mean_pred: self.mean_pred,
            classification: Classification::parse(&self.classification)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub label: Label,
    pub n_points: usize,
    pub n_scored: usize,
    pub strict_rate: f64,
    pub moderate_rate: f64,
    /// Mean and sample sd of all image predictions.
    pub mu: f64,
    pub sigma: f64,
    pub score_mean: f64,
    pub score_sd: f64,
    pub score_min: f64,
    pub score_median: f64,
    pub score_max: f64,
    pub morans_i: Option<f64>,
    pub morans_expected: Option<f64>,
    pub morans_z: Option<f64>,
    pub morans_p: Option<f64>,
}

pub const SUMMARY_HEADER: [&str; 16] = [
    "label",
    "n_points",
    "n_scored",
    "strict_rate",
    "moderate_rate",
    "mu",
    "sigma",
    "score_mean",
    "score_sd",
    "score_min",
    "score_median",
    "score_max",
    "morans_i",
    "morans_expected",
    "morans_z",
    "morans_p",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HotspotRow {
    pub point_id: String,
    pub x: f64,
    pub y: f64,
    pub mean_pred: f64,
    pub z: f64,
    pub class: String,
}

/// Buffer scores, agreement classes, per-label summary with Moran's I, and
/// G* hotspots of buffer means per label.
pub fn cmd_align(cfg: &RunConfig, out: &Path) -> Result<Vec<AgreementRecord>, PipelineError> {
    const S: Stage = Stage::Align;
    let data = validated(cfg, S)?;
    let trained = load_model(out, S)?;
    let (images, preds) = image_predictions(&trained.model, &data).map_err(|e| fail(S)(e))?;
    let index = PointIndex::build(images.iter().map(|i| i.location).collect()).map_err(fail(S))?;
    let buffers = buffer_scores(&data.ppgis, &index, &preds, cfg.buffer_radius_m, cfg.min_images).map_err(fail(S))?;
    let dist = PredictionDistribution::from_predictions(&preds).map_err(fail(S))?;
    let records = classify_all(&buffers.scores, &dist).map_err(fail(S))?;

    let scored: BTreeMap<&str, (f64, usize)> =
        buffers.scores.iter().map(|s| (s.point_id.as_str(), (s.mean_pred, s.n_images))).collect();
    let excluded: BTreeMap<&str, usize> = buffers.excluded.iter().map(|e| (e.point_id.as_str(), e.n_images)).collect();
    let point_rows: Vec<PointScoreRow> = data
        .ppgis
        .iter()
        .map(|p| {
            let (mean_pred, n_images, status) = match scored.get(p.point_id.as_str()) {
                Some(&(m, n)) => (Some(m), n, "scored"),
                None => (None, excluded.get(p.point_id.as_str()).copied().unwrap_or(0), "excluded"),
            };
            PointScoreRow {
                point_id: p.point_id.clone(),
                label: p.label,
                x: p.location.x,
                y: p.location.y,
                n_images,
                mean_pred,
                status: status.into(),
            }
        })
        .collect();
    write_csv(out, "point_scores.csv", &["point_id", "label", "x", "y", "n_images", "mean_pred", "status"], &point_rows, S)?;

    let agreement_rows: Vec<AgreementRow> = records
        .iter()
        .map(|r| AgreementRow {
            point_id: r.point_id.clone(),
            label: r.label,
            mean_pred: r.mean_pred,
            classification: r.classification.name().into(),
        })
        .collect();
    write_csv(out, "agreement.csv", &["point_id", "label", "mean_pred", "classification"], &agreement_rows, S)?;

    let rates: BTreeMap<Label, (f64, f64)> = if records.is_empty() {
        BTreeMap::new()
    } else {
        agreement_summary(&records).map_err(fail(S))?.into_iter().map(|s| (s.label, (s.strict_rate, s.moderate_rate))).collect()
    };
    let location: BTreeMap<&str, &PpgisPoint> = data.ppgis.iter().map(|p| (p.point_id.as_str(), p)).collect();
    let mut summary = Vec::new();
    for (k, label) in Label::ALL.into_iter().enumerate() {
        let mine: Vec<_> = buffers.scores.iter().filter(|s| s.label == label).collect();
        let values: Vec<f64> = mine.iter().map(|s| s.mean_pred).collect();
        let points: Vec<_> = mine.iter().map(|s| location[s.point_id.as_str()].location).collect();
        let seed = sub_seed(cfg.seed, seeds::MORAN).wrapping_add(k as u64);
        let spatial = PointIndex::build(points.clone()).ok();
        let moran = spatial
            .as_ref()
            .and_then(|ix| knn_weights(ix, cfg.knn, WeightScheme::KnnRowStandardized).ok())
            .and_then(|w| morans_i(&values, &w, cfg.moran_permutations, seed).ok());
        let hot = spatial.as_ref().and_then(|ix| getis_ord_gstar(&values, ix, cfg.knn).ok()).unwrap_or_default();
        let hot_rows: Vec<HotspotRow> = mine
            .iter()
            .zip(&points)
            .zip(&hot)
            .map(|((s, p), g)| HotspotRow {
                point_id: s.point_id.clone(),
                x: p.x,
                y: p.y,
                mean_pred: s.mean_pred,
                z: g.z,
                class: g.class.name().into(),
            })
            .collect();
        let name = format!("hotspots_{}.csv", label.name());
        write_csv(out, &name, &["point_id", "x", "y", "mean_pred", "z", "class"], &hot_rows, S)?;

        let d = describe(&values).ok();
        let (strict_rate, moderate_rate) = rates.get(&label).copied().unwrap_or((0.0, 0.0));
        summary.push(SummaryRow {
            label,
            n_points: data.ppgis.iter().filter(|p| p.label == label).count(),
            n_scored: values.len(),
            strict_rate,
            moderate_rate,
            mu: dist.mu,
            sigma: dist.sigma,
            score_mean: d.as_ref().map_or(f64::NAN, |d| d.mean),
            score_sd: d.as_ref().map_or(f64::NAN, |d| d.sd),
            score_min: d.as_ref().map_or(f64::NAN, |d| d.min),
            score_median: d.as_ref().map_or(f64::NAN, |d| d.median),
            score_max: d.as_ref().map_or(f64::NAN, |d| d.max),
            morans_i: moran.as_ref().map(|m| m.i),
            morans_expected: moran.as_ref().map(|m| m.expected),
            morans_z: moran.as_ref().map(|m| m.z),
            morans_p: moran.as_ref().and_then(|m| m.p_permutation),
        });
    }
    write_csv(out, "summary.csv", &SUMMARY_HEADER, &summary, S)?;
    Ok(records)
}

pub fn read_agreement(out: &Path, stage: Stage) -> Result<Vec<AgreementRecord>, PipelineError> {
    read_csv::<AgreementRow>(&out.join("agreement.csv"), stage)?
        .into_iter()
        .map(|r| r.record().ok_or_else(|| fail(stage)(format!("unknown classification {:?}", r.classification))))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContextRow {
    pub point_id: String,
    pub label: Label,
    pub classification: String,
    pub population: Option<f64>,
    pub noise_laeq: Option<f64>,
    pub traffic: f64,
    pub traffic_in_range: bool,
    pub speed: Option<f64>,
    pub urban: Option<f64>,
    pub suburban: Option<f64>,
    pub parks_recreation: Option<f64>,
    pub agricultural: Option<f64>,
    pub natural: Option<f64>,
    pub blue: Option<f64>,
}

pub const CONTEXT_HEADER: [&str; 14] = [
    "point_id",
    "label",
    "classification",
    "population",
    "noise_laeq",
    "traffic",
    "traffic_in_range",
    "speed",
    "urban",
    "suburban",
    "parks_recreation",
    "agricultural",
    "natural",
    "blue",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeasonRow {
    pub point_id: String,
    pub label: Label,
    pub classification: String,
    pub winter: f64,
    pub spring: f64,
    pub summer: f64,
    pub fall: f64,
    pub dominant: String,
    pub n_images: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContrastCsvRow {
    pub variable: String,
    #[serde(rename = "U")]
    pub u: f64,
    pub p_value: f64,
    pub p_display: String,
    pub n_agree: usize,
    pub n_disagree: usize,
    pub method: String,
    pub shapiro_p_agree: Option<f64>,
    pub shapiro_p_disagree: Option<f64>,
    pub normal: bool,
}

/// Context covariates of each classified point, agreement contrasts at both
/// thresholds, and the seasonal mix of nearby imagery.
pub fn cmd_context(cfg: &RunConfig, out: &Path) -> Result<Vec<ContextSample>, PipelineError> {
    const S: Stage = Stage::Context;
    let data = validated(cfg, S)?;
    let records = read_agreement(out, S)?;
    let i = &cfg.inputs;
    let e = |err: FormatError| fail(S)(fmt_err(err));
    let population = io::read_population_dir(&cfg.resolve(&i.population_dir)).map_err(e)?;
    let noise = i
        .noise
        .iter()
        .map(|p| io::read_ascii_grid(&cfg.resolve(p), LayerSemantic::NoiseLaeq))
        .collect::<Result<Vec<_>, _>>()
        .map_err(e)?;
    let segments = io::read_segments(&cfg.resolve(&i.segments)).map_err(e)?;
    let raw_cover = io::read_ascii_grid(&cfg.resolve(&i.land_cover), LayerSemantic::LandCoverCode).map_err(e)?;
    let legend = io::read_legend(&cfg.resolve(&i.legend)).map_err(e)?;
    let map = match &i.categories {
        Some(p) => LandUseCategoryMap::load(&cfg.resolve(p)).map_err(e)?,
        None => LandUseCategoryMap::default(),
    };
    let landuse = aggregate_corine(&raw_cover, &legend, &map).map_err(fail(S))?;
    let layers = ContextLayers { population: &population, noise: &noise, segments: &segments, landuse: &landuse };

    let location: BTreeMap<&str, &PpgisPoint> = data.ppgis.iter().map(|p| (p.point_id.as_str(), p)).collect();
    let points = records
        .iter()
        .map(|r| {
            location
                .get(r.point_id.as_str())
                .map(|p| p.location)
                .ok_or_else(|| fail(S)(format!("agreement.csv names unknown point {}", r.point_id)))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let samples: Vec<ContextSample> = records
        .par_iter()
        .zip(&points)
        .map(|(r, p)| context_sample(&r.point_id, p, &layers, cfg.buffer_radius_m, cfg.landuse_radius_m))
        .collect();

    let share = |s: &ContextSample, c: LandUseCategory| s.landuse.map(|l| l[c.index()]);
    let rows: Vec<ContextRow> = records
        .iter()
        .zip(&samples)
        .map(|(r, s)| ContextRow {
            point_id: r.point_id.clone(),
            label: r.label,
            classification: r.classification.name().into(),
            population: s.population,
            noise_laeq: s.noise_laeq,
            traffic: s.traffic,
            traffic_in_range: s.traffic_in_range,
            speed: s.speed,
            urban: share(s, LandUseCategory::Urban),
            suburban: share(s, LandUseCategory::Suburban),
            parks_recreation: share(s, LandUseCategory::ParksRecreation),
            agricultural: share(s, LandUseCategory::Agricultural),
            natural: share(s, LandUseCategory::Natural),
            blue: share(s, LandUseCategory::Blue),
        })
        .collect();
    write_csv(out, "context.csv", &CONTEXT_HEADER, &rows, S)?;

    for (mode, name) in [(ThresholdMode::Strict, "contrasts_strict.csv"), (ThresholdMode::Moderate, "contrasts_moderate.csv")] {
        let table = contrast_table(&samples, &records, mode, cfg.significance, sub_seed(cfg.seed, seeds::CONTRAST))
            .map_err(|err| fail(S)(format!("{name}: {err}")))?;
        let rows: Vec<ContrastCsvRow> = table
            .into_iter()
            .map(|r| ContrastCsvRow {
                variable: r.variable,
                u: r.u,
                p_value: r.p_value,
                p_display: r.p_display,
                n_agree: r.n_agree,
                n_disagree: r.n_disagree,
                method: r.method,
                shapiro_p_agree: r.shapiro_p_agree,
                shapiro_p_disagree: r.shapiro_p_disagree,
                normal: r.normal,
            })
            .collect();
        write_csv(out, name, &CONTRAST_HEADER, &rows, S)?;
    }

    let index = PointIndex::build(data.images.iter().map(|im| im.location).collect()).map_err(fail(S))?;
    let season_rows: Vec<SeasonRow> = records
        .iter()
        .zip(&points)
        .filter_map(|(r, p)| {
            let prof = season_profile(&r.point_id, p, &index, &data.images, cfg.buffer_radius_m).ok()?;
            Some(SeasonRow {
                point_id: r.point_id.clone(),
                label: r.label,
                classification: r.classification.name().into(),
                winter: prof.proportions[0],
                spring: prof.proportions[1],
                summer: prof.proportions[2],
                fall: prof.proportions[3],
                dominant: prof.dominant.name().into(),
                n_images: prof.n_images,
            })
        })
        .collect();
    let header = ["point_id", "label", "classification", "winter", "spring", "summer", "fall", "dominant", "n_images"];
    write_csv(out, "seasonality.csv", &header, &season_rows, S)?;
    Ok(samples)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config_sha256: String,
    pub seed: u64,
    pub files: Vec<ManifestEntry>,
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else {
            out.push(path.strip_prefix(root).expect("under root").to_path_buf());
        }
    }
    Ok(())
}

/// Hashes every file under `out` into `manifest.json`.
pub fn cmd_report(cfg: &RunConfig, out: &Path) -> Result<Manifest, PipelineError> {
    const S: Stage = Stage::Report;
    let mut files = Vec::new();
    collect_files(out, out, &mut files).map_err(|e| fail(S)(format!("{}: {e}", out.display())))?;
    let mut names: Vec<String> = files
        .iter()
        .map(|p| p.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/"))
        .filter(|n| n != MANIFEST_FILE)
        .collect();
    names.sort();
    let entries = names
        .into_iter()
        .map(|name| {
            let bytes = std::fs::read(out.join(&name)).map_err(|e| fail(S)(format!("{name}: {e}")))?;
            Ok(ManifestEntry { sha256: sha256_hex(&bytes), bytes: bytes.len() as u64, path: name })
        })
        .collect::<Result<Vec<_>, PipelineError>>()?;
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config_sha256: cfg.hash(),
        seed: cfg.seed,
        files: entries,
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    io::write_file(&out.join(MANIFEST_FILE), json).map_err(|e| fail(S)(fmt_err(e)))?;
    Ok(manifest)
}

/// Every stage in order.
pub fn cmd_run(cfg: &RunConfig, out: &Path) -> Result<Manifest, PipelineError> {
    cfg.check()?;
    validated(cfg, Stage::Validate)?;
    std::fs::create_dir_all(out).map_err(|e| fail(Stage::Report)(format!("{}: {e}", out.display())))?;
    cmd_train(cfg, out)?;
    cmd_align(cfg, out)?;
    cmd_context(cfg, out)?;
    cmd_report(cfg, out)
}

/// Reads any CSV written by a stage back into typed rows.
pub fn read_output<T: serde::de::DeserializeOwned>(out: &Path, name: &str) -> Result<Vec<T>, PipelineError> {
    read_csv(&out.join(name), Stage::Report)
}
