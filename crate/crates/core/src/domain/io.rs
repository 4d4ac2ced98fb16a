//! On-disk formats.
//!
//! | table            | format                                                        |
//! |------------------|---------------------------------------------------------------|
//! | ratings          | CSV `rater_id,image_id,raw_score`                             |
//! | images           | CSV `image_id,x,y,capture_year,capture_month`                 |
//! | features         | CSV `image_id,<class>...`, any segmentation class columns     |
//! | PPGIS points     | GeoJSON `Point` features, properties `point_id,label,comment` |
//! | street segments  | GeoJSON `LineString` features, properties `segment_id,traffic_volume,speed_limit` |
//! | rasters          | ESRI ASCII grid, one band per file                            |
//!
//! Feature tables may carry vehicle subclasses (`car`, `bus`, ...) instead of
//! `road_transport`; they are consolidated on read. Classes outside the
//! canonical eight are ignored.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use geojson::{Feature as GeoFeature, FeatureCollection, GeoJson, Geometry, JsonObject, JsonValue, Value};

use super::grid::{GridError, GridLayer, LayerSemantic};
use super::{
    FeatureVector, ImageRecord, Label, Point2, PpgisPoint, RatingRecord, SegmentAttributeSet, StreetSegment,
};
use crate::model::{consolidate_transport, RawSegmentation};

/// Value written for missing raster cells.
pub const NODATA: f64 = -9999.0;

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Grid { path: PathBuf, source: GridError },
}

impl FormatError {
    pub(crate) fn parse(path: &Path, message: impl Into<String>) -> Self {
        FormatError::Parse { path: path.to_path_buf(), message: message.into() }
    }
}

pub(crate) fn read_to_string(path: &Path) -> Result<String, FormatError> {
    fs::read_to_string(path).map_err(|source| FormatError::Io { path: path.to_path_buf(), source })
}

pub fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), FormatError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|source| FormatError::Io { path: parent.to_path_buf(), source })?;
        }
    }
    fs::write(path, contents).map_err(|source| FormatError::Io { path: path.to_path_buf(), source })
}

fn csv_reader(path: &Path) -> Result<csv::Reader<fs::File>, FormatError> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|source| FormatError::Csv { path: path.to_path_buf(), source })
}

/// Serializes rows with the `csv` crate into an in-memory buffer.
pub fn csv_to_string<T: serde::Serialize>(rows: impl IntoIterator<Item = T>) -> Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row)?;
    }
    let bytes = w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Writes a CSV with an explicit header, so empty tables still carry one.
pub fn write_csv<T: serde::Serialize>(path: &Path, header: &[&str], rows: &[T]) -> Result<(), FormatError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    let wrap = |source| FormatError::Csv { path: path.to_path_buf(), source };
    w.write_record(header).map_err(wrap)?;
    for row in rows {
        w.serialize(row).map_err(wrap)?;
    }
    let bytes = w.into_inner().map_err(|e| wrap(csv::Error::from(e.into_error())))?;
    write_file(path, bytes)
}

#[derive(serde::Deserialize, serde::Serialize)]
struct ImageRow {
    image_id: String,
    x: f64,
    y: f64,
    capture_year: i32,
    capture_month: u32,
}

pub fn read_ratings(path: &Path) -> Result<Vec<RatingRecord>, FormatError> {
    csv_reader(path)?
        .deserialize()
        .collect::<Result<_, _>>()
        .map_err(|source| FormatError::Csv { path: path.to_path_buf(), source })
}

pub fn write_ratings(path: &Path, ratings: &[RatingRecord]) -> Result<(), FormatError> {
    write_csv(path, &["rater_id", "image_id", "raw_score"], ratings)
}

pub fn read_images(path: &Path) -> Result<Vec<ImageRecord>, FormatError> {
    let rows: Vec<ImageRow> = csv_reader(path)?
        .deserialize()
        .collect::<Result<_, _>>()
        .map_err(|source| FormatError::Csv { path: path.to_path_buf(), source })?;
    Ok(rows
        .into_iter()
        .map(|r| ImageRecord {
            image_id: r.image_id,
            location: Point2::new(r.x, r.y),
            capture_year: r.capture_year,
            capture_month: r.capture_month,
        })
        .collect())
}

pub fn write_images(path: &Path, images: &[ImageRecord]) -> Result<(), FormatError> {
    let rows: Vec<ImageRow> = images
        .iter()
        .map(|i| ImageRow {
            image_id: i.image_id.clone(),
            x: i.location.x,
            y: i.location.y,
            capture_year: i.capture_year,
            capture_month: i.capture_month,
        })
        .collect();
    write_csv(path, &["image_id", "x", "y", "capture_year", "capture_month"], &rows)
}

/// Reads a segmentation table with arbitrary class columns.
pub fn read_segmentation(path: &Path) -> Result<Vec<(String, RawSegmentation)>, FormatError> {
    let mut reader = csv_reader(path)?;
    let wrap = |source| FormatError::Csv { path: path.to_path_buf(), source };
    let headers = reader.headers().map_err(wrap)?.clone();
    if headers.get(0) != Some("image_id") {
        return Err(FormatError::parse(path, "first column must be image_id"));
    }
    let mut out = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(wrap)?;
        let mut raw = RawSegmentation::new();
        for (name, field) in headers.iter().zip(record.iter()).skip(1) {
            if field.is_empty() {
                continue;
            }
            let v: f64 = field
                .parse()
                .map_err(|_| FormatError::parse(path, format!("row {}: {name} = {field:?} is not a number", line + 1)))?;
            raw.insert(name.to_string(), v);
        }
        out.push((record[0].to_string(), raw));
    }
    Ok(out)
}

pub fn read_features(path: &Path) -> Result<Vec<FeatureVector>, FormatError> {
    Ok(read_segmentation(path)?
        .into_iter()
        .map(|(id, raw)| consolidate_transport(&id, &raw))
        .collect())
}

/// Writes a segmentation table; columns are the union of class names in sorted order.
pub fn write_segmentation(path: &Path, rows: &[(String, RawSegmentation)]) -> Result<(), FormatError> {
    let mut classes: Vec<&str> = rows.iter().flat_map(|(_, r)| r.keys().map(String::as_str)).collect();
    classes.sort_unstable();
    classes.dedup();
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    let wrap = |source| FormatError::Csv { path: path.to_path_buf(), source };
    let mut header = vec!["image_id"];
    header.extend(&classes);
    w.write_record(&header).map_err(wrap)?;
    for (id, raw) in rows {
        let mut rec = vec![id.clone()];
        rec.extend(classes.iter().map(|c| raw.get(*c).map(|v| v.to_string()).unwrap_or_default()));
        w.write_record(&rec).map_err(wrap)?;
    }
    let bytes = w.into_inner().map_err(|e| wrap(csv::Error::from(e.into_error())))?;
    write_file(path, bytes)
}

pub fn write_features(path: &Path, features: &[FeatureVector]) -> Result<(), FormatError> {
    let rows: Vec<(String, RawSegmentation)> = features
        .iter()
        .map(|fv| {
            let raw = super::Feature::ALL.iter().map(|f| (f.name().to_string(), fv.get(*f))).collect();
            (fv.image_id.clone(), raw)
        })
        .collect();
    write_segmentation(path, &rows)
}

fn parse_geojson(path: &Path) -> Result<FeatureCollection, FormatError> {
    let text = read_to_string(path)?;
    match text.parse::<GeoJson>() {
        Ok(GeoJson::FeatureCollection(fc)) => Ok(fc),
        Ok(_) => Err(FormatError::parse(path, "expected a FeatureCollection")),
        Err(e) => Err(FormatError::parse(path, e.to_string())),
    }
}

fn property_string(props: Option<&JsonObject>, key: &str) -> Option<String> {
    match props?.get(key)? {
        JsonValue::String(s) => Some(s.clone()),
        JsonValue::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn property_f64(props: Option<&JsonObject>, key: &str) -> Option<f64> {
    props?.get(key)?.as_f64()
}

fn position(path: &Path, coords: &[f64]) -> Result<Point2, FormatError> {
    match coords {
        [x, y, ..] => Ok(Point2::new(*x, *y)),
        _ => Err(FormatError::parse(path, "position needs two coordinates")),
    }
}

pub fn read_ppgis(path: &Path) -> Result<Vec<PpgisPoint>, FormatError> {
    let fc = parse_geojson(path)?;
    fc.features
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let props = f.properties.as_ref();
            let location = match f.geometry.as_ref().map(|g| &g.value) {
                Some(Value::Point(c)) => position(path, c)?,
                _ => return Err(FormatError::parse(path, format!("feature {i} is not a Point"))),
            };
            let point_id = property_string(props, "point_id").unwrap_or_else(|| i.to_string());
            let label = property_string(props, "label")
                .and_then(|l| Label::parse(&l))
                .ok_or_else(|| FormatError::parse(path, format!("feature {i}: label must be attractive or unattractive")))?;
            let comment = property_string(props, "comment");
            Ok(PpgisPoint { point_id, location, label, comment })
        })
        .collect()
}

fn feature_collection_string(features: Vec<GeoFeature>) -> String {
    let fc = FeatureCollection { bbox: None, features, foreign_members: None };
    let mut s = GeoJson::FeatureCollection(fc).to_string();
    s.push('\n');
    s
}

pub fn write_ppgis(path: &Path, points: &[PpgisPoint]) -> Result<(), FormatError> {
    let features = points
        .iter()
        .map(|p| {
            let mut props = JsonObject::new();
            props.insert("point_id".into(), p.point_id.clone().into());
            props.insert("label".into(), p.label.name().into());
            if let Some(c) = &p.comment {
                props.insert("comment".into(), c.clone().into());
            }
            GeoFeature {
                bbox: None,
                geometry: Some(Geometry::new(Value::Point(vec![p.location.x, p.location.y]))),
                id: None,
                properties: Some(props),
                foreign_members: None,
            }
        })
        .collect();
    write_file(path, feature_collection_string(features))
}

pub fn read_segments(path: &Path) -> Result<SegmentAttributeSet, FormatError> {
    let fc = parse_geojson(path)?;
    let segments = fc
        .features
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let props = f.properties.as_ref();
            let geometry = match f.geometry.as_ref().map(|g| &g.value) {
                Some(Value::LineString(coords)) => {
                    coords.iter().map(|c| position(path, c)).collect::<Result<Vec<_>, _>>()?
                }
                _ => return Err(FormatError::parse(path, format!("feature {i} is not a LineString"))),
            };
            let need = |key: &str| {
                property_f64(props, key)
                    .ok_or_else(|| FormatError::parse(path, format!("feature {i}: missing numeric {key}")))
            };
            Ok(StreetSegment {
                segment_id: property_string(props, "segment_id").unwrap_or_else(|| i.to_string()),
                geometry,
                traffic_volume: need("traffic_volume")?,
                speed_limit: need("speed_limit")?,
            })
        })
        .collect::<Result<_, _>>()?;
    Ok(SegmentAttributeSet { segments })
}

pub fn write_segments(path: &Path, set: &SegmentAttributeSet) -> Result<(), FormatError> {
    let features = set
        .segments
        .iter()
        .map(|s| {
            let mut props = JsonObject::new();
            props.insert("segment_id".into(), s.segment_id.clone().into());
            props.insert("traffic_volume".into(), s.traffic_volume.into());
            props.insert("speed_limit".into(), s.speed_limit.into());
            GeoFeature {
                bbox: None,
                geometry: Some(Geometry::new(Value::LineString(
                    s.geometry.iter().map(|p| vec![p.x, p.y]).collect(),
                ))),
                id: None,
                properties: Some(props),
                foreign_members: None,
            }
        })
        .collect();
    write_file(path, feature_collection_string(features))
}

/// Parses one band of an ESRI ASCII grid. `xllcenter`/`yllcenter` headers
/// are converted to corner coordinates.
pub fn parse_ascii_grid(path: &Path, text: &str, semantic: LayerSemantic) -> Result<GridLayer, FormatError> {
    let mut tokens = text.split_ascii_whitespace().peekable();
    let mut header: BTreeMap<String, f64> = BTreeMap::new();
    while let Some(tok) = tokens.peek() {
        if tok.chars().next().is_some_and(|c| c.is_ascii_alphabetic()) {
            let key = tokens.next().unwrap_or_default().to_ascii_lowercase();
            let value = tokens
                .next()
                .and_then(|v| v.parse::<f64>().ok())
                .ok_or_else(|| FormatError::parse(path, format!("header {key} lacks a numeric value")))?;
            header.insert(key, value);
        } else {
            break;
        }
    }
    let get = |k: &str| header.get(k).copied();
    let ncols = get("ncols").ok_or_else(|| FormatError::parse(path, "missing ncols"))? as usize;
    let nrows = get("nrows").ok_or_else(|| FormatError::parse(path, "missing nrows"))? as usize;
    let cell_size = get("cellsize").ok_or_else(|| FormatError::parse(path, "missing cellsize"))?;
    let origin = match (get("xllcorner"), get("yllcorner"), get("xllcenter"), get("yllcenter")) {
        (Some(x), Some(y), _, _) => Point2::new(x, y),
        (_, _, Some(x), Some(y)) => Point2::new(x - 0.5 * cell_size, y - 0.5 * cell_size),
        _ => return Err(FormatError::parse(path, "missing xllcorner/yllcorner")),
    };
    let nodata = get("nodata_value");
    let mut values = Vec::with_capacity(nrows * ncols);
    for tok in tokens {
        let v: f64 = tok.parse().map_err(|_| FormatError::parse(path, format!("bad cell value {tok:?}")))?;
        values.push(if Some(v) == nodata { f64::NAN } else { v });
    }
    if values.len() != nrows * ncols {
        return Err(FormatError::parse(path, format!("expected {} cells, found {}", nrows * ncols, values.len())));
    }
    GridLayer::new(origin, cell_size, nrows, ncols, vec![values], semantic)
        .map_err(|source| FormatError::Grid { path: path.to_path_buf(), source })
}

pub fn read_ascii_grid(path: &Path, semantic: LayerSemantic) -> Result<GridLayer, FormatError> {
    parse_ascii_grid(path, &read_to_string(path)?, semantic)
}

pub fn ascii_grid_string(layer: &GridLayer, slab: usize) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "ncols {}", layer.ncols);
    let _ = writeln!(s, "nrows {}", layer.nrows);
    let _ = writeln!(s, "xllcorner {}", layer.origin.x);
    let _ = writeln!(s, "yllcorner {}", layer.origin.y);
    let _ = writeln!(s, "cellsize {}", layer.cell_size);
    let _ = writeln!(s, "NODATA_value {NODATA}");
    for row in 0..layer.nrows {
        let line: Vec<String> = (0..layer.ncols)
            .map(|col| match layer.value(slab, row, col) {
                Some(v) => v.to_string(),
                None => NODATA.to_string(),
            })
            .collect();
        s.push_str(&line.join(" "));
        s.push('\n');
    }
    s
}

pub fn write_ascii_grid(path: &Path, layer: &GridLayer, slab: usize) -> Result<(), FormatError> {
    write_file(path, ascii_grid_string(layer, slab))
}

/// File name of hour `h` inside a population presence directory.
pub fn presence_file_name(hour: usize) -> String {
    format!("presence_{hour:02}.asc")
}

/// Reads `presence_00.asc` .. `presence_23.asc` into a 24-slab layer.
pub fn read_population_dir(dir: &Path) -> Result<GridLayer, FormatError> {
    let layers = (0..24)
        .map(|h| read_ascii_grid(&dir.join(presence_file_name(h)), LayerSemantic::NoiseLaeq))
        .collect::<Result<Vec<_>, _>>()?;
    GridLayer::stack(layers, LayerSemantic::PopulationPresenceHourly)
        .map_err(|source| FormatError::Grid { path: dir.to_path_buf(), source })
}

pub fn write_population_dir(dir: &Path, layer: &GridLayer) -> Result<(), FormatError> {
    for h in 0..layer.slabs.len() {
        write_ascii_grid(&dir.join(presence_file_name(h)), layer, h)?;
    }
    Ok(())
}

/// Reads a `code,class_name` legend for a land-cover code raster.
pub fn read_legend(path: &Path) -> Result<BTreeMap<i64, String>, FormatError> {
    #[derive(serde::Deserialize)]
    struct Row {
        code: i64,
        class_name: String,
    }
    let rows: Vec<Row> = csv_reader(path)?
        .deserialize()
        .collect::<Result<_, _>>()
        .map_err(|source| FormatError::Csv { path: path.to_path_buf(), source })?;
    Ok(rows.into_iter().map(|r| (r.code, r.class_name)).collect())
}

pub fn write_legend(path: &Path, legend: &BTreeMap<i64, String>) -> Result<(), FormatError> {
    let rows: Vec<(i64, &str)> = legend.iter().map(|(c, n)| (*c, n.as_str())).collect();
    write_csv(path, &["code", "class_name"], &rows)
}
