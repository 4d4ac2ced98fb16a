//! Spatial indexing, neighbour weights, Moran's I and Getis-Ord G*.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::Point2;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeoError {
    #[error("point {0} has non-finite coordinates")]
    NonFinitePoint(usize),
    #[error("cell size must be positive and finite, got {0}")]
    CellSize(f64),
    #[error("need more than {k} points, got {n}")]
    TooFewPoints { n: usize, k: usize },
    #[error("{values} values for {points} points")]
    LengthMismatch { values: usize, points: usize },
    #[error("values have zero variance")]
    DegenerateVariance,
    #[error("weights sum to zero")]
    EmptyWeights,
    #[error("value {0} is not finite")]
    NonFiniteValue(usize),
}

/// Uniform-grid hash over a fixed point set. Ids are insertion indices.
#[derive(Clone, Debug)]
pub struct PointIndex {
    points: Vec<Point2>,
    cell_size: f64,
    cells: HashMap<(i64, i64), Vec<usize>>,
    lo: (i64, i64),
    hi: (i64, i64),
}

impl PointIndex {
    pub fn new(points: Vec<Point2>, cell_size: f64) -> Result<Self, GeoError> {
        if !(cell_size > 0.0 && cell_size.is_finite()) {
            return Err(GeoError::CellSize(cell_size));
        }
        if let Some(i) = points.iter().position(|p| !p.is_finite()) {
            return Err(GeoError::NonFinitePoint(i));
        }
        let mut cells: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        let (mut lo, mut hi) = ((i64::MAX, i64::MAX), (i64::MIN, i64::MIN));
        for (i, p) in points.iter().enumerate() {
            let c = Self::key(cell_size, p);
            lo = (lo.0.min(c.0), lo.1.min(c.1));
            hi = (hi.0.max(c.0), hi.1.max(c.1));
            cells.entry(c).or_default().push(i);
        }
        Ok(Self { points, cell_size, cells, lo, hi })
    }

    /// Picks a cell size giving roughly two points per occupied cell.
    pub fn build(points: Vec<Point2>) -> Result<Self, GeoError> {
        let finite = points.iter().all(Point2::is_finite);
        let (mut w, mut h) = (0.0f64, 0.0f64);
        if finite && !points.is_empty() {
            let fold = |f: fn(f64, f64) -> f64, g: fn(&Point2) -> f64, init| points.iter().map(g).fold(init, f);
            w = fold(f64::max, |p| p.x, f64::MIN) - fold(f64::min, |p| p.x, f64::MAX);
            h = fold(f64::max, |p| p.y, f64::MIN) - fold(f64::min, |p| p.y, f64::MAX);
        }
        // a degenerate axis gets a thin band so collinear sets still hash sensibly
        let band = (w.max(h) / points.len().max(1) as f64).max(1e-9);
        let area = w.max(band) * h.max(band);
        let size = (2.0 * area / points.len().max(1) as f64).sqrt();
        let size = if size.is_finite() && size > 0.0 { size.max(w.max(h) * 1e-6).max(1e-9) } else { 1.0 };
        Self::new(points, size)
    }

    fn key(cell_size: f64, p: &Point2) -> (i64, i64) {
        ((p.x / cell_size).floor() as i64, (p.y / cell_size).floor() as i64)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point2] {
        &self.points
    }

    pub fn point(&self, id: usize) -> Point2 {
        self.points[id]
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    /// Ids within `radius` of `center` (boundary included), ascending.
    pub fn radius_query(&self, center: &Point2, radius: f64) -> Vec<usize> {
        if self.points.is_empty() || !(radius >= 0.0) {
            return Vec::new();
        }
        let r2 = radius * radius;
        let (x0, y0) = Self::key(self.cell_size, &Point2::new(center.x - radius, center.y - radius));
        let (x1, y1) = Self::key(self.cell_size, &Point2::new(center.x + radius, center.y + radius));
        let mut out = Vec::new();
        for cx in x0.max(self.lo.0)..=x1.min(self.hi.0) {
            for cy in y0.max(self.lo.1)..=y1.min(self.hi.1) {
                if let Some(ids) = self.cells.get(&(cx, cy)) {
                    out.extend(ids.iter().copied().filter(|&i| self.points[i].distance_squared(center) <= r2));
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// The `k` nearest ids with distances, ordered by distance then id.
    pub fn knn(&self, center: &Point2, k: usize) -> Vec<(usize, f64)> {
        self.knn_filtered(center, k, |_| true)
    }

    /// Like [`knn`](Self::knn) but skips `id` itself.
    pub fn knn_of(&self, id: usize, k: usize) -> Vec<(usize, f64)> {
        self.knn_filtered(&self.points[id], k, |j| j != id)
    }

    fn knn_filtered(&self, center: &Point2, k: usize, keep: impl Fn(usize) -> bool) -> Vec<(usize, f64)> {
        if k == 0 || self.points.is_empty() {
            return Vec::new();
        }
        let c = Self::key(self.cell_size, center);
        let max_ring = [c.0 - self.lo.0, self.hi.0 - c.0, c.1 - self.lo.1, self.hi.1 - c.1]
            .into_iter()
            .max()
            .unwrap_or(0)
            .max(0);
        let mut cand: Vec<(f64, usize)> = Vec::new();
        for ring in 0..=max_ring {
            // perimeter cells of the ring, clipped to the occupied bounds
            for cx in (c.0 - ring).max(self.lo.0)..=(c.0 + ring).min(self.hi.0) {
                let ys: Vec<i64> = if (cx - c.0).abs() == ring {
                    ((c.1 - ring).max(self.lo.1)..=(c.1 + ring).min(self.hi.1)).collect()
                } else {
                    [c.1 - ring, c.1 + ring].into_iter().filter(|y| (self.lo.1..=self.hi.1).contains(y)).collect()
                };
                for cy in ys {
                    if let Some(ids) = self.cells.get(&(cx, cy)) {
                        cand.extend(
                            ids.iter()
                                .filter(|&&i| keep(i))
                                .map(|&i| (self.points[i].distance_squared(center), i)),
                        );
                    }
                }
            }
            if cand.len() >= k {
                cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                cand.truncate(k);
                // anything unseen is at least ring * cell_size away
                let reach = ring as f64 * self.cell_size;
                if cand[k - 1].0 < reach * reach {
                    break;
                }
            }
        }
        cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        cand.truncate(k);
        cand.into_iter().map(|(d2, i)| (i, d2.sqrt())).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightScheme {
    /// 1 for each of the k nearest neighbours.
    KnnBinary,
    /// 1/k for each of the k nearest neighbours.
    KnnRowStandardized,
    /// Binary k nearest neighbours plus the point itself.
    KnnPlusSelf,
}

/// Sparse spatial weights; row `i` lists `(j, w_ij)` by ascending `j`.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightMatrix {
    pub scheme: WeightScheme,
    rows: Vec<Vec<(usize, f64)>>,
}

impl WeightMatrix {
    pub fn from_rows(scheme: WeightScheme, mut rows: Vec<Vec<(usize, f64)>>) -> Self {
        for r in &mut rows {
            r.sort_by_key(|e| e.0);
        }
        Self { scheme, rows }
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn dense(&self) -> Vec<Vec<f64>> {
        let n = self.n();
        let mut d = vec![vec![0.0; n]; n];
        for (i, r) in self.rows.iter().enumerate() {
            for &(j, w) in r {
                d[i][j] += w;
            }
        }
        d
    }

    pub fn s0(&self) -> f64 {
        self.rows.iter().flatten().map(|e| e.1).sum()
    }

    fn column_sums(&self) -> Vec<f64> {
        let mut c = vec![0.0; self.n()];
        for &(j, w) in self.rows.iter().flatten() {
            c[j] += w;
        }
        c
    }

    /// Half the sum over pairs of `(w_ij + w_ji)^2`.
    pub fn s1(&self) -> f64 {
        let mut s = 0.0;
        for (i, r) in self.rows.iter().enumerate() {
            for &(j, w) in r {
                // a one-sided entry also stands in for its unvisited mirror
                let back = self.weight(j, i);
                s += if back == 0.0 { w * w } else { (w + back).powi(2) / 2.0 };
            }
        }
        s
    }

    pub fn s2(&self) -> f64 {
        let cols = self.column_sums();
        self.rows
            .iter()
            .zip(cols)
            .map(|(r, c)| (r.iter().map(|e| e.1).sum::<f64>() + c).powi(2))
            .sum()
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.rows[i].binary_search_by_key(&j, |e| e.0).map_or(0.0, |k| self.rows[i][k].1)
    }
}

/// k-nearest-neighbour weights for every indexed point.
pub fn knn_weights(index: &PointIndex, k: usize, scheme: WeightScheme) -> Result<WeightMatrix, GeoError> {
    let n = index.len();
    if k == 0 || n <= k {
        return Err(GeoError::TooFewPoints { n, k });
    }
    let rows = (0..n)
        .into_par_iter()
        .map(|i| {
            let nn = index.knn_of(i, k);
            let mut row: Vec<(usize, f64)> = match scheme {
                WeightScheme::KnnBinary | WeightScheme::KnnPlusSelf => nn.iter().map(|&(j, _)| (j, 1.0)).collect(),
                WeightScheme::KnnRowStandardized => nn.iter().map(|&(j, _)| (j, 1.0 / k as f64)).collect(),
            };
            if scheme == WeightScheme::KnnPlusSelf {
                row.push((i, 1.0));
            }
            row
        })
        .collect();
    Ok(WeightMatrix::from_rows(scheme, rows))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MoranResult {
    pub i: f64,
    pub expected: f64,
    pub variance: f64,
    /// Under the normality assumption.
    pub z: f64,
    /// Two-sided permutation p-value; `None` with zero permutations.
    pub p_permutation: Option<f64>,
    pub permutations: usize,
}

pub const DEFAULT_PERMUTATIONS: usize = 999;

fn check_values(values: &[f64], n: usize) -> Result<(), GeoError> {
    if values.len() != n {
        return Err(GeoError::LengthMismatch { values: values.len(), points: n });
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(GeoError::NonFiniteValue(i));
    }
    Ok(())
}

fn moran_statistic(z: &[f64], w: &WeightMatrix, s0: f64, m2: f64) -> f64 {
    let cross: f64 = (0..z.len())
        .map(|i| z[i] * w.row(i).iter().map(|&(j, wij)| wij * z[j]).sum::<f64>())
        .sum();
    z.len() as f64 / s0 * cross / m2
}

/// Global Moran's I with a normal-approximation z and a seeded two-sided
/// permutation test. Permutation `p` draws from its own ChaCha stream.
pub fn morans_i(values: &[f64], w: &WeightMatrix, permutations: usize, seed: u64) -> Result<MoranResult, GeoError> {
    let n = w.n();
    check_values(values, n)?;
    if n < 3 {
        return Err(GeoError::TooFewPoints { n, k: 2 });
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let z: Vec<f64> = values.iter().map(|v| v - mean).collect();
    let m2: f64 = z.iter().map(|v| v * v).sum();
    if m2 == 0.0 {
        return Err(GeoError::DegenerateVariance);
    }
    let s0 = w.s0();
    if s0 == 0.0 {
        return Err(GeoError::EmptyWeights);
    }
    let nf = n as f64;
    let i = moran_statistic(&z, w, s0, m2);
    let expected = -1.0 / (nf - 1.0);
    let variance = (nf * nf * w.s1() - nf * w.s2() + 3.0 * s0 * s0) / ((nf * nf - 1.0) * s0 * s0) - expected * expected;
    let z_score = (i - expected) / variance.sqrt();

    let p_permutation = (permutations > 0).then(|| {
        let observed = (i - expected).abs();
        let extreme = (0..permutations)
            .into_par_iter()
            .filter(|&p| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(p as u64);
                let mut zp = z.clone();
                zp.shuffle(&mut rng);
                (moran_statistic(&zp, w, s0, m2) - expected).abs() >= observed - 1e-12 * observed.max(1.0)
            })
            .count();
        (1 + extreme) as f64 / (permutations + 1) as f64
    });
    Ok(MoranResult { i, expected, variance, z: z_score, p_permutation, permutations })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HotspotClass {
    Hot,
    Cold,
    NotSignificant,
}

impl HotspotClass {
    pub fn name(self) -> &'static str {
        match self {
            HotspotClass::Hot => "hot",
            HotspotClass::Cold => "cold",
            HotspotClass::NotSignificant => "not_significant",
        }
    }
}

pub const HOTSPOT_Z: f64 = 1.96;
pub const GSTAR_NEIGHBOURS: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GStar {
    pub z: f64,
    pub class: HotspotClass,
}

/// Local G* z-scores for arbitrary weights, self weight included as given.
pub fn gstar_with_weights(values: &[f64], w: &WeightMatrix) -> Result<Vec<GStar>, GeoError> {
    let n = w.n();
    check_values(values, n)?;
    if n < 2 {
        return Err(GeoError::TooFewPoints { n, k: 1 });
    }
    let nf = n as f64;
    let mean = values.iter().sum::<f64>() / nf;
    let s = (values.iter().map(|v| v * v).sum::<f64>() / nf - mean * mean).max(0.0).sqrt();
    if s == 0.0 {
        return Err(GeoError::DegenerateVariance);
    }
    Ok((0..n)
        .map(|i| {
            let row = w.row(i);
            let wi: f64 = row.iter().map(|e| e.1).sum();
            let s1i: f64 = row.iter().map(|e| e.1 * e.1).sum();
            let lag: f64 = row.iter().map(|&(j, wij)| wij * values[j]).sum();
            let z = (lag - mean * wi) / (s * ((nf * s1i - wi * wi) / (nf - 1.0)).sqrt());
            let class = if z >= HOTSPOT_Z {
                HotspotClass::Hot
            } else if z <= -HOTSPOT_Z {
                HotspotClass::Cold
            } else {
                HotspotClass::NotSignificant
            };
            GStar { z, class }
        })
        .collect())
}

/// G* over binary weights on the `k` nearest neighbours plus self.
pub fn getis_ord_gstar(values: &[f64], index: &PointIndex, k: usize) -> Result<Vec<GStar>, GeoError> {
    let n = index.len();
    if n <= k + 1 {
        return Err(GeoError::TooFewPoints { n, k: k + 1 });
    }
    gstar_with_weights(values, &knn_weights(index, k, WeightScheme::KnnPlusSelf)?)
}
