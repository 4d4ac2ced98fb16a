//! Regular raster layers in planar coordinates.

use serde::{Deserialize, Serialize};

use super::Point2;

/// What the cell values of a [`GridLayer`] mean.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerSemantic {
    /// Percentage of people present, one slab per hour of the day.
    PopulationPresenceHourly,
    /// LAeq noise level in dB.
    NoiseLaeq,
    /// Aggregated land-use category index (see `context::LandUseCategory`).
    LandUseClass,
    /// Raw land-cover codes, resolved through a legend.
    LandCoverCode,
}

impl LayerSemantic {
    pub fn required_slabs(self) -> Option<usize> {
        match self {
            LayerSemantic::PopulationPresenceHourly => Some(24),
            _ => Some(1),
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum GridError {
    #[error("cell size must be positive, got {0}")]
    CellSize(f64),
    #[error("origin must be finite")]
    Origin,
    #[error("slab {slab} has {got} values, expected {expected}")]
    NotRectangular { slab: usize, got: usize, expected: usize },
    #[error("{semantic:?} layers need {expected} slabs, got {got}")]
    SlabCount { semantic: LayerSemantic, expected: usize, got: usize },
    #[error("slabs differ in shape")]
    ShapeMismatch,
}

/// A rectangular raster. Row 0 is the northern edge, as in ESRI ASCII grids.
/// Missing cells hold `NaN`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridLayer {
    /// Lower-left corner of the grid.
    pub origin: Point2,
    pub cell_size: f64,
    pub nrows: usize,
    pub ncols: usize,
    /// One row-major slab per band.
    pub slabs: Vec<Vec<f64>>,
    pub semantic: LayerSemantic,
}

impl GridLayer {
    pub fn new(
        origin: Point2,
        cell_size: f64,
        nrows: usize,
        ncols: usize,
        slabs: Vec<Vec<f64>>,
        semantic: LayerSemantic,
    ) -> Result<Self, GridError> {
        if !(cell_size > 0.0 && cell_size.is_finite()) {
            return Err(GridError::CellSize(cell_size));
        }
        if !origin.is_finite() {
            return Err(GridError::Origin);
        }
        if let Some(expected) = semantic.required_slabs() {
            if slabs.len() != expected {
                return Err(GridError::SlabCount { semantic, expected, got: slabs.len() });
            }
        }
        for (slab, values) in slabs.iter().enumerate() {
            if values.len() != nrows * ncols {
                return Err(GridError::NotRectangular { slab, got: values.len(), expected: nrows * ncols });
            }
        }
        Ok(Self { origin, cell_size, nrows, ncols, slabs, semantic })
    }

    /// Single-slab layer filled with `fill`.
    pub fn filled(
        origin: Point2,
        cell_size: f64,
        nrows: usize,
        ncols: usize,
        fill: f64,
        semantic: LayerSemantic,
    ) -> Result<Self, GridError> {
        let n = semantic.required_slabs().unwrap_or(1);
        Self::new(origin, cell_size, nrows, ncols, vec![vec![fill; nrows * ncols]; n], semantic)
    }

    /// Stacks single-slab layers of identical geometry into one multi-slab layer.
    pub fn stack(layers: Vec<GridLayer>, semantic: LayerSemantic) -> Result<Self, GridError> {
        let first = layers.first().ok_or(GridError::SlabCount {
            semantic,
            expected: semantic.required_slabs().unwrap_or(1),
            got: 0,
        })?;
        let (origin, cell_size, nrows, ncols) = (first.origin, first.cell_size, first.nrows, first.ncols);
        if layers
            .iter()
            .any(|l| l.origin != origin || l.cell_size != cell_size || l.nrows != nrows || l.ncols != ncols)
        {
            return Err(GridError::ShapeMismatch);
        }
        let slabs = layers.into_iter().flat_map(|l| l.slabs).collect();
        Self::new(origin, cell_size, nrows, ncols, slabs, semantic)
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.ncols + col
    }

    pub fn value(&self, slab: usize, row: usize, col: usize) -> Option<f64> {
        let v = self.slabs[slab][self.index(row, col)];
        (!v.is_nan()).then_some(v)
    }

    pub fn set(&mut self, slab: usize, row: usize, col: usize, value: f64) {
        let i = self.index(row, col);
        self.slabs[slab][i] = value;
    }

    /// `(x_min, y_min, x_max, y_max)` of a cell.
    pub fn cell_bounds(&self, row: usize, col: usize) -> (f64, f64, f64, f64) {
        let x0 = self.origin.x + col as f64 * self.cell_size;
        let y0 = self.origin.y + (self.nrows - 1 - row) as f64 * self.cell_size;
        (x0, y0, x0 + self.cell_size, y0 + self.cell_size)
    }

    pub fn cell_center(&self, row: usize, col: usize) -> Point2 {
        let (x0, y0, x1, y1) = self.cell_bounds(row, col);
        Point2::new(0.5 * (x0 + x1), 0.5 * (y0 + y1))
    }

    /// Cell containing `p`, if any. Points on a shared edge go to the
    /// cell to the east / south.
    pub fn cell_at(&self, p: &Point2) -> Option<(usize, usize)> {
        let cx = ((p.x - self.origin.x) / self.cell_size).floor();
        let ry = ((p.y - self.origin.y) / self.cell_size).floor();
        if cx < 0.0 || ry < 0.0 || cx >= self.ncols as f64 || ry >= self.nrows as f64 {
            return None;
        }
        Some((self.nrows - 1 - ry as usize, cx as usize))
    }

    /// Inclusive row/column window covering the axis-aligned box around a disk.
    fn window(&self, center: &Point2, radius: f64) -> Option<(usize, usize, usize, usize)> {
        let cs = self.cell_size;
        let col_lo = ((center.x - radius - self.origin.x) / cs).floor().max(0.0);
        let col_hi = ((center.x + radius - self.origin.x) / cs).floor().min(self.ncols as f64 - 1.0);
        let ry_lo = ((center.y - radius - self.origin.y) / cs).floor().max(0.0);
        let ry_hi = ((center.y + radius - self.origin.y) / cs).floor().min(self.nrows as f64 - 1.0);
        if col_lo > col_hi || ry_lo > ry_hi || self.nrows == 0 || self.ncols == 0 {
            return None;
        }
        let row_lo = self.nrows - 1 - ry_hi as usize;
        let row_hi = self.nrows - 1 - ry_lo as usize;
        Some((row_lo, row_hi, col_lo as usize, col_hi as usize))
    }

    /// Cells whose square overlaps the closed disk, in row-major order.
    pub fn cells_intersecting_disk(&self, center: &Point2, radius: f64) -> Vec<(usize, usize)> {
        let Some((r0, r1, c0, c1)) = self.window(center, radius) else {
            return Vec::new();
        };
        let r2 = radius * radius;
        let mut out = Vec::new();
        for row in r0..=r1 {
            for col in c0..=c1 {
                let (x0, y0, x1, y1) = self.cell_bounds(row, col);
                let dx = center.x - center.x.clamp(x0, x1);
                let dy = center.y - center.y.clamp(y0, y1);
                if dx * dx + dy * dy <= r2 {
                    out.push((row, col));
                }
            }
        }
        out
    }

    /// Cells whose center lies within the closed disk, in row-major order.
    pub fn cells_with_center_within(&self, center: &Point2, radius: f64) -> Vec<(usize, usize)> {
        let Some((r0, r1, c0, c1)) = self.window(center, radius + self.cell_size) else {
            return Vec::new();
        };
        let r2 = radius * radius;
        let mut out = Vec::new();
        for row in r0..=r1 {
            for col in c0..=c1 {
                if self.cell_center(row, col).distance_squared(center) <= r2 {
                    out.push((row, col));
                }
            }
        }
        out
    }
}
