//! Pooling grids with movable interior borders.
//!
//! A grid splits a `width x height` raster into `k_cols x k_rows` cells.
//! Borders are real-valued; pixel membership uses half-open spans of the
//! discretized (integer) borders, so every pixel lands in exactly one cell.
//! Outer borders are pinned to 0 and the image extent and never move.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Half-up rounding; the pixel convention used everywhere in this crate.
#[inline]
pub(crate) fn round_half_up(x: f64) -> f64 {
    (x + 0.5).floor()
}

/// Which axis a border belongs to. `Col` borders split the width.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Axis {
    Col,
    Row,
}

/// A border named by axis and index into that axis' border array.
/// Index 0 and the last index are the fixed outer borders.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Border {
    pub axis: Axis,
    pub index: usize,
}

impl Border {
    pub fn col(index: usize) -> Self {
        Border { axis: Axis::Col, index }
    }

    pub fn row(index: usize) -> Self {
        Border { axis: Axis::Row, index }
    }
}

/// Interior border displacements, one per movable border of each axis.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct OffsetVector {
    pub col: Vec<f64>,
    pub row: Vec<f64>,
}

impl OffsetVector {
    pub fn new(col: Vec<f64>, row: Vec<f64>) -> Self {
        OffsetVector { col, row }
    }

    /// All-zero offsets for a `k_cols x k_rows` grid.
    pub fn zeros(k_cols: usize, k_rows: usize) -> Self {
        OffsetVector {
            col: vec![0.0; k_cols.saturating_sub(1)],
            row: vec![0.0; k_rows.saturating_sub(1)],
        }
    }

    pub fn len(&self) -> usize {
        self.col.len() + self.row.len()
    }

    pub fn is_empty(&self) -> bool {
        self.col.is_empty() && self.row.is_empty()
    }
}

/// What the clamp pass did: one flag per movable border, `true` if the
/// requested position overpassed a neighbor and was pulled back.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ClampReport {
    pub col_overpassed: Vec<bool>,
    pub row_overpassed: Vec<bool>,
}

impl ClampReport {
    pub fn overpass_count(&self) -> usize {
        self.col_overpassed.iter().filter(|&&f| f).count()
            + self.row_overpassed.iter().filter(|&&f| f).count()
    }

    pub fn total_movable(&self) -> usize {
        self.col_overpassed.len() + self.row_overpassed.len()
    }

    /// Overpassed share of movable borders; 0 when nothing is movable.
    pub fn fraction(&self) -> f64 {
        let total = self.total_movable();
        if total == 0 {
            0.0
        } else {
            self.overpass_count() as f64 / total as f64
        }
    }
}

#[derive(Serialize, Deserialize)]
struct GridWire {
    w: usize,
    h: usize,
    cols: Vec<f64>,
    rows: Vec<f64>,
}

/// A pooling grid. Invariant: border arrays start at 0, end at the exact
/// image extent, and adjacent borders sit at least one pixel apart.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridWire", into = "GridWire")]
pub struct PoolGrid {
    width: usize,
    height: usize,
    col_borders: Vec<f64>,
    row_borders: Vec<f64>,
}

impl From<PoolGrid> for GridWire {
    fn from(g: PoolGrid) -> GridWire {
        GridWire {
            w: g.width,
            h: g.height,
            cols: g.col_borders,
            rows: g.row_borders,
        }
    }
}

impl TryFrom<GridWire> for PoolGrid {
    type Error = Error;

    fn try_from(w: GridWire) -> Result<PoolGrid> {
        PoolGrid::new(w.w, w.h, w.cols, w.rows)
    }
}

/// Minimum border gap accepted by validation. Clamp arithmetic on real
/// borders can leave gaps a few ulps under one pixel; the slack absorbs
/// that while still rejecting genuinely degenerate cells. Discretized
/// grids carry exact integer gaps and never need it.
pub(crate) const MIN_GAP: f64 = 1.0 - 1e-9;

fn validate_axis(extent: usize, borders: &[f64], axis: &str) -> Result<()> {
    if borders.len() < 2 {
        return Err(Error::InvalidBorders(format!(
            "{axis} needs at least two borders"
        )));
    }
    if borders[0] != 0.0 {
        return Err(Error::InvalidBorders(format!(
            "first {axis} border must be 0, got {}",
            borders[0]
        )));
    }
    let last = *borders.last().unwrap();
    if last != extent as f64 {
        return Err(Error::InvalidBorders(format!(
            "last {axis} border must equal the extent {extent}, got {last}"
        )));
    }
    for pair in borders.windows(2) {
        if !(pair[1] - pair[0] >= MIN_GAP) {
            return Err(Error::InvalidBorders(format!(
                "{axis} borders {} and {} are less than one pixel apart",
                pair[0], pair[1]
            )));
        }
    }
    Ok(())
}

/// Rounds raw border positions to pixels: half-up per border, outer borders
/// pinned, then sub-pixel cells repaired by pushing the right border one
/// pixel further right, never past the outer border.
fn snap_axis(extent: usize, borders: &[f64]) -> Result<Vec<f64>> {
    let cells = borders.len() - 1;
    if cells > extent {
        return Err(Error::GridTooDense { cells, extent });
    }
    let mut snapped: Vec<f64> = borders.iter().map(|&b| round_half_up(b)).collect();
    snapped[0] = 0.0;
    *snapped.last_mut().unwrap() = extent as f64;
    for j in 1..cells {
        snapped[j] = snapped[j].max(snapped[j - 1] + 1.0);
    }
    // Backstop at the right edge so the push never crosses the outer border.
    for j in (1..cells).rev() {
        snapped[j] = snapped[j].min(snapped[j + 1] - 1.0);
    }
    Ok(snapped)
}

impl PoolGrid {
    /// Builds a grid from explicit borders, validating the invariants.
    pub fn new(
        width: usize,
        height: usize,
        col_borders: Vec<f64>,
        row_borders: Vec<f64>,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidBorders("image extent must be positive".into()));
        }
        validate_axis(width, &col_borders, "col")?;
        validate_axis(height, &row_borders, "row")?;
        Ok(PoolGrid {
            width,
            height,
            col_borders,
            row_borders,
        })
    }

    /// Evenly spaced borders: border `i` of an axis with `k` cells over
    /// extent `n` sits at `i*n/k`.
    pub fn uniform(width: usize, height: usize, k_cols: usize, k_rows: usize) -> Result<Self> {
        fn axis(extent: usize, k: usize) -> Result<Vec<f64>> {
            if k == 0 {
                return Err(Error::InvalidBorders("need at least one cell".into()));
            }
            if k > extent {
                return Err(Error::GridTooDense { cells: k, extent });
            }
            Ok((0..=k)
                .map(|i| (i * extent) as f64 / k as f64)
                .collect())
        }
        let col_borders = axis(width, k_cols)?;
        let row_borders = axis(height, k_rows)?;
        Ok(PoolGrid {
            width,
            height,
            col_borders,
            row_borders,
        })
    }

    /// Repair constructor for raw (possibly sub-pixel or tied) ascending
    /// border positions: rounds half-up and re-enforces the one pixel gap.
    /// Fails when an axis holds more cells than pixels.
    pub fn from_raw_borders(
        width: usize,
        height: usize,
        col_borders: Vec<f64>,
        row_borders: Vec<f64>,
    ) -> Result<Self> {
        fn check_raw(extent: usize, borders: &[f64], axis: &str) -> Result<()> {
            if borders.len() < 2 {
                return Err(Error::InvalidBorders(format!(
                    "{axis} needs at least two borders"
                )));
            }
            if borders[0] != 0.0 || *borders.last().unwrap() != extent as f64 {
                return Err(Error::InvalidBorders(format!(
                    "{axis} borders must run from 0 to {extent}"
                )));
            }
            if borders.windows(2).any(|p| p[1] < p[0]) {
                return Err(Error::InvalidBorders(format!("{axis} borders must ascend")));
            }
            Ok(())
        }
        check_raw(width, &col_borders, "col")?;
        check_raw(height, &row_borders, "row")?;
        let col_borders = snap_axis(width, &col_borders)?;
        let row_borders = snap_axis(height, &row_borders)?;
        PoolGrid::new(width, height, col_borders, row_borders)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn k_cols(&self) -> usize {
        self.col_borders.len() - 1
    }

    pub fn k_rows(&self) -> usize {
        self.row_borders.len() - 1
    }

    pub fn col_borders(&self) -> &[f64] {
        &self.col_borders
    }

    pub fn row_borders(&self) -> &[f64] {
        &self.row_borders
    }

    pub fn borders(&self, axis: Axis) -> &[f64] {
        match axis {
            Axis::Col => &self.col_borders,
            Axis::Row => &self.row_borders,
        }
    }

    /// Count of movable (interior) borders across both axes.
    pub fn movable_count(&self) -> usize {
        self.k_cols() - 1 + self.k_rows() - 1
    }

    pub fn is_discretized(&self) -> bool {
        self.col_borders
            .iter()
            .chain(self.row_borders.iter())
            .all(|b| b.fract() == 0.0)
    }

    /// Moves interior borders by `offsets`, sweeping each axis left to
    /// right. A border that would come closer than one pixel to a neighbor
    /// (the already-updated left one, the original right one) is clamped to
    /// exactly one pixel inside it and flagged as overpassed.
    pub fn apply_offsets(&self, offsets: &OffsetVector) -> Result<(PoolGrid, ClampReport)> {
        if offsets.col.len() != self.k_cols() - 1 || offsets.row.len() != self.k_rows() - 1 {
            return Err(Error::OffsetCount {
                got: offsets.len(),
                want: self.movable_count(),
            });
        }
        fn sweep(borders: &[f64], offsets: &[f64]) -> (Vec<f64>, Vec<bool>) {
            let mut out = borders.to_vec();
            let mut flags = Vec::with_capacity(offsets.len());
            for (m, &d) in offsets.iter().enumerate() {
                let j = m + 1;
                let lower = out[j - 1] + 1.0;
                let upper = borders[j + 1] - 1.0;
                let want = borders[j] + d;
                // Ordered clamp: bounds can cross by a few ulps when the
                // left neighbor was itself clamped, and upper must win so
                // the original right border keeps its pixel of clearance.
                // A NaN offset clamps to the bounds and flags.
                let pos = want.max(lower).min(upper);
                out[j] = pos;
                flags.push(pos != want);
            }
            (out, flags)
        }
        let (col_borders, col_overpassed) = sweep(&self.col_borders, &offsets.col);
        let (row_borders, row_overpassed) = sweep(&self.row_borders, &offsets.row);
        Ok((
            PoolGrid {
                width: self.width,
                height: self.height,
                col_borders,
                row_borders,
            },
            ClampReport {
                col_overpassed,
                row_overpassed,
            },
        ))
    }

    /// Rounds every border half-up to a whole pixel. Outer borders are
    /// already integral; the one pixel gap survives rounding, so this is
    /// total and idempotent.
    pub fn discretize(&self) -> PoolGrid {
        let col_borders =
            snap_axis(self.width, &self.col_borders).expect("1px-gap grid always snaps");
        let row_borders =
            snap_axis(self.height, &self.row_borders).expect("1px-gap grid always snaps");
        PoolGrid {
            width: self.width,
            height: self.height,
            col_borders,
            row_borders,
        }
    }

    /// Pixel span `[start, end)` of column band `j`. Grid must be discretized.
    pub fn col_span(&self, j: usize) -> (usize, usize) {
        (self.col_borders[j] as usize, self.col_borders[j + 1] as usize)
    }

    /// Pixel span `[start, end)` of row band `i`. Grid must be discretized.
    pub fn row_span(&self, i: usize) -> (usize, usize) {
        (self.row_borders[i] as usize, self.row_borders[i + 1] as usize)
    }

    /// Band index containing pixel column `x` (discretized grids).
    pub fn col_band_of(&self, x: usize) -> usize {
        band_of(&self.col_borders, x)
    }

    /// Band index containing pixel row `y` (discretized grids).
    pub fn row_band_of(&self, y: usize) -> usize {
        band_of(&self.row_borders, y)
    }

    /// Pixel counts per cell, row-major `k_rows x k_cols`. Grid must be
    /// discretized.
    pub fn cell_areas(&self) -> Vec<usize> {
        let mut areas = Vec::with_capacity(self.k_rows() * self.k_cols());
        for i in 0..self.k_rows() {
            let (y0, y1) = self.row_span(i);
            for j in 0..self.k_cols() {
                let (x0, x1) = self.col_span(j);
                areas.push((y1 - y0) * (x1 - x0));
            }
        }
        areas
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("grid serializes")
    }

    pub fn from_json(json: &str) -> Result<PoolGrid> {
        Ok(serde_json::from_str(json)?)
    }
}

fn band_of(borders: &[f64], p: usize) -> usize {
    debug_assert!((p as f64) < *borders.last().unwrap());
    // First border strictly above p, minus one.
    let idx = borders.partition_point(|&b| b <= p as f64);
    idx.saturating_sub(1).min(borders.len() - 2)
}
