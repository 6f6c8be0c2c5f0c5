//! Importance maps and the grids they induce.
//!
//! A map weights every pixel in [0, 1]. Grid construction is separable:
//! each axis partitions its marginal mass into equal shares, so heavy
//! regions get narrow cells. A small floor keeps empty regions from
//! collapsing to zero-width cells.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::PoolGrid;
use crate::pool::{pool_forward, Image, PooledMap};

/// Axis-aligned rectangle in pixel coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl Rect {
    pub fn new(x: usize, y: usize, w: usize, h: usize) -> Self {
        Rect { x, y, w, h }
    }

    pub fn area(&self) -> usize {
        self.w * self.h
    }

    /// True when this rectangle and the half-open pixel box
    /// `[x0,x1) x [y0,y1)` share at least one pixel.
    pub fn intersects_span(&self, x0: usize, x1: usize, y0: usize, y1: usize) -> bool {
        self.x < x1 && x0 < self.x + self.w && self.y < y1 && y0 < self.y + self.h
    }
}

/// Regions of interest plus the soft ring drawn around each of them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoiSpec {
    pub rois: Vec<Rect>,
    pub ring_px: usize,
    pub ring_value: f64,
}

impl RoiSpec {
    /// Default ring: value 0.5, thickness 10% of the largest core side
    /// (at least one pixel).
    pub fn with_default_ring(rois: Vec<Rect>) -> Self {
        let side = rois.iter().map(|r| r.w.max(r.h)).max().unwrap_or(0);
        let ring_px = (crate::grid::round_half_up(side as f64 * 0.1) as usize).max(1);
        RoiSpec {
            rois,
            ring_px,
            ring_value: 0.5,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("roi spec serializes")
    }

    pub fn from_json(json: &str) -> Result<RoiSpec> {
        Ok(serde_json::from_str::<RoiSpec>(json)?)
    }
}

/// Per-pixel weights in [0, 1], row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ImportanceMap {
    width: usize,
    height: usize,
    weights: Vec<f64>,
}

impl ImportanceMap {
    pub fn new(width: usize, height: usize, weights: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidParam("map extent must be positive".into()));
        }
        if weights.len() != width * height {
            return Err(Error::ShapeMismatch(format!(
                "map holds {} weights, expected {}",
                weights.len(),
                width * height
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(0.0..=1.0).contains(*w)) {
            return Err(Error::InvalidParam(format!(
                "map weight {w} is outside [0, 1]"
            )));
        }
        Ok(ImportanceMap {
            width,
            height,
            weights,
        })
    }

    /// Constant map.
    pub fn uniform(width: usize, height: usize, value: f64) -> Result<Self> {
        ImportanceMap::new(width, height, vec![value; width * height])
    }

    /// Reads a single-channel image as weights (intensities are already
    /// normalized to [0, 1] by the loader).
    pub fn from_image(img: &Image) -> Result<Self> {
        if img.channels() != 1 {
            return Err(Error::UnsupportedImage(format!(
                "importance map must be grayscale, got {} channels",
                img.channels()
            )));
        }
        ImportanceMap::new(
            img.width(),
            img.height(),
            img.data().iter().map(|v| v.clamp(0.0, 1.0)).collect(),
        )
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.weights[y * self.width + x]
    }
}

/// Paints a three-level map: 1.0 inside every core rectangle, `ring_value`
/// in the ring around it, 0 elsewhere. Overlaps take the maximum.
pub fn build_map(width: usize, height: usize, spec: &RoiSpec) -> Result<ImportanceMap> {
    if !(spec.ring_value > 0.0 && spec.ring_value < 1.0) {
        return Err(Error::InvalidParam(format!(
            "ring value must lie strictly between 0 and 1, got {}",
            spec.ring_value
        )));
    }
    let mut weights = vec![0.0; width * height];
    for (index, roi) in spec.rois.iter().enumerate() {
        if roi.w == 0 || roi.h == 0 || roi.x + roi.w > width || roi.y + roi.h > height {
            return Err(Error::RoiOutOfBounds {
                index,
                x: roi.x,
                y: roi.y,
                w: roi.w,
                h: roi.h,
                map_w: width,
                map_h: height,
            });
        }
        // Ring box: the core expanded by ring_px, clipped to the map.
        let rx0 = roi.x.saturating_sub(spec.ring_px);
        let ry0 = roi.y.saturating_sub(spec.ring_px);
        let rx1 = (roi.x + roi.w + spec.ring_px).min(width);
        let ry1 = (roi.y + roi.h + spec.ring_px).min(height);
        for y in ry0..ry1 {
            for x in rx0..rx1 {
                let in_core = x >= roi.x && x < roi.x + roi.w && y >= roi.y && y < roi.y + roi.h;
                let v = if in_core { 1.0 } else { spec.ring_value };
                let w = &mut weights[y * width + x];
                if v > *w {
                    *w = v;
                }
            }
        }
    }
    ImportanceMap::new(width, height, weights)
}

/// The default marginal floor: 1e-6 of the mean marginal mass, and a small
/// positive constant when the map is entirely zero (the floor must stay
/// positive for the grid to exist).
pub fn default_floor(map: &ImportanceMap) -> f64 {
    let total: f64 = map.weights.iter().sum();
    let mean_marginal = (total / map.width as f64 + total / map.height as f64) / 2.0;
    if mean_marginal > 0.0 {
        1e-6 * mean_marginal
    } else {
        1e-6
    }
}

/// Equal-mass partition of one axis: marginal mass plus floor per
/// coordinate, then borders where the cumulative mass crosses `i/k` of the
/// total, linearly interpolated inside a coordinate.
fn equal_mass_borders(marginal: &[f64], k: usize) -> Vec<f64> {
    let extent = marginal.len();
    let mut cumulative = Vec::with_capacity(extent + 1);
    let mut acc = 0.0;
    cumulative.push(0.0);
    for &m in marginal {
        acc += m;
        cumulative.push(acc);
    }
    let total = acc;
    let mut borders = Vec::with_capacity(k + 1);
    borders.push(0.0);
    for i in 1..k {
        let target = i as f64 * total / k as f64;
        // First coordinate whose cumulative mass exceeds the target.
        let idx = cumulative.partition_point(|&m| m <= target);
        let c = idx.saturating_sub(1).min(extent - 1);
        let within = (target - cumulative[c]) / marginal[c];
        borders.push((c as f64 + within).clamp(0.0, extent as f64));
    }
    borders.push(extent as f64);
    borders
}

/// Builds a grid whose cells split the map's importance mass evenly along
/// each axis. `floor` must be positive; it is added to every marginal entry.
pub fn grid_from_importance(
    map: &ImportanceMap,
    k_cols: usize,
    k_rows: usize,
    floor: f64,
) -> Result<PoolGrid> {
    if !(floor > 0.0) {
        return Err(Error::InvalidParam(format!(
            "marginal floor must be positive, got {floor}"
        )));
    }
    if k_cols == 0 || k_rows == 0 {
        return Err(Error::InvalidParam("need at least one cell per axis".into()));
    }
    if k_cols > map.width {
        return Err(Error::GridTooDense {
            cells: k_cols,
            extent: map.width,
        });
    }
    if k_rows > map.height {
        return Err(Error::GridTooDense {
            cells: k_rows,
            extent: map.height,
        });
    }
    let mut col_marginal = vec![floor; map.width];
    let mut row_marginal = vec![floor; map.height];
    for y in 0..map.height {
        let row = &map.weights[y * map.width..(y + 1) * map.width];
        for (x, &w) in row.iter().enumerate() {
            col_marginal[x] += w;
            row_marginal[y] += w;
        }
    }
    let cols = equal_mass_borders(&col_marginal, k_cols);
    let rows = equal_mass_borders(&row_marginal, k_rows);
    PoolGrid::from_raw_borders(map.width, map.height, cols, rows)
}

/// Pools `img` over the grid induced by `map` (with the default floor).
/// Returns the pooled cells and the grid that produced them.
pub fn compress(
    img: &Image,
    map: &ImportanceMap,
    k_cols: usize,
    k_rows: usize,
) -> Result<(PooledMap, PoolGrid)> {
    if map.width != img.width() || map.height != img.height() {
        return Err(Error::ShapeMismatch(format!(
            "map is {}x{}, image is {}x{}",
            map.width,
            map.height,
            img.width(),
            img.height()
        )));
    }
    let grid = grid_from_importance(map, k_cols, k_rows, default_floor(map))?;
    let pooled = pool_forward(img, &grid)?;
    Ok((pooled, grid))
}
