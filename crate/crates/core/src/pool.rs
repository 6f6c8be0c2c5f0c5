//! Average pooling over a grid, and the numeric gradients that make the
//! grid trainable.
//!
//! The forward pass averages pixels per cell. Border derivatives are forward
//! differences: re-pool with one border moved `+h` pixels and divide the
//! per-cell change by `h`. Only the two cell strips adjacent to the probed
//! border can change, everything else is exactly zero.

use crate::error::{Error, Result};
use crate::grid::{Axis, Border, PoolGrid};

/// A dense raster: row-major, channels interleaved.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || channels == 0 {
            return Err(Error::ShapeMismatch(
                "image dimensions must be positive".into(),
            ));
        }
        if data.len() != width * height * channels {
            return Err(Error::ShapeMismatch(format!(
                "image data holds {} values, expected {}",
                data.len(),
                width * height * channels
            )));
        }
        Ok(Image {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize, channels: usize) -> Self {
        Image {
            width,
            height,
            channels,
            data: vec![0.0; width * height * channels],
        }
    }

    /// Constant-valued image.
    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Self {
        Image {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, ch: usize) -> usize {
        (y * self.width + x) * self.channels + ch
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, ch: usize) -> f64 {
        self.data[self.index(x, y, ch)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, ch: usize, v: f64) {
        let i = self.index(x, y, ch);
        self.data[i] = v;
    }
}

/// Pooled cell values: row-major `k_rows x k_cols`, channels interleaved.
#[derive(Clone, Debug, PartialEq)]
pub struct PooledMap {
    k_cols: usize,
    k_rows: usize,
    channels: usize,
    data: Vec<f64>,
}

impl PooledMap {
    pub fn zeros(k_cols: usize, k_rows: usize, channels: usize) -> Self {
        PooledMap {
            k_cols,
            k_rows,
            channels,
            data: vec![0.0; k_cols * k_rows * channels],
        }
    }

    pub fn from_data(k_cols: usize, k_rows: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != k_cols * k_rows * channels {
            return Err(Error::ShapeMismatch(format!(
                "pooled data holds {} values, expected {}",
                data.len(),
                k_cols * k_rows * channels
            )));
        }
        Ok(PooledMap {
            k_cols,
            k_rows,
            channels,
            data,
        })
    }

    pub fn k_cols(&self) -> usize {
        self.k_cols
    }

    pub fn k_rows(&self) -> usize {
        self.k_rows
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, ch: usize) -> usize {
        (i * self.k_cols + j) * self.channels + ch
    }

    /// Cell value at row band `i`, column band `j`.
    #[inline]
    pub fn get(&self, i: usize, j: usize, ch: usize) -> f64 {
        self.data[self.index(i, j, ch)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, ch: usize, v: f64) {
        let idx = self.index(i, j, ch);
        self.data[idx] = v;
    }

    /// Reinterprets the cell raster as an image (`k_cols x k_rows` pixels).
    pub fn to_image(&self) -> Image {
        Image {
            width: self.k_cols,
            height: self.k_rows,
            channels: self.channels,
            data: self.data.clone(),
        }
    }

    fn same_shape(&self, other: &PooledMap) -> bool {
        self.k_cols == other.k_cols
            && self.k_rows == other.k_rows
            && self.channels == other.channels
    }
}

/// dL/d(border) for every movable border, in border-array order per axis.
#[derive(Clone, Debug, PartialEq)]
pub struct BorderGradient {
    pub col: Vec<f64>,
    pub row: Vec<f64>,
    pub h: u32,
}

/// Mean over one cell's pixels for one channel; row-major accumulation in
/// f64. Every pooling path in this crate sums through here, so forward
/// values and probe values agree bit for bit.
#[inline]
fn cell_mean(img: &Image, x0: usize, x1: usize, y0: usize, y1: usize, ch: usize) -> f64 {
    let mut sum = 0.0;
    for y in y0..y1 {
        let row = y * img.width;
        for x in x0..x1 {
            sum += img.data[(row + x) * img.channels + ch];
        }
    }
    sum / ((x1 - x0) * (y1 - y0)) as f64
}

fn check_extents(img: &Image, grid: &PoolGrid) -> Result<()> {
    if grid.width() != img.width || grid.height() != img.height {
        return Err(Error::ExtentMismatch {
            grid_w: grid.width(),
            grid_h: grid.height(),
            image_w: img.width,
            image_h: img.height,
        });
    }
    Ok(())
}

/// Average-pools `img` over the cells of a discretized `grid`. Cell `(i,j)`
/// of the result is the mean of its pixels, per channel; the same grid
/// applies to every channel.
pub fn pool_forward(img: &Image, grid: &PoolGrid) -> Result<PooledMap> {
    check_extents(img, grid)?;
    if !grid.is_discretized() {
        return Err(Error::NotDiscretized);
    }
    let mut out = PooledMap::zeros(grid.k_cols(), grid.k_rows(), img.channels);
    for i in 0..grid.k_rows() {
        let (y0, y1) = grid.row_span(i);
        for j in 0..grid.k_cols() {
            let (x0, x1) = grid.col_span(j);
            for ch in 0..img.channels {
                out.set(i, j, ch, cell_mean(img, x0, x1, y0, y1, ch));
            }
        }
    }
    Ok(out)
}

fn movable_index(grid: &PoolGrid, border: Border) -> Result<usize> {
    let count = grid.borders(border.axis).len();
    if border.index == 0 || border.index + 1 >= count {
        return Err(Error::NotMovable {
            index: border.index,
            count,
        });
    }
    Ok(border.index)
}

fn grid_with_border_at(grid: &PoolGrid, border: Border, pos: f64) -> PoolGrid {
    let mut cols = grid.col_borders().to_vec();
    let mut rows = grid.row_borders().to_vec();
    match border.axis {
        Axis::Col => cols[border.index] = pos,
        Axis::Row => rows[border.index] = pos,
    }
    PoolGrid::new(grid.width(), grid.height(), cols, rows)
        .expect("probe stays a pixel inside the neighbor")
}

/// Forward-difference derivative of every cell value with respect to one
/// interior border: `(y'(i,j) - y(i,j)) / h` where `y'` re-pools with the
/// border moved `+h` pixels and re-discretized.
///
/// The whole map is zero when the probe would overpass the right neighbor
/// (come closer than one pixel), and zero when discretization swallows the
/// probe. Cells outside the two strips adjacent to the border are always
/// exactly zero.
pub fn border_gradient(
    img: &Image,
    grid: &PoolGrid,
    border: Border,
    h: u32,
) -> Result<PooledMap> {
    check_extents(img, grid)?;
    if h == 0 {
        return Err(Error::InvalidParam("probe distance h must be at least 1".into()));
    }
    let base = grid.discretize();
    let base_y = pool_forward(img, &base)?;
    border_gradient_from(img, grid, &base, &base_y, border, h)
}

/// Same as [`border_gradient`] with the discretized grid and its pooled map
/// supplied by the caller, so a training step re-pools the base only once.
fn border_gradient_from(
    img: &Image,
    grid: &PoolGrid,
    base: &PoolGrid,
    base_y: &PooledMap,
    border: Border,
    h: u32,
) -> Result<PooledMap> {
    let j = movable_index(grid, border)?;
    let mut out = PooledMap::zeros(base.k_cols(), base.k_rows(), img.channels);

    let borders = grid.borders(border.axis);
    let probed = borders[j] + h as f64;
    // Overpassing the right neighbor zeroes the whole gradient. Written as
    // the same exactly-rounded gap test grid validation uses, so a probe
    // that passes here always builds a valid grid.
    if !(borders[j + 1] - probed >= 1.0) {
        return Ok(out);
    }
    let moved = grid_with_border_at(grid, border, probed).discretize();
    if moved == *base {
        return Ok(out); // probe vanished in rounding: flat region
    }

    let hf = h as f64;
    match border.axis {
        Axis::Col => {
            for i in 0..base.k_rows() {
                let (y0, y1) = moved.row_span(i);
                for jj in [j - 1, j] {
                    let (x0, x1) = moved.col_span(jj);
                    for ch in 0..img.channels {
                        let y_new = cell_mean(img, x0, x1, y0, y1, ch);
                        out.set(i, jj, ch, (y_new - base_y.get(i, jj, ch)) / hf);
                    }
                }
            }
        }
        Axis::Row => {
            for ii in [j - 1, j] {
                let (y0, y1) = moved.row_span(ii);
                for jj in 0..base.k_cols() {
                    let (x0, x1) = moved.col_span(jj);
                    for ch in 0..img.channels {
                        let y_new = cell_mean(img, x0, x1, y0, y1, ch);
                        out.set(ii, jj, ch, (y_new - base_y.get(ii, jj, ch)) / hf);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Chains an upstream dL/dy through the border derivatives: one scalar per
/// movable border, summed over the adjacent cell strips and channels.
pub fn chain_border_gradients(
    img: &Image,
    grid: &PoolGrid,
    upstream: &PooledMap,
    h: u32,
) -> Result<BorderGradient> {
    check_extents(img, grid)?;
    if h == 0 {
        return Err(Error::InvalidParam("probe distance h must be at least 1".into()));
    }
    let base = grid.discretize();
    let base_y = pool_forward(img, &base)?;
    if !upstream.same_shape(&base_y) {
        return Err(Error::ShapeMismatch(format!(
            "upstream is {}x{}x{}, pooled map is {}x{}x{}",
            upstream.k_rows,
            upstream.k_cols,
            upstream.channels,
            base_y.k_rows,
            base_y.k_cols,
            base_y.channels
        )));
    }
    let chain_one = |border: Border| -> Result<f64> {
        let g = border_gradient_from(img, grid, &base, &base_y, border, h)?;
        // Full row-major dot product; off-strip terms are exact zeros.
        let mut acc = 0.0;
        for (u, d) in upstream.data.iter().zip(g.data.iter()) {
            acc += u * d;
        }
        Ok(acc)
    };
    let mut col = Vec::with_capacity(grid.k_cols() - 1);
    for j in 1..grid.k_cols() {
        col.push(chain_one(Border::col(j))?);
    }
    let mut row = Vec::with_capacity(grid.k_rows() - 1);
    for i in 1..grid.k_rows() {
        row.push(chain_one(Border::row(i))?);
    }
    Ok(BorderGradient { col, row, h })
}

/// dL/dx for the average pool: each pixel receives its cell's upstream
/// value divided by the cell's pixel count.
pub fn input_gradient(upstream: &PooledMap, grid: &PoolGrid) -> Result<Image> {
    if !grid.is_discretized() {
        return Err(Error::NotDiscretized);
    }
    if upstream.k_cols != grid.k_cols() || upstream.k_rows != grid.k_rows() {
        return Err(Error::ShapeMismatch(format!(
            "upstream is {}x{}, grid is {}x{}",
            upstream.k_rows,
            upstream.k_cols,
            grid.k_rows(),
            grid.k_cols()
        )));
    }
    let mut out = Image::zeros(grid.width(), grid.height(), upstream.channels);
    for i in 0..grid.k_rows() {
        let (y0, y1) = grid.row_span(i);
        for j in 0..grid.k_cols() {
            let (x0, x1) = grid.col_span(j);
            let n = ((x1 - x0) * (y1 - y0)) as f64;
            for ch in 0..upstream.channels {
                let v = upstream.get(i, j, ch) / n;
                for y in y0..y1 {
                    for x in x0..x1 {
                        out.set(x, y, ch, v);
                    }
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::OffsetVector;

    fn image_from(w: usize, h: usize, values: &[f64]) -> Image {
        Image::new(w, h, 1, values.to_vec()).unwrap()
    }

    #[test]
    fn constant_image_pools_to_constant() {
        let img = Image::filled(7, 5, 2, 5.0);
        let grid = PoolGrid::uniform(7, 5, 3, 2).unwrap().discretize();
        let y = pool_forward(&img, &grid).unwrap();
        assert!(y.data().iter().all(|&v| v == 5.0));
    }

    #[test]
    fn split_column_grid_separates_halves() {
        // 4x4 image, left half 0, right half 4; cols [0,2,4], one row band.
        #[rustfmt::skip]
        let img = image_from(4, 4, &[
            0.0, 0.0, 4.0, 4.0,
            0.0, 0.0, 4.0, 4.0,
            0.0, 0.0, 4.0, 4.0,
            0.0, 0.0, 4.0, 4.0,
        ]);
        let grid = PoolGrid::new(4, 4, vec![0.0, 2.0, 4.0], vec![0.0, 4.0]).unwrap();
        let y = pool_forward(&img, &grid).unwrap();
        assert_eq!(y.k_rows(), 1);
        assert_eq!(y.k_cols(), 2);
        assert_eq!(y.data(), &[0.0, 4.0]);
    }

    #[test]
    fn forward_needs_discretized_grid() {
        let img = Image::filled(5, 5, 1, 1.0);
        let grid = PoolGrid::new(5, 5, vec![0.0, 2.5, 5.0], vec![0.0, 5.0]).unwrap();
        assert!(matches!(pool_forward(&img, &grid), Err(Error::NotDiscretized)));
    }

    #[test]
    fn forward_rejects_extent_mismatch() {
        let img = Image::filled(5, 5, 1, 1.0);
        let grid = PoolGrid::uniform(4, 4, 2, 2).unwrap();
        assert!(matches!(
            pool_forward(&img, &grid),
            Err(Error::ExtentMismatch { .. })
        ));
    }

    #[test]
    fn border_probe_matches_hand_computation() {
        // Step image: cols 0-1 are 0, cols 2-3 are 4. Border between the two
        // cells sits at 2; moving it to 3 pulls one column of 4s into the
        // left cell: left mean goes 0 -> 4/3, right stays 4.
        #[rustfmt::skip]
        let img = image_from(4, 4, &[
            0.0, 0.0, 4.0, 4.0,
            0.0, 0.0, 4.0, 4.0,
            0.0, 0.0, 4.0, 4.0,
            0.0, 0.0, 4.0, 4.0,
        ]);
        let grid = PoolGrid::new(4, 4, vec![0.0, 2.0, 4.0], vec![0.0, 4.0]).unwrap();
        let g = border_gradient(&img, &grid, Border::col(1), 1).unwrap();
        assert_eq!(g.get(0, 0, 0), 4.0 / 3.0);
        assert_eq!(g.get(0, 1, 0), 0.0);
    }

    #[test]
    fn constant_image_has_zero_border_gradient() {
        let img = Image::filled(9, 6, 1, 2.5);
        let grid = PoolGrid::uniform(9, 6, 3, 2).unwrap().discretize();
        for j in 1..3 {
            let g = border_gradient(&img, &grid, Border::col(j), 1).unwrap();
            assert!(g.data().iter().all(|&v| v == 0.0));
        }
        let g = border_gradient(&img, &grid, Border::row(1), 1).unwrap();
        assert!(g.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn probe_overpass_zeroes_the_gradient() {
        // Border at W-1 with the outer border at W: +1 would overpass.
        let w = 6;
        let img = Image::filled(w, 3, 1, 1.0);
        let mut cols: Vec<f64> = vec![0.0, (w - 1) as f64, w as f64];
        let grid = PoolGrid::new(w, 3, std::mem::take(&mut cols), vec![0.0, 3.0]).unwrap();
        let g = border_gradient(&img, &grid, Border::col(1), 1).unwrap();
        assert!(g.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn outer_borders_are_not_movable() {
        let img = Image::filled(6, 6, 1, 1.0);
        let grid = PoolGrid::uniform(6, 6, 3, 3).unwrap();
        assert!(matches!(
            border_gradient(&img, &grid, Border::col(0), 1),
            Err(Error::NotMovable { .. })
        ));
        assert!(matches!(
            border_gradient(&img, &grid, Border::col(3), 1),
            Err(Error::NotMovable { .. })
        ));
    }

    #[test]
    fn mass_is_conserved() {
        let img = image_from(6, 4, &(0..24).map(|v| v as f64 * 0.3).collect::<Vec<_>>());
        let grid = PoolGrid::uniform(6, 4, 3, 2).unwrap().discretize();
        let y = pool_forward(&img, &grid).unwrap();
        let mut pooled_mass = 0.0;
        for i in 0..2 {
            let (y0, y1) = grid.row_span(i);
            for j in 0..3 {
                let (x0, x1) = grid.col_span(j);
                pooled_mass += y.get(i, j, 0) * ((x1 - x0) * (y1 - y0)) as f64;
            }
        }
        let total: f64 = img.data().iter().sum();
        assert!((pooled_mass - total).abs() <= 1e-9 * total.abs());
    }

    #[test]
    fn input_gradient_spreads_upstream_over_cells() {
        let grid = PoolGrid::new(4, 2, vec![0.0, 2.0, 4.0], vec![0.0, 2.0]).unwrap();
        let upstream = PooledMap::from_data(2, 1, 1, vec![1.0, 3.0]).unwrap();
        let g = input_gradient(&upstream, &grid).unwrap();
        // Left cell: 4 pixels, each 1/4. Right cell: 4 pixels, each 3/4.
        assert_eq!(g.get(0, 0, 0), 0.25);
        assert_eq!(g.get(1, 1, 0), 0.25);
        assert_eq!(g.get(2, 0, 0), 0.75);
        assert_eq!(g.get(3, 1, 0), 0.75);
    }

    #[test]
    fn chained_gradient_matches_brute_force_repool() {
        let w = 10;
        let h = 7;
        let values: Vec<f64> = (0..w * h).map(|v| ((v * 37) % 11) as f64 * 0.17).collect();
        let img = image_from(w, h, &values);
        let base = PoolGrid::uniform(w, h, 4, 3).unwrap();
        let (grid, _) = base
            .apply_offsets(&OffsetVector::new(
                vec![0.7, -1.2, 0.4],
                vec![1.1, -0.6],
            ))
            .unwrap();
        let grid = grid.discretize();
        let upstream =
            PooledMap::from_data(4, 3, 1, (0..12).map(|v| (v as f64) * 0.21 - 1.0).collect())
                .unwrap();

        let chained = chain_border_gradients(&img, &grid, &upstream, 1).unwrap();

        // Oracle: full re-pool, per-cell forward difference, row-major dot.
        let base_y = pool_forward(&img, &grid).unwrap();
        let brute = |border: Border| -> f64 {
            let borders = grid.borders(border.axis);
            let j = border.index;
            if borders[j] + 1.0 > borders[j + 1] - 1.0 {
                return 0.0;
            }
            let moved = grid_with_border_at(&grid, border, borders[j] + 1.0).discretize();
            let moved_y = pool_forward(&img, &moved).unwrap();
            let mut acc = 0.0;
            for (idx, u) in upstream.data().iter().enumerate() {
                acc += u * ((moved_y.data()[idx] - base_y.data()[idx]) / 1.0);
            }
            acc
        };
        for (m, &got) in chained.col.iter().enumerate() {
            assert_eq!(got, brute(Border::col(m + 1)), "col border {}", m + 1);
        }
        for (m, &got) in chained.row.iter().enumerate() {
            assert_eq!(got, brute(Border::row(m + 1)), "row border {}", m + 1);
        }
    }
}
