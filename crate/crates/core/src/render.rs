//! Visualizations: cell-area shading and pooled-map upscaling.

use crate::error::{Error, Result};
use crate::grid::PoolGrid;
use crate::pool::{Image, PooledMap};

/// Shades every pixel by its cell's area: the smallest cell renders white,
/// the largest black, linear in between. A grid of equal cells renders a
/// constant mid-gray. The grid must be discretized.
pub fn render_grid(grid: &PoolGrid) -> Result<Image> {
    if !grid.is_discretized() {
        return Err(Error::NotDiscretized);
    }
    let areas = grid.cell_areas();
    let min = *areas.iter().min().expect("grid has cells") as f64;
    let max = *areas.iter().max().expect("grid has cells") as f64;
    let mut img = Image::zeros(grid.width(), grid.height(), 1);
    for i in 0..grid.k_rows() {
        let (y0, y1) = grid.row_span(i);
        for j in 0..grid.k_cols() {
            let (x0, x1) = grid.col_span(j);
            let area = areas[i * grid.k_cols() + j] as f64;
            let shade = if max > min {
                1.0 - (area - min) / (max - min)
            } else {
                0.5
            };
            for y in y0..y1 {
                for x in x0..x1 {
                    img.set(x, y, 0, shade);
                }
            }
        }
    }
    Ok(img)
}

/// Expands a pooled map back to full resolution: every pixel takes the
/// value of the cell it belongs to. Inverse of pooling for images that are
/// constant within each cell.
pub fn upscale_with_grid(pooled: &PooledMap, grid: &PoolGrid) -> Result<Image> {
    if !grid.is_discretized() {
        return Err(Error::NotDiscretized);
    }
    if pooled.k_cols() != grid.k_cols() || pooled.k_rows() != grid.k_rows() {
        return Err(Error::ShapeMismatch(format!(
            "pooled map is {}x{} cells, grid has {}x{}",
            pooled.k_cols(),
            pooled.k_rows(),
            grid.k_cols(),
            grid.k_rows()
        )));
    }
    let ch = pooled.channels();
    let mut img = Image::zeros(grid.width(), grid.height(), ch);
    for i in 0..grid.k_rows() {
        let (y0, y1) = grid.row_span(i);
        for j in 0..grid.k_cols() {
            let (x0, x1) = grid.col_span(j);
            for y in y0..y1 {
                for x in x0..x1 {
                    for c in 0..ch {
                        img.set(x, y, c, pooled.get(i, j, c));
                    }
                }
            }
        }
    }
    Ok(img)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pool::pool_forward;

    #[test]
    fn equal_cells_render_mid_gray() {
        let grid = PoolGrid::uniform(8, 8, 4, 4).unwrap().discretize();
        let img = render_grid(&grid).unwrap();
        assert!(img.data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn smaller_cells_render_brighter() {
        // Cells of area 4 and 12: min renders 1.0, max 0.0.
        let grid = PoolGrid::new(4, 4, vec![0.0, 1.0, 4.0], vec![0.0, 4.0]).unwrap();
        let img = render_grid(&grid).unwrap();
        assert_eq!(img.get(0, 0, 0), 1.0);
        assert_eq!(img.get(0, 3, 0), 1.0);
        assert_eq!(img.get(1, 0, 0), 0.0);
        assert_eq!(img.get(3, 3, 0), 0.0);
    }

    #[test]
    fn upscale_paints_each_cell_constant() {
        let grid = PoolGrid::new(4, 2, vec![0.0, 1.0, 4.0], vec![0.0, 2.0]).unwrap();
        let pooled = PooledMap::from_data(2, 1, 1, vec![5.0, 9.0]).unwrap();
        let img = upscale_with_grid(&pooled, &grid).unwrap();
        for y in 0..2 {
            assert_eq!(img.get(0, y, 0), 5.0);
            for x in 1..4 {
                assert_eq!(img.get(x, y, 0), 9.0);
            }
        }
    }

    #[test]
    fn pooling_an_upscaled_map_recovers_it() {
        // Dyadic values keep every cell mean exact.
        let grid = PoolGrid::new(6, 4, vec![0.0, 2.0, 6.0], vec![0.0, 3.0, 4.0]).unwrap();
        let pooled = PooledMap::from_data(2, 2, 1, vec![0.25, 0.75, 0.5, 1.0]).unwrap();
        let img = upscale_with_grid(&pooled, &grid).unwrap();
        let back = pool_forward(&img, &grid).unwrap();
        assert_eq!(back, pooled);
    }

    #[test]
    fn upscale_rejects_mismatched_shapes() {
        let grid = PoolGrid::uniform(8, 8, 4, 4).unwrap().discretize();
        let pooled = PooledMap::from_data(2, 2, 1, vec![0.0; 4]).unwrap();
        assert!(matches!(
            upscale_with_grid(&pooled, &grid),
            Err(Error::ShapeMismatch(_))
        ));
    }
}
