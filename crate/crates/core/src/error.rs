use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An axis was asked to hold more cells than it has pixels.
    #[error("{cells} cells do not fit into {extent} pixels")]
    GridTooDense { cells: usize, extent: usize },

    #[error("invalid borders: {0}")]
    InvalidBorders(String),

    #[error("got {got} offsets for {want} movable borders")]
    OffsetCount { got: usize, want: usize },

    #[error("border index {index} of {count} is not movable")]
    NotMovable { index: usize, count: usize },

    #[error("grid is {grid_w}x{grid_h} but image is {image_w}x{image_h}")]
    ExtentMismatch {
        grid_w: usize,
        grid_h: usize,
        image_w: usize,
        image_h: usize,
    },

    #[error("grid has fractional borders; discretize it first")]
    NotDiscretized,

    #[error("{0}")]
    ShapeMismatch(String),

    #[error("roi #{index} ({x},{y} {w}x{h}) exceeds the {map_w}x{map_h} map")]
    RoiOutOfBounds {
        index: usize,
        x: usize,
        y: usize,
        w: usize,
        h: usize,
        map_w: usize,
        map_h: usize,
    },

    #[error("{0}")]
    InvalidParam(String),

    #[error("training diverged at iteration {iter}: loss is not finite")]
    Diverged { iter: usize },

    #[error("unsupported image: {0}")]
    UnsupportedImage(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}
