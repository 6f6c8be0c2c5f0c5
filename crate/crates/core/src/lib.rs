//! Average pooling over non-uniform, learnable grids.
//!
//! An image is partitioned into a K x K grid of rectangular cells whose
//! interior borders can sit at arbitrary pixel positions; each output value
//! is the exact mean of its cell. Borders can be driven three ways: fixed
//! uniform, derived from an importance map (equal mass per cell along each
//! axis), or learned, using forward-difference border gradients that are
//! zeroed when a probe would overpass the neighboring border.
//!
//! - [`grid`]: border bookkeeping — validation, offset clamping,
//!   discretization, serialization.
//! - [`pool`]: the forward pool and its three gradients (borders, chained
//!   borders, input).
//! - [`importance`]: region-of-interest maps and the grids they induce.
//! - [`train`]: the dynamic learning-rate controller, gradient checker,
//!   and a synthetic end-to-end training demo.
//! - [`render`], [`io`], [`cli`]: visualization, image files, command line.

pub mod cli;
pub mod error;
pub mod grid;
pub mod importance;
pub mod io;
pub mod pool;
pub mod render;
pub mod train;

pub use error::{Error, Result};
pub use grid::{Axis, Border, ClampReport, OffsetVector, PoolGrid};
pub use importance::{
    build_map, compress, default_floor, grid_from_importance, ImportanceMap, Rect, RoiSpec,
};
pub use pool::{
    border_gradient, chain_border_gradients, input_gradient, pool_forward, BorderGradient, Image,
    PooledMap,
};
pub use render::{render_grid, upscale_with_grid};
pub use train::{
    gradcheck, roi_cell_area_stats, train_demo, GradcheckReport, GridMode, LrPolicy, LrState,
    ToyTask, TrainConfig, TrainingReport,
};
