//! Offset-head learning-rate control, a synthetic region-regression task,
//! and a desk-scale training demo wiring the pooling backward path end to
//! end.
//!
//! The model is deliberately small: an affine predictor reads a stride-4
//! subsample of the image and emits one offset per movable border, and a
//! fixed linear readout maps the pooled cells to the 2-vector prediction.
//! Only the offset head trains, so the loss surface over border positions
//! is stationary. Runs are deterministic given the seed: batches fan out
//! over threads, but each sample's arithmetic is sequential and the
//! reduction order is fixed.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Border, OffsetVector, PoolGrid};
use crate::importance::{build_map, default_floor, grid_from_importance, Rect, RoiSpec};
use crate::pool::{
    chain_border_gradients, input_gradient, pool_forward, Image, PooledMap,
};

pub const LR_MIN: f64 = 1e-6;
pub const LR_MAX: f64 = 1e-1;
const LR_WINDOW: usize = 10;
const SHRINK_ABOVE: f64 = 0.20;
const GROW_BELOW: f64 = 0.10;

/// Threshold-based learning-rate controller for the offset head.
///
/// Every ten observed iterations the mean overpass fraction decides the
/// move: above 20% the rate shrinks tenfold, below 10% it grows tenfold,
/// in between it stays. The window resets after every decision and the
/// rate never leaves [1e-6, 1e-1].
#[derive(Clone, Debug)]
pub struct LrState {
    lr: f64,
    window: Vec<f64>,
}

impl LrState {
    pub fn new(initial: f64) -> Self {
        LrState {
            lr: initial.clamp(LR_MIN, LR_MAX),
            window: Vec::with_capacity(LR_WINDOW),
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    /// Records one iteration's overpass fraction and returns the rate in
    /// effect afterwards.
    pub fn observe(&mut self, fraction: f64) -> f64 {
        debug_assert!((0.0..=1.0).contains(&fraction));
        self.window.push(fraction);
        if self.window.len() == LR_WINDOW {
            let mean = self.window.iter().sum::<f64>() / LR_WINDOW as f64;
            if mean > SHRINK_ABOVE {
                self.lr *= 0.1;
            } else if mean < GROW_BELOW {
                self.lr *= 10.0;
            }
            self.lr = self.lr.clamp(LR_MIN, LR_MAX);
            self.window.clear();
        }
        self.lr
    }
}

/// Synthetic task: noise images whose label is read off a fixed patch.
/// The label is `[mean intensity inside the patch, patch center x / width]`,
/// so a pooling grid that resolves the patch beats one that smears it.
#[derive(Clone, Debug)]
pub struct ToyTask {
    pub size: usize,
    pub roi: Rect,
}

impl ToyTask {
    /// The reference task: 32x32 images with an off-center 8x8 patch, so
    /// no border of the start-out uniform grid aligns with the patch.
    pub fn canonical() -> Self {
        ToyTask {
            size: 32,
            roi: Rect::new(2, 12, 8, 8),
        }
    }

    /// The patch described as an importance region, for the fixed
    /// importance-grid baseline: a half-weight shoulder half a patch side
    /// wide. The map knows roughly where the patch sits, not its edges, so
    /// the equal-mass grid concentrates cells near the patch without
    /// aligning to it exactly.
    pub fn roi_spec(&self) -> RoiSpec {
        RoiSpec {
            rois: vec![self.roi],
            ring_px: (self.roi.w.max(self.roi.h) / 2).max(1),
            ring_value: 0.5,
        }
    }

    /// Second label component: the patch's center x, normalized by width.
    pub fn center_x_norm(&self) -> f64 {
        (self.roi.x as f64 + self.roi.w as f64 / 2.0) / self.size as f64
    }

    pub fn label_of(&self, img: &Image) -> [f64; 2] {
        let mut sum = 0.0;
        for y in self.roi.y..self.roi.y + self.roi.h {
            for x in self.roi.x..self.roi.x + self.roi.w {
                sum += img.get(x, y, 0);
            }
        }
        [sum / self.roi.area() as f64, self.center_x_norm()]
    }

    /// Draws one image: a coarse block field plus per-pixel noise, mixed
    /// half and half. The block field carries most of the label's variance
    /// so the readout has a strong signal; the pixel field means a cell
    /// straddling the patch boundary can never recover the label exactly,
    /// so border alignment keeps paying off.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> (Image, [f64; 2]) {
        let blocks_x = self.size.div_ceil(BLOCK);
        let blocks_y = self.size.div_ceil(BLOCK);
        let field: Vec<f64> = (0..blocks_x * blocks_y).map(|_| rng.gen::<f64>()).collect();
        let mut data = Vec::with_capacity(self.size * self.size);
        for y in 0..self.size {
            for x in 0..self.size {
                let block = field[(y / BLOCK) * blocks_x + x / BLOCK];
                data.push(0.5 * block + 0.5 * rng.gen::<f64>());
            }
        }
        let img = Image::new(self.size, self.size, 1, data).expect("task image is well-formed");
        let label = self.label_of(&img);
        (img, label)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridMode {
    /// Offsets predicted per input, trained through the border gradients.
    Learned,
    /// Frozen uniform grid; the offset head never runs.
    FixedUniform,
    /// Frozen grid built from the task's importance map; the offset head
    /// never runs.
    FixedImportance,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrPolicy {
    /// Controller-driven offset-head rate.
    Dynamic,
    /// Offset-head rate pinned at `base_lr` for the whole run.
    Static,
}

#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub grid_mode: GridMode,
    pub lr_policy: LrPolicy,
    /// Cells per axis (square grid).
    pub k: usize,
    pub iters: usize,
    pub batch_size: usize,
    /// Offset-head rate: the controller's start value, or the fixed rate
    /// under [`LrPolicy::Static`].
    pub base_lr: f64,
    pub seed: u64,
    /// Border probe distance in pixels.
    pub probe_h: u32,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            grid_mode: GridMode::Learned,
            lr_policy: LrPolicy::Dynamic,
            k: 6,
            iters: 2000,
            batch_size: 16,
            base_lr: 0.01,
            seed: 7,
            probe_h: 1,
        }
    }
}

/// Everything a run produces: per-iteration traces, the held-out loss, and
/// the final grid (eval-set mean borders, discretized).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainingReport {
    pub grid_mode: GridMode,
    pub lr_policy: LrPolicy,
    pub k: usize,
    pub iters: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub loss: Vec<f64>,
    pub lr: Vec<f64>,
    pub overpass_fraction: Vec<f64>,
    pub final_loss: f64,
    pub final_lr: f64,
    pub roi_mean_cell_area: f64,
    pub background_mean_cell_area: f64,
    pub final_grid: PoolGrid,
}

impl TrainingReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(json: &str) -> Result<TrainingReport> {
        Ok(serde_json::from_str::<TrainingReport>(json)?)
    }
}

const FEATURE_STRIDE: usize = 4;
const BLOCK: usize = 4;
const EVAL_SAMPLES: usize = 128;
const EVAL_SEED_SALT: u64 = 0x9E37_79B9_7F4A_7C15;

fn feature_count(width: usize, height: usize) -> usize {
    width.div_ceil(FEATURE_STRIDE) * height.div_ceil(FEATURE_STRIDE)
}

fn features_of(img: &Image) -> Vec<f64> {
    let mut f = Vec::with_capacity(feature_count(img.width(), img.height()));
    for y in (0..img.height()).step_by(FEATURE_STRIDE) {
        for x in (0..img.width()).step_by(FEATURE_STRIDE) {
            f.push(img.get(x, y, 0));
        }
    }
    f
}

/// Plain affine layer, zero-initialized; weights stored row-major
/// `[outputs x inputs]`.
#[derive(Clone, Debug)]
struct Affine {
    inputs: usize,
    outputs: usize,
    w: Vec<f64>,
    b: Vec<f64>,
}

impl Affine {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Affine {
            inputs,
            outputs,
            w: vec![0.0; inputs * outputs],
            b: vec![0.0; outputs],
        }
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.inputs);
        (0..self.outputs)
            .map(|o| {
                let row = &self.w[o * self.inputs..(o + 1) * self.inputs];
                self.b[o] + row.iter().zip(x).map(|(w, x)| w * x).sum::<f64>()
            })
            .collect()
    }

    fn step(&mut self, grad: &AffineGrad, lr: f64) {
        for (w, g) in self.w.iter_mut().zip(&grad.w) {
            *w -= lr * g;
        }
        for (b, g) in self.b.iter_mut().zip(&grad.b) {
            *b -= lr * g;
        }
    }
}

#[derive(Clone, Debug)]
struct AffineGrad {
    w: Vec<f64>,
    b: Vec<f64>,
}

impl AffineGrad {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        AffineGrad {
            w: vec![0.0; inputs * outputs],
            b: vec![0.0; outputs],
        }
    }

    /// Accumulates the outer product `g x` into the weight gradient and `g`
    /// into the bias gradient.
    fn add_outer(&mut self, g: &[f64], x: &[f64]) {
        let inputs = x.len();
        for (o, go) in g.iter().enumerate() {
            for (i, xi) in x.iter().enumerate() {
                self.w[o * inputs + i] += go * xi;
            }
            self.b[o] += go;
        }
    }

    fn add(&mut self, other: &AffineGrad) {
        for (a, b) in self.w.iter_mut().zip(&other.w) {
            *a += b;
        }
        for (a, b) in self.b.iter_mut().zip(&other.b) {
            *a += b;
        }
    }

    fn scale(&mut self, s: f64) {
        for a in &mut self.w {
            *a *= s;
        }
        for a in &mut self.b {
            *a *= s;
        }
    }
}

/// Readout weights for one discretized grid: each cell's pixel share of
/// the task patch, `|cell intersect roi| / |roi|`. Cells tile the image, so
/// the weights always sum to one.
fn roi_cell_weights(grid: &PoolGrid, roi: &Rect) -> Vec<f64> {
    let total = roi.area() as f64;
    let mut w = Vec::with_capacity(grid.k_rows() * grid.k_cols());
    for i in 0..grid.k_rows() {
        let (y0, y1) = grid.row_span(i);
        for j in 0..grid.k_cols() {
            let (x0, x1) = grid.col_span(j);
            let dx = x1.min(roi.x + roi.w).saturating_sub(x0.max(roi.x));
            let dy = y1.min(roi.y + roi.h).saturating_sub(y0.max(roi.y));
            w.push((dx * dy) as f64 / total);
        }
    }
    w
}

/// The fixed linear readout: the patch-share weighted sum of cell means,
/// and the constant center-x coordinate. Exact whenever the grid tiles the
/// patch with pure cells, so the loss directly scores border placement.
fn fixed_readout(pooled: &PooledMap, weights: &[f64], center_x: f64) -> [f64; 2] {
    debug_assert_eq!(pooled.data().len(), weights.len());
    let mean = pooled.data().iter().zip(weights).map(|(y, w)| y * w).sum();
    [mean, center_x]
}

/// Euclidean (non-squared) distance and its gradient w.r.t. the
/// prediction. The gradient is the unit direction; at zero distance it is
/// left at zero.
fn euclidean_loss_grad(pred: &[f64], label: &[f64; 2]) -> (f64, [f64; 2]) {
    let d0 = pred[0] - label[0];
    let d1 = pred[1] - label[1];
    let dist = (d0 * d0 + d1 * d1).sqrt();
    if dist > 1e-12 {
        (dist, [d0 / dist, d1 / dist])
    } else {
        (dist, [0.0, 0.0])
    }
}

struct StepOut {
    loss: f64,
    fraction: f64,
    predictor: Option<AffineGrad>,
}

/// Offset scale: cell widths of border movement per unit head output.
/// Together with the controller's rate ceiling this keeps border velocity
/// low enough that the grid walks the loss surface instead of leaping
/// across it; larger scales overshoot the patch edges and clamp-lock.
const OFFSET_SCALE: f64 = 0.05;

fn offset_gain(base: &PoolGrid) -> f64 {
    OFFSET_SCALE * base.width() as f64 / base.k_cols() as f64
}

fn offsets_from(raw: &[f64], k: usize, gain: f64) -> OffsetVector {
    OffsetVector::new(
        raw[..k - 1].iter().map(|o| o * gain).collect(),
        raw[k - 1..].iter().map(|o| o * gain).collect(),
    )
}

fn step_sample(
    img: &Image,
    label: &[f64; 2],
    task: &ToyTask,
    mode: GridMode,
    base: &PoolGrid,
    fixed: Option<&PoolGrid>,
    predictor: &Affine,
    probe_h: u32,
) -> Result<StepOut> {
    match mode {
        GridMode::Learned => {
            let feats = features_of(img);
            let raw = predictor.forward(&feats);
            let k = base.k_cols();
            let gain = offset_gain(base);
            let (real, clamp) = base.apply_offsets(&offsets_from(&raw, k, gain))?;
            let snapped = real.discretize();
            let pooled = pool_forward(img, &snapped)?;
            let weights = roi_cell_weights(&snapped, &task.roi);
            let pred = fixed_readout(&pooled, &weights, task.center_x_norm());
            let (loss, g) = euclidean_loss_grad(&pred, label);

            // dL/dy(cell) through the fixed readout is its weight times the
            // loss direction; the weights themselves are treated as
            // constants of the backward pass.
            let upstream = PooledMap::from_data(
                k,
                base.k_rows(),
                1,
                weights.iter().map(|w| g[0] * w).collect(),
            )?;
            let bg = chain_border_gradients(img, &real, &upstream, probe_h)?;
            // Clamped borders get no pull (the clamp already pinned them);
            // the rest chain through the output gain.
            let mut doff = Vec::with_capacity(bg.col.len() + bg.row.len());
            for (d, &hit) in bg.col.iter().zip(&clamp.col_overpassed) {
                doff.push(if hit { 0.0 } else { gain * *d });
            }
            for (d, &hit) in bg.row.iter().zip(&clamp.row_overpassed) {
                doff.push(if hit { 0.0 } else { gain * *d });
            }
            let mut pg = AffineGrad::zeros(predictor.inputs, predictor.outputs);
            pg.add_outer(&doff, &feats);

            Ok(StepOut {
                loss,
                fraction: clamp.fraction(),
                predictor: Some(pg),
            })
        }
        GridMode::FixedUniform | GridMode::FixedImportance => {
            let grid = fixed.expect("fixed modes carry a grid");
            let pooled = pool_forward(img, grid)?;
            let weights = roi_cell_weights(grid, &task.roi);
            let pred = fixed_readout(&pooled, &weights, task.center_x_norm());
            let (loss, _) = euclidean_loss_grad(&pred, label);
            Ok(StepOut {
                loss,
                fraction: 0.0,
                predictor: None,
            })
        }
    }
}

fn evaluate(
    task: &ToyTask,
    mode: GridMode,
    eval_set: &[(Image, [f64; 2])],
    base: &PoolGrid,
    fixed: Option<&PoolGrid>,
    predictor: &Affine,
) -> Result<(f64, PoolGrid)> {
    let k_cols = base.k_cols();
    let k_rows = base.k_rows();
    let mut loss_sum = 0.0;
    let mut col_acc = vec![0.0; k_cols + 1];
    let mut row_acc = vec![0.0; k_rows + 1];
    for (img, label) in eval_set {
        let real = match mode {
            GridMode::Learned => {
                let raw = predictor.forward(&features_of(img));
                base.apply_offsets(&offsets_from(&raw, k_cols, offset_gain(base)))?.0
            }
            _ => fixed.expect("fixed modes carry a grid").clone(),
        };
        for (a, b) in col_acc.iter_mut().zip(real.col_borders()) {
            *a += b;
        }
        for (a, b) in row_acc.iter_mut().zip(real.row_borders()) {
            *a += b;
        }
        let snapped = real.discretize();
        let pooled = pool_forward(img, &snapped)?;
        let weights = roi_cell_weights(&snapped, &task.roi);
        let pred = fixed_readout(&pooled, &weights, task.center_x_norm());
        loss_sum += euclidean_loss_grad(&pred, label).0;
    }
    let n = eval_set.len() as f64;
    let cols: Vec<f64> = col_acc.iter().map(|s| s / n).collect();
    let rows: Vec<f64> = row_acc.iter().map(|s| s / n).collect();
    // A convex combination of valid grids keeps every gap at >= 1 px.
    let mean_grid = PoolGrid::new(task.size, task.size, cols, rows)
        .expect("mean of valid grids is valid");
    Ok((loss_sum / n, mean_grid))
}

/// Mean discretized cell area over cells that touch `roi` vs the rest.
/// Either mean is NaN when its set is empty.
pub fn roi_cell_area_stats(grid: &PoolGrid, roi: &Rect) -> (f64, f64) {
    let mut roi_sum = 0usize;
    let mut roi_n = 0usize;
    let mut bg_sum = 0usize;
    let mut bg_n = 0usize;
    for i in 0..grid.k_rows() {
        let (y0, y1) = grid.row_span(i);
        for j in 0..grid.k_cols() {
            let (x0, x1) = grid.col_span(j);
            let area = (x1 - x0) * (y1 - y0);
            if roi.intersects_span(x0, x1, y0, y1) {
                roi_sum += area;
                roi_n += 1;
            } else {
                bg_sum += area;
                bg_n += 1;
            }
        }
    }
    let mean = |sum: usize, n: usize| {
        if n == 0 {
            f64::NAN
        } else {
            sum as f64 / n as f64
        }
    };
    (mean(roi_sum, roi_n), mean(bg_sum, bg_n))
}

/// Runs the demo: batched gradient descent on the offset head (in learned
/// mode) through the fixed readout's loss, with the controller or a static
/// rate driving the step size. The held-out loss is measured on a fresh
/// eval set that depends only on the seed, so runs with different modes
/// stay comparable.
pub fn train_demo(task: &ToyTask, cfg: &TrainConfig) -> Result<TrainingReport> {
    if cfg.iters == 0 {
        return Err(Error::InvalidParam("need at least one iteration".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::InvalidParam("need at least one sample per batch".into()));
    }
    if cfg.k < 2 {
        return Err(Error::InvalidParam(
            "the demo needs k >= 2 so borders can move".into(),
        ));
    }
    let base = PoolGrid::uniform(task.size, task.size, cfg.k, cfg.k)?;
    let fixed = match cfg.grid_mode {
        GridMode::Learned => None,
        GridMode::FixedUniform => Some(base.discretize()),
        GridMode::FixedImportance => {
            let map = build_map(task.size, task.size, &task.roi_spec())?;
            Some(grid_from_importance(&map, cfg.k, cfg.k, default_floor(&map))?)
        }
    };

    let mut predictor = Affine::zeros(feature_count(task.size, task.size), 2 * (cfg.k - 1));
    let mut lr_state = LrState::new(cfg.base_lr);
    let mut lr_now = match cfg.lr_policy {
        LrPolicy::Dynamic => lr_state.lr(),
        LrPolicy::Static => cfg.base_lr,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut eval_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ EVAL_SEED_SALT);
    let eval_set: Vec<(Image, [f64; 2])> =
        (0..EVAL_SAMPLES).map(|_| task.sample(&mut eval_rng)).collect();

    let mut loss_trace = Vec::with_capacity(cfg.iters);
    let mut lr_trace = Vec::with_capacity(cfg.iters);
    let mut fraction_trace = Vec::with_capacity(cfg.iters);

    for iter in 0..cfg.iters {
        let batch: Vec<(Image, [f64; 2])> =
            (0..cfg.batch_size).map(|_| task.sample(&mut rng)).collect();
        let outs = batch
            .par_iter()
            .map(|(img, label)| {
                step_sample(
                    img,
                    label,
                    task,
                    cfg.grid_mode,
                    &base,
                    fixed.as_ref(),
                    &predictor,
                    cfg.probe_h,
                )
            })
            .collect::<Result<Vec<StepOut>>>()?;

        // Sequential reduction in batch order keeps runs bit-identical
        // regardless of thread count.
        let scale = 1.0 / cfg.batch_size as f64;
        let mut predictor_grad = AffineGrad::zeros(predictor.inputs, predictor.outputs);
        let mut loss_sum = 0.0;
        let mut fraction_sum = 0.0;
        for out in &outs {
            loss_sum += out.loss;
            fraction_sum += out.fraction;
            if let Some(pg) = &out.predictor {
                predictor_grad.add(pg);
            }
        }
        let mean_loss = loss_sum * scale;
        if !mean_loss.is_finite() {
            return Err(Error::Diverged { iter });
        }
        let mean_fraction = fraction_sum * scale;
        predictor_grad.scale(scale);

        if cfg.grid_mode == GridMode::Learned {
            predictor.step(&predictor_grad, lr_now);
        }

        loss_trace.push(mean_loss);
        lr_trace.push(lr_now);
        fraction_trace.push(mean_fraction);
        if cfg.lr_policy == LrPolicy::Dynamic {
            lr_now = lr_state.observe(mean_fraction);
        }
    }

    let (final_loss, mean_grid) =
        evaluate(task, cfg.grid_mode, &eval_set, &base, fixed.as_ref(), &predictor)?;
    let final_grid = mean_grid.discretize();
    let (roi_mean_cell_area, background_mean_cell_area) =
        roi_cell_area_stats(&final_grid, &task.roi);

    Ok(TrainingReport {
        grid_mode: cfg.grid_mode,
        lr_policy: cfg.lr_policy,
        k: cfg.k,
        iters: cfg.iters,
        batch_size: cfg.batch_size,
        seed: cfg.seed,
        loss: loss_trace,
        lr: lr_trace,
        overpass_fraction: fraction_trace,
        final_loss,
        final_lr: lr_now,
        roi_mean_cell_area,
        background_mean_cell_area,
        final_grid,
    })
}

/// One random gradient-check instance: image, non-aligned grid, upstream.
struct GradCase {
    img: Image,
    grid: PoolGrid,
    upstream: PooledMap,
}

fn random_case(rng: &mut ChaCha8Rng) -> GradCase {
    let w = rng.gen_range(4..=12);
    let h = rng.gen_range(4..=12);
    let ch = rng.gen_range(1..=2);
    let k_cols = rng.gen_range(2..=4);
    let k_rows = rng.gen_range(2..=4);
    let img = Image::new(
        w,
        h,
        ch,
        (0..w * h * ch).map(|_| rng.gen::<f64>()).collect(),
    )
    .expect("case image is well-formed");
    let base = PoolGrid::uniform(w, h, k_cols, k_rows).expect("k fits the extent");
    // Offsets across the whole extent: the clamp turns many of them into
    // 1 px gaps, which exercises the overpass-zero path.
    let offsets = OffsetVector::new(
        (1..k_cols).map(|_| rng.gen_range(-(w as f64)..w as f64)).collect(),
        (1..k_rows).map(|_| rng.gen_range(-(h as f64)..h as f64)).collect(),
    );
    let (grid, _) = base.apply_offsets(&offsets).expect("clamped offsets are safe");
    let upstream = PooledMap::from_data(
        k_cols,
        k_rows,
        ch,
        (0..k_cols * k_rows * ch).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    )
    .expect("upstream matches the grid");
    GradCase { img, grid, upstream }
}

/// Loss whose gradient the checks probe: upstream-weighted sum of pooled
/// cells.
fn probe_loss(img: &Image, grid_d: &PoolGrid, upstream: &PooledMap) -> Result<f64> {
    let y = pool_forward(img, grid_d)?;
    Ok(y.data().iter().zip(upstream.data()).map(|(a, b)| a * b).sum())
}

/// Re-derives one border's chained gradient the slow way: re-pool the whole
/// image with the border probed `+h`, take per-cell forward differences,
/// dot with upstream. Same arithmetic order as the fast path, so agreement
/// is exact, not approximate.
fn brute_force_border(
    img: &Image,
    grid: &PoolGrid,
    upstream: &PooledMap,
    border: Border,
    h: u32,
) -> Result<f64> {
    let base = grid.discretize();
    let base_y = pool_forward(img, &base)?;
    let borders = grid.borders(border.axis);
    let j = border.index;
    let probed = borders[j] + h as f64;
    // Same exactly-rounded overpass test as the fast path.
    if !(borders[j + 1] - probed >= 1.0) {
        return Ok(0.0);
    }
    let mut cols = grid.col_borders().to_vec();
    let mut rows = grid.row_borders().to_vec();
    match border.axis {
        crate::grid::Axis::Col => cols[j] = probed,
        crate::grid::Axis::Row => rows[j] = probed,
    }
    let moved = PoolGrid::new(grid.width(), grid.height(), cols, rows)
        .expect("probe stays a pixel inside the neighbor")
        .discretize();
    if moved == base {
        return Ok(0.0);
    }
    let moved_y = pool_forward(img, &moved)?;
    let hf = h as f64;
    let mut acc = 0.0;
    for ((u, y_new), y_old) in upstream
        .data()
        .iter()
        .zip(moved_y.data())
        .zip(base_y.data())
    {
        acc += u * ((y_new - y_old) / hf);
    }
    Ok(acc)
}

fn check_case(case: &GradCase) -> Result<(bool, f64)> {
    let got = chain_border_gradients(&case.img, &case.grid, &case.upstream, 1)?;
    let mut exact = true;
    for j in 1..case.grid.k_cols() {
        let want = brute_force_border(&case.img, &case.grid, &case.upstream, Border::col(j), 1)?;
        exact &= want == got.col[j - 1];
    }
    for i in 1..case.grid.k_rows() {
        let want = brute_force_border(&case.img, &case.grid, &case.upstream, Border::row(i), 1)?;
        exact &= want == got.row[i - 1];
    }

    // Pooling is linear in the pixels, so central differences agree with
    // the analytic input gradient to rounding error.
    const EPS: f64 = 1e-4;
    const FD_TOL: f64 = 1e-6;
    let grid_d = case.grid.discretize();
    let analytic = input_gradient(&case.upstream, &grid_d)?;
    let mut max_err = 0.0f64;
    for idx in 0..case.img.data().len() {
        let mut plus = case.img.clone();
        plus.data_mut()[idx] += EPS;
        let mut minus = case.img.clone();
        minus.data_mut()[idx] -= EPS;
        let fd = (probe_loss(&plus, &grid_d, &case.upstream)?
            - probe_loss(&minus, &grid_d, &case.upstream)?)
            / (2.0 * EPS);
        max_err = max_err.max((fd - analytic.data()[idx]).abs());
    }
    Ok((exact && max_err <= FD_TOL, max_err))
}

#[derive(Clone, Debug, Serialize)]
pub struct GradcheckReport {
    pub instances: usize,
    pub passed: usize,
    pub max_fd_error: f64,
}

impl GradcheckReport {
    pub fn all_passed(&self) -> bool {
        self.passed == self.instances
    }
}

/// Checks the whole backward contract on random small instances: chained
/// border gradients against a brute-force re-pool (exact match required)
/// and the input gradient against central differences (1e-6).
pub fn gradcheck(seed: u64, instances: usize) -> Result<GradcheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cases: Vec<GradCase> = (0..instances).map(|_| random_case(&mut rng)).collect();
    let checks = cases
        .par_iter()
        .map(check_case)
        .collect::<Result<Vec<(bool, f64)>>>()?;
    let passed = checks.iter().filter(|c| c.0).count();
    let max_fd_error = checks.iter().fold(0.0f64, |m, c| m.max(c.1));
    Ok(GradcheckReport {
        instances,
        passed,
        max_fd_error,
    })
}
