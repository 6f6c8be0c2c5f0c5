//! Acceptance checks: every stated guarantee of the crate, one test each.
//! Each test prints a single `PASS:` line with its measured numbers (visible
//! under `--nocapture`); a failure aborts with a `FAIL:` message instead.

use std::fs;
use std::time::{Duration, Instant};

use adaptive_pool::cli::run_cli;
use adaptive_pool::io::{load_image, save_image, write_text};
use adaptive_pool::train::{LR_MAX, LR_MIN};
use adaptive_pool::{
    compress, gradcheck, pool_forward, train_demo, GridMode, Image, ImportanceMap, LrPolicy,
    LrState, OffsetVector, PoolGrid, Rect, RoiSpec, ToyTask, TrainConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::tempdir;

fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Image {
    let data = (0..w * h).map(|_| rng.gen::<f64>()).collect();
    Image::new(w, h, 1, data).unwrap()
}

/// Chained border gradients match the brute-force repool oracle exactly,
/// and the input gradient matches central finite differences, on 100
/// random small instances inside a 10 s budget.
#[test]
fn gradients_match_brute_force_and_finite_differences() {
    let t0 = Instant::now();
    let report = gradcheck(7, 100).unwrap();
    let elapsed = t0.elapsed();
    assert!(
        report.all_passed(),
        "FAIL: gradient oracle: only {}/{} instances matched (max input-grad fd error {:.3e})",
        report.passed,
        report.instances,
        report.max_fd_error
    );
    assert!(
        report.max_fd_error <= 1e-6,
        "FAIL: input gradient fd error {:.3e} exceeds 1e-6",
        report.max_fd_error
    );
    assert!(
        elapsed < Duration::from_secs(10),
        "FAIL: gradient oracle took {elapsed:.2?}, budget is 10 s"
    );
    println!(
        "PASS: gradient oracle: {}/{} instances exact, input-grad fd error {:.3e} <= 1e-6, {:.2?}",
        report.passed, report.instances, report.max_fd_error, elapsed
    );
}

/// Pooled means weighted by their cell areas recover the image total to
/// 1e-9 relative on 1000 random image/grid pairs inside a 5 s budget.
#[test]
fn pooling_conserves_mass_on_a_thousand_random_pairs() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let w = rng.gen_range(4..40);
        let h = rng.gen_range(4..40);
        let img = random_image(&mut rng, w, h);
        let kc = rng.gen_range(1..=w.min(7));
        let kr = rng.gen_range(1..=h.min(7));
        let base = PoolGrid::uniform(w, h, kc, kr).unwrap();
        let col = (0..kc - 1).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let row = (0..kr - 1).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let grid = base
            .apply_offsets(&OffsetVector::new(col, row))
            .unwrap()
            .0
            .discretize();

        let pooled = pool_forward(&img, &grid).unwrap();
        let total: f64 = img.data().iter().sum();
        let back: f64 = pooled
            .data()
            .iter()
            .zip(grid.cell_areas())
            .map(|(y, n)| y * n as f64)
            .sum();
        let rel = (back - total).abs() / total.abs().max(1.0);
        worst = worst.max(rel);
        assert!(
            rel <= 1e-9,
            "FAIL: mass off by {rel:.3e} relative on a {w}x{h} image with {kc}x{kr} cells"
        );
    }
    let elapsed = t0.elapsed();
    assert!(
        elapsed < Duration::from_secs(5),
        "FAIL: mass conservation took {elapsed:.2?}, budget is 5 s"
    );
    println!(
        "PASS: mass conservation: 1000 pairs within 1e-9 relative (worst {worst:.3e}), {elapsed:.2?}"
    );
}

/// Clamping keeps every grid valid under 10^4 fuzzed offset vectors with
/// magnitudes up to ten times the image extent, inside a 5 s budget.
#[test]
fn extreme_offsets_never_corrupt_grids() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for case in 0..10_000 {
        let w = rng.gen_range(4usize..40);
        let h = rng.gen_range(4usize..40);
        let kc = rng.gen_range(2..=w.min(8));
        let kr = rng.gen_range(2..=h.min(8));
        let base = PoolGrid::uniform(w, h, kc, kr).unwrap();
        let span_w = 10.0 * w as f64;
        let span_h = 10.0 * h as f64;
        let col = (0..kc - 1).map(|_| rng.gen_range(-span_w..span_w)).collect();
        let row = (0..kr - 1).map(|_| rng.gen_range(-span_h..span_h)).collect();

        let (moved, _) = base.apply_offsets(&OffsetVector::new(col, row)).unwrap();
        for (borders, extent) in [(moved.col_borders(), w), (moved.row_borders(), h)] {
            assert_eq!(borders[0], 0.0, "FAIL: case {case}: first border moved");
            assert_eq!(
                *borders.last().unwrap(),
                extent as f64,
                "FAIL: case {case}: last border moved"
            );
            for pair in borders.windows(2) {
                assert!(
                    pair[1] - pair[0] >= 1.0 - 1e-9,
                    "FAIL: case {case}: borders {} and {} collapsed",
                    pair[0],
                    pair[1]
                );
            }
        }
        // The snapped grid must hold exact one-pixel gaps.
        let snapped = moved.discretize();
        for borders in [snapped.col_borders(), snapped.row_borders()] {
            for pair in borders.windows(2) {
                assert!(
                    pair[1] - pair[0] >= 1.0 && pair[1] == pair[1].trunc(),
                    "FAIL: case {case}: snapped borders {} and {}",
                    pair[0],
                    pair[1]
                );
            }
        }
    }
    let elapsed = t0.elapsed();
    assert!(
        elapsed < Duration::from_secs(5),
        "FAIL: clamp fuzz took {elapsed:.2?}, budget is 5 s"
    );
    println!("PASS: clamp safety: 10000 fuzzed offset vectors, all grids valid, {elapsed:.2?}");
}

/// The controller reproduces the four worked examples exactly and a
/// 10^5-step random-fraction fuzz never leaves [1e-6, 1e-1].
#[test]
fn lr_controller_worked_examples_and_bounds() {
    let run = |start: f64, fraction: f64| {
        let mut s = LrState::new(start);
        for _ in 0..10 {
            s.observe(fraction);
        }
        s.lr()
    };
    assert_eq!(run(0.01, 0.25), 0.001, "FAIL: shrink example");
    assert_eq!(run(0.01, 0.05), 0.1, "FAIL: grow-to-clamp example");
    assert_eq!(run(1e-6, 0.5), 1e-6, "FAIL: lower-clamp example");
    assert_eq!(run(0.01, 0.15), 0.01, "FAIL: dead-zone example");

    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let mut s = LrState::new(0.01);
    for step in 0..100_000 {
        let lr = s.observe(rng.gen::<f64>());
        assert!(
            (LR_MIN..=LR_MAX).contains(&lr),
            "FAIL: lr {lr:e} left [{LR_MIN:e}, {LR_MAX:e}] at step {step}"
        );
    }
    println!(
        "PASS: lr controller: 4 worked examples exact, 100000-step fuzz stayed in [{LR_MIN:e}, {LR_MAX:e}]"
    );
}

/// With a uniform importance map, compress degenerates to fixed-stride
/// average pooling, cell for cell, on an evenly divisible size.
#[test]
fn uniform_importance_reduces_to_fixed_stride_pooling() {
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    let img = random_image(&mut rng, 120, 120);
    let map = ImportanceMap::uniform(120, 120, 1.0).unwrap();
    let (pooled, grid) = compress(&img, &map, 30, 30).unwrap();
    assert_eq!((pooled.k_cols(), pooled.k_rows()), (30, 30));

    let reference = PoolGrid::uniform(120, 120, 30, 30).unwrap().discretize();
    assert_eq!(
        grid.col_borders(),
        reference.col_borders(),
        "FAIL: uniform map produced non-uniform column borders"
    );
    assert_eq!(grid.row_borders(), reference.row_borders());

    for i in 0..30 {
        for j in 0..30 {
            let mut sum = 0.0;
            for y in i * 4..(i + 1) * 4 {
                for x in j * 4..(j + 1) * 4 {
                    sum += img.get(x, y, 0);
                }
            }
            let expect = sum / 16.0;
            assert_eq!(
                pooled.get(i, j, 0).to_bits(),
                expect.to_bits(),
                "FAIL: cell ({i},{j}): {} != fixed-stride {expect}",
                pooled.get(i, j, 0)
            );
        }
    }
    println!("PASS: uniform reduction: 120x120 -> 30x30 equals fixed-stride pooling bitwise");
}

/// On the seeded 32x32 patch-regression task, 2000 iterations finish
/// within two minutes and the held-out losses order learned <= importance
/// <= uniform, with the learned grid spending its resolution on the patch.
#[test]
fn learned_grid_beats_fixed_baselines_on_the_toy_task() {
    let task = ToyTask::canonical();
    let cfg = |mode: GridMode| TrainConfig {
        grid_mode: mode,
        ..TrainConfig::default()
    };

    let t0 = Instant::now();
    let learned = train_demo(&task, &cfg(GridMode::Learned)).unwrap();
    let importance = train_demo(&task, &cfg(GridMode::FixedImportance)).unwrap();
    let uniform = train_demo(&task, &cfg(GridMode::FixedUniform)).unwrap();
    let elapsed = t0.elapsed();

    assert!(
        elapsed <= Duration::from_secs(120),
        "FAIL: toy-task runs took {elapsed:.2?}, budget is 2 min"
    );
    assert!(
        learned.final_loss <= importance.final_loss,
        "FAIL: learned loss {:.6} > importance-grid loss {:.6}",
        learned.final_loss,
        importance.final_loss
    );
    assert!(
        importance.final_loss <= uniform.final_loss,
        "FAIL: importance-grid loss {:.6} > uniform loss {:.6}",
        importance.final_loss,
        uniform.final_loss
    );
    assert!(
        learned.roi_mean_cell_area < learned.background_mean_cell_area,
        "FAIL: learned grid's patch cells ({:.1} px) are not finer than background cells ({:.1} px)",
        learned.roi_mean_cell_area,
        learned.background_mean_cell_area
    );
    println!(
        "PASS: toy-task ordering: learned {:.4} <= importance {:.4} <= uniform {:.4}; \
         patch cells {:.1} px < background {:.1} px; {:.2?}",
        learned.final_loss,
        importance.final_loss,
        uniform.final_loss,
        learned.roi_mean_cell_area,
        learned.background_mean_cell_area,
        elapsed
    );
}

/// Under the same seed, the dynamic-rate run ends at a loss no worse than
/// the run with the rate pinned at 0.01.
#[test]
fn dynamic_rate_matches_or_beats_static_rate() {
    let task = ToyTask::canonical();
    let dynamic = train_demo(
        &task,
        &TrainConfig {
            lr_policy: LrPolicy::Dynamic,
            ..TrainConfig::default()
        },
    )
    .unwrap();
    let fixed = train_demo(
        &task,
        &TrainConfig {
            lr_policy: LrPolicy::Static,
            ..TrainConfig::default()
        },
    )
    .unwrap();
    assert!(
        dynamic.final_loss <= fixed.final_loss,
        "FAIL: dynamic-rate loss {:.6} > static-rate loss {:.6}",
        dynamic.final_loss,
        fixed.final_loss
    );
    println!(
        "PASS: rate policies: dynamic {:.4} <= static(0.01) {:.4} (final lr {:.0e} vs {:.0e})",
        dynamic.final_loss, fixed.final_loss, dynamic.final_lr, fixed.final_lr
    );
}

/// The compress -> grid-out -> grid-viz pipeline runs end to end on a
/// 112x112 image producing a 30x30 output, byte-identical across reruns.
#[test]
fn cli_compress_pipeline_is_deterministic() {
    let dir = tempdir().unwrap();
    let input = dir.path().join("in.pgm");
    let rois = dir.path().join("rois.json");
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    save_image(&input, &random_image(&mut rng, 112, 112)).unwrap();
    let spec = RoiSpec {
        rois: vec![Rect::new(14, 42, 28, 28)],
        ring_px: 14,
        ring_value: 0.5,
    };
    write_text(&rois, &spec.to_json()).unwrap();

    let run = |tag: &str| {
        let out = dir.path().join(format!("out-{tag}.pgm"));
        let grid = dir.path().join(format!("grid-{tag}.json"));
        let viz = dir.path().join(format!("viz-{tag}.pgm"));
        for (args, what) in [
            (
                vec![
                    "adaptive-pool",
                    "compress",
                    "--input",
                    input.to_str().unwrap(),
                    "--output",
                    out.to_str().unwrap(),
                    "--rois",
                    rois.to_str().unwrap(),
                    "--grid-out",
                    grid.to_str().unwrap(),
                    "--k",
                    "30",
                ],
                "compress",
            ),
            (
                vec![
                    "adaptive-pool",
                    "grid-viz",
                    "--grid",
                    grid.to_str().unwrap(),
                    "--output",
                    viz.to_str().unwrap(),
                ],
                "grid-viz",
            ),
        ] {
            assert_eq!(run_cli(args), 0, "FAIL: {what} exited nonzero");
        }
        (
            fs::read(&out).unwrap(),
            fs::read(&grid).unwrap(),
            fs::read(&viz).unwrap(),
        )
    };

    let first = run("a");
    let second = run("b");
    assert_eq!(first, second, "FAIL: pipeline outputs differ between reruns");

    let pooled = load_image(&dir.path().join("out-a.pgm")).unwrap();
    assert_eq!(
        (pooled.width(), pooled.height()),
        (30, 30),
        "FAIL: expected a 30x30 output"
    );
    println!(
        "PASS: cli pipeline: 112x112 -> 30x30 compress/grid-out/grid-viz byte-identical across reruns"
    );
}
