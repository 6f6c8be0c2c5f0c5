//! Oracle tests pitting the pooling forward/backward pair against
//! independent references: total-mass bookkeeping, a fixed-stride
//! reference implementation, and the adjoint identity.

use adaptive_pool::{
    input_gradient, pool_forward, upscale_with_grid, Image, OffsetVector, PoolGrid, PooledMap,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize, channels: usize) -> Image {
    let data = (0..w * h * channels).map(|_| rng.gen::<f64>()).collect();
    Image::new(w, h, channels, data).unwrap()
}

fn random_grid(rng: &mut ChaCha8Rng, w: usize, h: usize) -> PoolGrid {
    let kc = rng.gen_range(1..=w.min(7));
    let kr = rng.gen_range(1..=h.min(7));
    let base = PoolGrid::uniform(w, h, kc, kr).unwrap();
    let col = (0..kc - 1).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let row = (0..kr - 1).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let (moved, _) = base.apply_offsets(&OffsetVector::new(col, row)).unwrap();
    moved.discretize()
}

/// Every pooled value times its cell's pixel count must add back up to the
/// image total: averaging moves mass around but never creates or loses it.
#[test]
fn pooled_means_conserve_total_mass() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..300 {
        let w = rng.gen_range(4..40);
        let h = rng.gen_range(4..40);
        let channels = rng.gen_range(1..=3);
        let img = random_image(&mut rng, w, h, channels);
        let grid = random_grid(&mut rng, w, h);
        let pooled = pool_forward(&img, &grid).unwrap();
        let areas = grid.cell_areas();
        for ch in 0..channels {
            let total: f64 = (0..h)
                .flat_map(|y| (0..w).map(move |x| (x, y)))
                .map(|(x, y)| img.get(x, y, ch))
                .sum();
            let mut pooled_total = 0.0;
            for i in 0..grid.k_rows() {
                for j in 0..grid.k_cols() {
                    pooled_total +=
                        pooled.get(i, j, ch) * areas[i * grid.k_cols() + j] as f64;
                }
            }
            let rel = (pooled_total - total).abs() / total.abs().max(1.0);
            assert!(
                rel <= 1e-9,
                "case {case} ch {ch}: pooled mass {pooled_total} vs image mass {total}"
            );
        }
    }
}

/// On evenly divisible sizes a uniform grid is plain fixed-stride average
/// pooling. Both sides sum pixels in the same row-major order, so the
/// match is bitwise.
#[test]
fn uniform_grid_pooling_equals_fixed_stride_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for &(size, k) in &[(24usize, 6usize), (120, 30)] {
        let stride = size / k;
        let img = random_image(&mut rng, size, size, 1);
        let grid = PoolGrid::uniform(size, size, k, k).unwrap().discretize();
        let pooled = pool_forward(&img, &grid).unwrap();
        for i in 0..k {
            for j in 0..k {
                let mut sum = 0.0;
                for y in i * stride..(i + 1) * stride {
                    for x in j * stride..(j + 1) * stride {
                        sum += img.get(x, y, 0);
                    }
                }
                let expect = sum / (stride * stride) as f64;
                assert_eq!(
                    pooled.get(i, j, 0).to_bits(),
                    expect.to_bits(),
                    "cell ({i},{j}) of {size}x{size}/{k}"
                );
            }
        }
    }
}

/// Pooling is a linear map A; `input_gradient` applies its transpose. For
/// any image x and upstream u, <u, Ax> must equal <A^T u, x>.
#[test]
fn input_gradient_is_the_adjoint_of_pooling() {
    let mut rng = ChaCha8Rng::seed_from_u64(37);
    for case in 0..100 {
        let w = rng.gen_range(4..32);
        let h = rng.gen_range(4..32);
        let img = random_image(&mut rng, w, h, 1);
        let grid = random_grid(&mut rng, w, h);
        let upstream_data = (0..grid.k_rows() * grid.k_cols())
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        let upstream =
            PooledMap::from_data(grid.k_cols(), grid.k_rows(), 1, upstream_data).unwrap();

        let pooled = pool_forward(&img, &grid).unwrap();
        let lhs: f64 = pooled
            .data()
            .iter()
            .zip(upstream.data())
            .map(|(y, u)| y * u)
            .sum();

        let grad = input_gradient(&upstream, &grid).unwrap();
        let rhs: f64 = grad
            .data()
            .iter()
            .zip(img.data())
            .map(|(g, x)| g * x)
            .sum();

        assert!(
            (lhs - rhs).abs() <= 1e-9 * lhs.abs().max(1.0),
            "case {case}: <u, Ax> = {lhs} but <A^T u, x> = {rhs}"
        );
    }
}

/// Upscaling paints each pixel with its cell's pooled value, so pooling
/// the upscaled image over the same grid gives the pooled map back.
#[test]
fn upscale_then_repool_recovers_the_pooled_map() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for _ in 0..50 {
        let w = rng.gen_range(4..32);
        let h = rng.gen_range(4..32);
        let img = random_image(&mut rng, w, h, 1);
        let grid = random_grid(&mut rng, w, h);
        let pooled = pool_forward(&img, &grid).unwrap();
        let up = upscale_with_grid(&pooled, &grid).unwrap();
        assert_eq!(up.width(), w);
        assert_eq!(up.height(), h);
        let again = pool_forward(&up, &grid).unwrap();
        for (a, b) in again.data().iter().zip(pooled.data()) {
            assert!((a - b).abs() <= 1e-12, "repooled {a} vs pooled {b}");
        }
    }
}

/// A constant image pools to that constant in every cell.
#[test]
fn constant_image_pools_to_the_constant() {
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    let img = Image::filled(19, 13, 2, 0.5);
    let grid = random_grid(&mut rng, 19, 13);
    let pooled = pool_forward(&img, &grid).unwrap();
    // 0.5 * n is exact in f64, so the means are exact too.
    assert!(pooled.data().iter().all(|&v| v == 0.5));
}
