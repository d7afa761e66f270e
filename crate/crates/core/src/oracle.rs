//! Independent ground-truth implementations used by tests and the
//! `gradcheck` command: exact pixel coverage via polygon clipping, exact
//! reference images, central finite differences, and the seeded sweeps
//! that compare the analytical partials against them.
//!
//! Nothing here is used on the production forward/backward path, and the
//! coverage computation shares no code with the sampling rasterizer or the
//! closed-form partials it checks.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::clip::{clip_polygon_to_rect, liang_barsky_clip, polygon_area, Segment};
use crate::error::{Error, Result};
use crate::geometry::{signed_area, Rect, ScreenMesh, Vec2};
use crate::raster_backward::{backward, edge_pixel_partials};
use crate::raster_forward::{RenderSettings, SilhouetteImage};

/// Exact mean intensity of one triangle over one pixel:
/// p0 + (p1 - p0) * area(triangle ∩ pixel) / area(pixel).
pub fn exact_pixel_coverage(triangle: &[Vec2; 3], pixel: &Rect, p0: f64, p1: f64) -> Result<f64> {
    if signed_area(triangle[0], triangle[1], triangle[2]) == 0.0 {
        return Err(Error::DegenerateTriangle);
    }
    let clipped = clip_polygon_to_rect(triangle, pixel);
    Ok(p0 + (p1 - p0) * polygon_area(&clipped) / pixel.area())
}

/// Exact single-triangle reference image.
pub fn exact_image(
    triangle: &[Vec2; 3],
    height: usize,
    width: usize,
    p0: f64,
    p1: f64,
) -> Result<SilhouetteImage> {
    let mut img = SilhouetteImage::constant(height, width, p0, p0, p1);
    for i in 0..height {
        for j in 0..width {
            img.set(
                i,
                j,
                exact_pixel_coverage(triangle, &Rect::pixel(i, j), p0, p1)?,
            );
        }
    }
    Ok(img)
}

/// Exact reference image for a union of triangles with pairwise disjoint
/// interiors (per-pixel areas are then additive). Valid for meshes posed so
/// that no two projected faces overlap beyond shared edges.
pub fn exact_union_image(
    triangles: &[[Vec2; 3]],
    height: usize,
    width: usize,
    p0: f64,
    p1: f64,
) -> Result<SilhouetteImage> {
    let mut img = SilhouetteImage::constant(height, width, p0, p0, p1);
    for i in 0..height {
        for j in 0..width {
            let pixel = Rect::pixel(i, j);
            let mut fraction = 0.0;
            for tri in triangles {
                let clipped = clip_polygon_to_rect(tri, &pixel);
                fraction += polygon_area(&clipped) / pixel.area();
            }
            img.set(i, j, p0 + (p1 - p0) * fraction);
        }
    }
    Ok(img)
}

/// Central-difference gradient of a scalar function of a parameter vector.
pub fn finite_difference(loss_fn: impl Fn(&[f64]) -> f64, params: &[f64], h: f64) -> Vec<f64> {
    let mut grad = vec![0.0; params.len()];
    let mut work = params.to_vec();
    for (i, g) in grad.iter_mut().enumerate() {
        let orig = work[i];
        work[i] = orig + h;
        let plus = loss_fn(&work);
        work[i] = orig - h;
        let minus = loss_fn(&work);
        work[i] = orig;
        *g = (plus - minus) / (2.0 * h);
    }
    grad
}

/// Outcome of one verification sweep: the largest scaled error
/// `|analytic - fd| / (atol/rtol + |fd|)` over all comparisons, which is
/// below `rtol` exactly when every comparison satisfies
/// `|analytic - fd| <= atol + rtol * |fd|`.
#[derive(Debug, Clone, Copy)]
pub struct SweepReport {
    pub trials: usize,
    pub comparisons: usize,
    pub max_scaled_err: f64,
    pub max_abs_err: f64,
}

impl SweepReport {
    pub fn passes(&self, rtol: f64) -> bool {
        self.max_scaled_err <= rtol
    }
}

fn scaled_err(analytic: f64, fd: f64, atol: f64, rtol: f64) -> f64 {
    (analytic - fd).abs() / (atol / rtol + fd.abs())
}

/// One random edge/pixel configuration for the partials sweep: a line
/// crossing the unit pixel with both endpoints well outside it, embedded as
/// one edge of a large triangle whose other two edges stay clear of the
/// pixel. Within the pixel the triangle is then exactly the half-plane the
/// closed forms differentiate.
fn sample_edge_config(rng: &mut ChaCha8Rng, pixel: &Rect) -> Option<(Vec2, Vec2, Vec2)> {
    let anchor = Vec2::new(
        pixel.x_min + rng.gen_range(0.05..0.95) * pixel.width(),
        pixel.y_min + rng.gen_range(0.05..0.95) * pixel.height(),
    );
    let angle = rng.gen_range(0.0..std::f64::consts::TAU);
    let dir = Vec2::new(angle.cos(), angle.sin());
    let v_a = anchor - dir * rng.gen_range(1.5..4.0);
    let v_b = anchor + dir * rng.gen_range(1.5..4.0);

    let clipped = liang_barsky_clip(Segment::new(v_a, v_b), pixel)?;
    if clipped.length() <= 1e-3 {
        return None;
    }
    // Central differences at h = 1e-5 degrade when a clip endpoint sits on
    // a pixel corner (the coverage has a curvature jump there); keep a
    // small margin so the oracle itself stays quadratic over the stencil.
    let corners = [
        Vec2::new(pixel.x_min, pixel.y_min),
        Vec2::new(pixel.x_max, pixel.y_min),
        Vec2::new(pixel.x_min, pixel.y_max),
        Vec2::new(pixel.x_max, pixel.y_max),
    ];
    for corner in corners {
        if (clipped.a - corner).length() < 1e-3 || (clipped.b - corner).length() < 1e-3 {
            return None;
        }
    }

    // Third vertex far on the foreground (alpha < 0) side of a -> b.
    let normal = Vec2::new(-(v_b.y - v_a.y), -(v_a.x - v_b.x));
    let normal = normal * (1.0 / normal.length());
    let mid = Vec2::new(
        (clipped.a.x + clipped.b.x) * 0.5,
        (clipped.a.y + clipped.b.y) * 0.5,
    );
    let c = mid + normal * 8.0;

    // The auxiliary triangle edges must not reach the pixel, or the
    // exact-coverage derivative would include their motion too.
    if liang_barsky_clip(Segment::new(v_b, c), pixel).is_some()
        || liang_barsky_clip(Segment::new(c, v_a), pixel).is_some()
    {
        return None;
    }
    Some((v_a, v_b, c))
}

/// Compares the four closed-form edge partials against central finite
/// differences of the exact-coverage oracle on `trials` random edge/pixel
/// configurations (clipped length > 1e-3 px).
pub fn edge_partials_fd_sweep(trials: usize, seed: u64, atol: f64, rtol: f64) -> SweepReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pixel = Rect::new(0.0, 0.0, 1.0, 1.0);
    let h = 1e-5;
    let mut report = SweepReport {
        trials: 0,
        comparisons: 0,
        max_scaled_err: 0.0,
        max_abs_err: 0.0,
    };

    while report.trials < trials {
        let Some((v_a, v_b, c)) = sample_edge_config(&mut rng, &pixel) else {
            continue;
        };
        report.trials += 1;

        let partials = edge_pixel_partials(v_a, v_b, &pixel, 0.0, 1.0).unwrap();
        let analytic = [partials.d_x0, partials.d_y0, partials.d_x1, partials.d_y1];

        let coverage = |coords: &[f64]| {
            let tri = [
                Vec2::new(coords[0], coords[1]),
                Vec2::new(coords[2], coords[3]),
                c,
            ];
            exact_pixel_coverage(&tri, &pixel, 0.0, 1.0).unwrap()
        };
        let fd = finite_difference(coverage, &[v_a.x, v_a.y, v_b.x, v_b.y], h);

        for (a, f) in analytic.into_iter().zip(fd) {
            report.comparisons += 1;
            report.max_abs_err = report.max_abs_err.max((a - f).abs());
            report.max_scaled_err = report.max_scaled_err.max(scaled_err(a, f, atol, rtol));
        }
    }
    report
}

/// End-to-end check on single random triangles: the full analytic chain
/// (boundary mask, silhouette edges, per-pixel partials, accumulation)
/// against finite differences of the exact-coverage loss L = sum I^2.
pub fn end_to_end_fd_sweep(trials: usize, seed: u64, atol: f64, rtol: f64) -> SweepReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (h_img, w_img) = (16usize, 16usize);
    let h = 1e-5;
    let settings = RenderSettings::default();
    let mut report = SweepReport {
        trials: 0,
        comparisons: 0,
        max_scaled_err: 0.0,
        max_abs_err: 0.0,
    };

    let loss_of = |coords: &[f64]| {
        let tri = [
            Vec2::new(coords[0], coords[1]),
            Vec2::new(coords[2], coords[3]),
            Vec2::new(coords[4], coords[5]),
        ];
        let img = exact_image(&tri, h_img, w_img, 0.0, 1.0).unwrap();
        img.data.iter().map(|v| v * v).sum::<f64>()
    };

    while report.trials < trials {
        let tri = [
            Vec2::new(rng.gen_range(2.0..14.0), rng.gen_range(2.0..14.0)),
            Vec2::new(rng.gen_range(2.0..14.0), rng.gen_range(2.0..14.0)),
            Vec2::new(rng.gen_range(2.0..14.0), rng.gen_range(2.0..14.0)),
        ];
        if signed_area(tri[0], tri[1], tri[2]).abs() < 2.0 {
            continue; // skip slivers: well-conditioned shapes only
        }
        report.trials += 1;

        let screen = ScreenMesh {
            vertices: tri.to_vec(),
            faces: vec![[0, 1, 2]],
            depths: vec![1.0; 3],
        };
        let img = exact_image(&tri, h_img, w_img, 0.0, 1.0).unwrap();
        let loss_grads: Vec<f64> = img.data.iter().map(|v| 2.0 * v).collect();
        let grads = backward(&img, &loss_grads, &screen, &settings).unwrap();

        let flat = [tri[0].x, tri[0].y, tri[1].x, tri[1].y, tri[2].x, tri[2].y];
        let fd = finite_difference(loss_of, &flat, h);

        for v in 0..3 {
            for (a, f) in [
                (grads.grads[v].x, fd[2 * v]),
                (grads.grads[v].y, fd[2 * v + 1]),
            ] {
                report.comparisons += 1;
                report.max_abs_err = report.max_abs_err.max((a - f).abs());
                report.max_scaled_err = report.max_scaled_err.max(scaled_err(a, f, atol, rtol));
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster_forward::rasterize;

    #[test]
    fn coverage_examples() {
        let pixel = Rect::new(0.0, 0.0, 1.0, 1.0);
        let covering = [
            Vec2::new(-10.0, -10.0),
            Vec2::new(20.0, -10.0),
            Vec2::new(-10.0, 20.0),
        ];
        assert_eq!(
            exact_pixel_coverage(&covering, &pixel, 0.0, 1.0).unwrap(),
            1.0
        );

        let distant = [
            Vec2::new(5.0, 5.0),
            Vec2::new(6.0, 5.0),
            Vec2::new(5.0, 6.0),
        ];
        assert_eq!(
            exact_pixel_coverage(&distant, &pixel, 0.0, 1.0).unwrap(),
            0.0
        );

        let half = [
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(0.0, 1.0),
        ];
        assert_eq!(exact_pixel_coverage(&half, &pixel, 0.0, 1.0).unwrap(), 0.5);

        let degenerate = [
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 1.0),
            Vec2::new(2.0, 2.0),
        ];
        assert!(exact_pixel_coverage(&degenerate, &pixel, 0.0, 1.0).is_err());
    }

    #[test]
    fn coverage_sums_to_triangle_area() {
        let tri = [
            Vec2::new(2.3, 1.7),
            Vec2::new(10.8, 3.1),
            Vec2::new(5.4, 11.6),
        ];
        let mut total = 0.0;
        for i in 0..16 {
            for j in 0..16 {
                total += exact_pixel_coverage(&tri, &Rect::pixel(i, j), 0.0, 1.0).unwrap();
            }
        }
        let area = signed_area(tri[0], tri[1], tri[2]).abs();
        assert!((total - area).abs() < 1e-9, "total {total} vs area {area}");
    }

    #[test]
    fn exact_image_translation_equivariance() {
        let tri = [
            Vec2::new(2.2, 2.9),
            Vec2::new(6.7, 3.4),
            Vec2::new(3.8, 7.1),
        ];
        let shifted = [
            tri[0] + Vec2::new(3.0, 2.0),
            tri[1] + Vec2::new(3.0, 2.0),
            tri[2] + Vec2::new(3.0, 2.0),
        ];
        let a = exact_image(&tri, 16, 16, 0.0, 1.0).unwrap();
        let b = exact_image(&shifted, 16, 16, 0.0, 1.0).unwrap();
        for i in 0..12 {
            for j in 0..10 {
                assert!((a.get(i, j) - b.get(i + 2, j + 3)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn exact_image_matches_high_f_rasterization() {
        let tri = [
            Vec2::new(2.1, 1.8),
            Vec2::new(11.3, 4.2),
            Vec2::new(5.2, 12.4),
        ];
        let screen = ScreenMesh {
            vertices: tri.to_vec(),
            faces: vec![[0, 1, 2]],
            depths: vec![1.0; 3],
        };
        let sampled = rasterize(
            &screen,
            14,
            14,
            &RenderSettings::default().with_supersampling(256),
        );
        let exact = exact_image(&tri, 14, 14, 0.0, 1.0).unwrap();
        for (s, e) in sampled.data.iter().zip(&exact.data) {
            assert!((s - e).abs() < 0.004, "sampled {s} vs exact {e}");
        }
    }

    #[test]
    fn finite_difference_examples() {
        let square = |p: &[f64]| p[0] * p[0];
        let g = finite_difference(square, &[3.0], 1e-4);
        assert!((g[0] - 6.0).abs() < 1e-7);

        let constant = |_: &[f64]| 42.0;
        let g = finite_difference(constant, &[1.0, 2.0, 3.0], 1e-4);
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn quick_edge_partial_sweep() {
        let report = edge_partials_fd_sweep(50, 1234, 1e-9, 1e-6);
        assert_eq!(report.trials, 50);
        assert!(
            report.passes(1e-6),
            "max scaled err {:.3e}",
            report.max_scaled_err
        );
    }

    #[test]
    fn quick_end_to_end_sweep() {
        let report = end_to_end_fd_sweep(10, 99, 1e-9, 1e-5);
        assert!(
            report.passes(1e-5),
            "max scaled err {:.3e}",
            report.max_scaled_err
        );
    }
}
