//! Analytical backward pass: from per-pixel loss gradients to per-vertex
//! screen-space gradients.
//!
//! Every silhouette edge contributes to a pixel through the closed-form
//! partial derivatives of the coverage integral with respect to the edge
//! endpoints. With the edge line written as `alpha(x, y) = A x + B y + C`
//! (A = y1-y0, B = x0-x1, C = x1 y0 - x0 y1) and foreground on the
//! `alpha < 0` side, the integral limits k0, k1 come from the
//! Liang-Barsky clip of the edge against the pixel square, transformed by
//! k = -B x + A y. Gradients flow only at boundary pixels of the rendered
//! silhouette, so edge detection runs first and bounding-box culling skips
//! pixels an edge cannot touch.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::clip::{liang_barsky_clip, Segment};
use crate::error::{Error, Result};
use crate::geometry::{Rect, ScreenMesh, Vec2};
use crate::raster_forward::{
    point_in_triangle, rasterize, RenderSettings, SilhouetteImage, TileIndex,
};

/// Projected edges shorter than sqrt of this (in squared length) have no
/// well-defined line and are skipped.
pub const EDGE_DEGENERACY_THRESHOLD: f64 = 1e-18;

/// Projected faces with |signed area| at or below this are degenerate:
/// skipped for classification and never considered front-facing.
pub const FACE_AREA_EPSILON: f64 = 1e-12;

/// Coefficients of the edge line `A x + B y + C = 0` through the directed
/// edge (x0, y0) -> (x1, y1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeCoefficients {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl EdgeCoefficients {
    /// alpha(x, y) = A x + B y + C.
    #[inline]
    pub fn eval(&self, p: Vec2) -> f64 {
        self.a * p.x + self.b * p.y + self.c
    }

    /// Squared edge length, A^2 + B^2.
    #[inline]
    pub fn length_squared(&self) -> f64 {
        self.a * self.a + self.b * self.b
    }
}

/// A = y1 - y0, B = x0 - x1, C = x1 y0 - x0 y1.
pub fn edge_coefficients(v_a: Vec2, v_b: Vec2) -> EdgeCoefficients {
    EdgeCoefficients {
        a: v_b.y - v_a.y,
        b: v_a.x - v_b.x,
        c: v_b.x * v_a.y - v_a.x * v_b.y,
    }
}

/// The four partial derivatives of one pixel's intensity with respect to
/// the edge endpoint coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EdgePixelPartials {
    pub d_x0: f64,
    pub d_y0: f64,
    pub d_x1: f64,
    pub d_y1: f64,
}

impl EdgePixelPartials {
    pub const ZERO: EdgePixelPartials = EdgePixelPartials {
        d_x0: 0.0,
        d_y0: 0.0,
        d_x1: 0.0,
        d_y1: 0.0,
    };
}

/// Closed-form partials given a precomputed clip of the edge against the
/// pixel. `v_a`/`v_b` are the unclipped endpoints: the line coefficients
/// depend on them, while only the integral limits come from the clip.
fn partials_from_clip(
    v_a: Vec2,
    v_b: Vec2,
    co: &EdgeCoefficients,
    clipped: &Segment,
    p0: f64,
    p1: f64,
    pixel_area: f64,
) -> EdgePixelPartials {
    let l2 = co.length_squared();
    let k0 = -co.b * clipped.a.x + co.a * clipped.a.y;
    let k1 = -co.b * clipped.b.x + co.a * clipped.b.y;
    let dk = k1 - k0;
    let dk2 = k1 * k1 - k0 * k0;
    let scale = (p1 - p0) / (pixel_area * l2);
    let bc = co.b * co.c / l2;
    let ac = co.a * co.c / l2;
    let a_term = co.a * dk2 / (2.0 * l2);
    let b_term = co.b * dk2 / (2.0 * l2);
    EdgePixelPartials {
        d_x0: scale * ((v_b.y + bc) * dk - a_term),
        d_y0: -scale * ((v_b.x + ac) * dk + b_term),
        d_x1: scale * (-(v_a.y + bc) * dk + a_term),
        d_y1: scale * ((v_a.x + ac) * dk + b_term),
    }
}

/// Partial derivatives of the pixel intensity with respect to the
/// endpoints of a silhouette edge crossing that pixel.
///
/// Returns all zeros when the clip against the pixel is empty. The edge
/// must be oriented with the foreground on its `alpha < 0` side and must be
/// nondegenerate; callers pre-filter by [`EDGE_DEGENERACY_THRESHOLD`].
pub fn edge_pixel_partials(
    v_a: Vec2,
    v_b: Vec2,
    pixel: &Rect,
    p0: f64,
    p1: f64,
) -> Result<EdgePixelPartials> {
    let co = edge_coefficients(v_a, v_b);
    if co.length_squared() <= EDGE_DEGENERACY_THRESHOLD {
        return Err(Error::DegenerateEdge);
    }
    match liang_barsky_clip(Segment::new(v_a, v_b), pixel) {
        None => Ok(EdgePixelPartials::ZERO),
        Some(clipped) => Ok(partials_from_clip(
            v_a,
            v_b,
            &co,
            &clipped,
            p0,
            p1,
            pixel.area(),
        )),
    }
}

/// True iff the segment's clip against the pixel has positive length.
pub fn edge_intersects_pixel(seg: Segment, pixel: &Rect) -> bool {
    liang_barsky_clip(seg, pixel).is_some()
}

/// Per-vertex screen-space gradient accumulators.
#[derive(Debug, Clone, PartialEq)]
pub struct ScreenGradients {
    pub grads: Vec<Vec2>,
}

impl ScreenGradients {
    pub fn zeros(n: usize) -> Self {
        ScreenGradients {
            grads: vec![Vec2::ZERO; n],
        }
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }
}

/// Boolean mask of pixels where silhouette gradients can flow.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryMask {
    pub height: usize,
    pub width: usize,
    pub mask: Vec<bool>,
}

impl BoundaryMask {
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> bool {
        self.mask[i * self.width + j]
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

/// Marks a pixel iff its value is strictly between p0 and p1, or it
/// differs from any 4-neighbor.
pub fn detect_boundary_pixels(img: &SilhouetteImage) -> BoundaryMask {
    let lo = img.p0.min(img.p1);
    let hi = img.p0.max(img.p1);
    let (h, w) = (img.height, img.width);
    let mut mask = vec![false; h * w];
    for i in 0..h {
        for j in 0..w {
            let v = img.get(i, j);
            let fractional = v > lo && v < hi;
            let differs = (i > 0 && img.get(i - 1, j) != v)
                || (i + 1 < h && img.get(i + 1, j) != v)
                || (j > 0 && img.get(i, j - 1) != v)
                || (j + 1 < w && img.get(i, j + 1) != v);
            mask[i * w + j] = fractional || differs;
        }
    }
    BoundaryMask {
        height: h,
        width: w,
        mask,
    }
}

/// A mesh edge that can lie on the silhouette outline, directed so the
/// foreground is on its `alpha < 0` side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SilhouetteEdge {
    pub a: usize,
    pub b: usize,
    /// Face whose winding fixed the direction.
    pub face: usize,
    /// Other incident face, when the edge is shared by two.
    pub neighbor: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum FaceClass {
    Front,
    Back,
    Degenerate,
}

fn classify_faces(screen: &ScreenMesh) -> Vec<FaceClass> {
    (0..screen.faces.len())
        .map(|fi| {
            let area = screen.face_signed_area(fi);
            if area.abs() <= FACE_AREA_EPSILON {
                FaceClass::Degenerate
            } else if area > 0.0 {
                FaceClass::Front
            } else {
                FaceClass::Back
            }
        })
        .collect()
}

/// Extracts candidate silhouette edges: open-boundary edges (bordering
/// exactly one nondegenerate face) and edges shared by one front-facing
/// and one back-facing projected face.
///
/// Directions follow the owning face's winding. Positive projected area
/// already puts the interior on the `alpha < 0` side of every directed
/// edge, so front-facing windings are kept as-is and back-facing windings
/// are flipped.
pub fn silhouette_edges(screen: &ScreenMesh) -> Vec<SilhouetteEdge> {
    let classes = classify_faces(screen);

    // (sorted key) -> list of (face, a, b) in deterministic first-seen order.
    let mut slot_of: HashMap<(usize, usize), usize> = HashMap::new();
    let mut incidents: Vec<Vec<(usize, usize, usize)>> = Vec::new();
    for (fi, f) in screen.faces.iter().enumerate() {
        for k in 0..3 {
            let a = f[k];
            let b = f[(k + 1) % 3];
            let key = (a.min(b), a.max(b));
            let slot = *slot_of.entry(key).or_insert_with(|| {
                incidents.push(Vec::new());
                incidents.len() - 1
            });
            incidents[slot].push((fi, a, b));
        }
    }

    let mut out = Vec::new();
    for list in &incidents {
        let front = list
            .iter()
            .find(|(fi, _, _)| classes[*fi] == FaceClass::Front);
        let back = list
            .iter()
            .find(|(fi, _, _)| classes[*fi] == FaceClass::Back);
        let nondegenerate: Vec<&(usize, usize, usize)> = list
            .iter()
            .filter(|(fi, _, _)| classes[*fi] != FaceClass::Degenerate)
            .collect();

        let chosen = if front.is_some() && back.is_some() {
            front.map(|e| (e, false))
        } else if nondegenerate.len() == 1 {
            let e = nondegenerate[0];
            Some((e, classes[e.0] == FaceClass::Back))
        } else {
            None
        };

        if let Some((&(fi, a, b), flip)) = chosen {
            let (a, b) = if flip { (b, a) } else { (a, b) };
            let neighbor = list.iter().find(|(other, _, _)| *other != fi).map(|e| e.0);
            out.push(SilhouetteEdge {
                a,
                b,
                face: fi,
                neighbor,
            });
        }
    }
    out
}

/// Instrumentation for the sparsity properties: which pixels the backward
/// pass actually did per-pixel gradient work on.
#[derive(Debug, Clone)]
pub struct BackwardStats {
    pub touched: Vec<bool>,
    pub touched_pixels: usize,
    pub silhouette_edge_count: usize,
}

struct EdgeContribution {
    a: usize,
    b: usize,
    sum_a: Vec2,
    sum_b: Vec2,
}

/// Pixel index range overlapped by the edge bounding box, clamped to the
/// image. `None` when the box misses the image entirely.
fn pixel_range(
    v_a: Vec2,
    v_b: Vec2,
    height: usize,
    width: usize,
) -> Option<(usize, usize, usize, usize)> {
    let x_min = v_a.x.min(v_b.x);
    let x_max = v_a.x.max(v_b.x);
    let y_min = v_a.y.min(v_b.y);
    let y_max = v_a.y.max(v_b.y);
    if x_max < 0.0 || y_max < 0.0 || x_min >= width as f64 || y_min >= height as f64 {
        return None;
    }
    let j0 = x_min.floor().max(0.0) as usize;
    let i0 = y_min.floor().max(0.0) as usize;
    let j1 = (x_max.floor() as usize).min(width - 1);
    let i1 = (y_max.floor() as usize).min(height - 1);
    Some((i0, i1, j0, j1))
}

/// True when the probe point is covered by some front-facing face other
/// than the edge's own incident faces — the edge is locally interior to
/// the silhouette there, not on its outline.
fn probe_covered(
    probe: Vec2,
    front_tiles: &TileIndex,
    screen: &ScreenMesh,
    own_face: usize,
    neighbor: Option<usize>,
) -> bool {
    front_tiles.candidates_at(probe).iter().any(|&fi| {
        let fi = fi as usize;
        if fi == own_face || Some(fi) == neighbor {
            return false;
        }
        let (a, b, c) = screen.face_vertices(fi);
        point_in_triangle(probe, a, b, c)
    })
}

#[allow(clippy::too_many_arguments)]
fn edge_pass<T: Send>(
    screen: &ScreenMesh,
    edges: &[SilhouetteEdge],
    mask: &BoundaryMask,
    front_tiles: &TileIndex,
    probe_offset: f64,
    p0: f64,
    p1: f64,
    per_pixel: impl Fn(&mut T, usize, EdgePixelPartials) + Send + Sync,
    make: impl Fn(&SilhouetteEdge) -> T + Send + Sync,
) -> Vec<(T, Vec<u32>)> {
    let (h, w) = (mask.height, mask.width);
    edges
        .par_iter()
        .map(|edge| {
            let mut acc = make(edge);
            let mut touched: Vec<u32> = Vec::new();
            let v_a = screen.vertices[edge.a];
            let v_b = screen.vertices[edge.b];
            let co = edge_coefficients(v_a, v_b);
            let l2 = co.length_squared();
            if l2 <= EDGE_DEGENERACY_THRESHOLD {
                return (acc, touched);
            }
            let Some((i0, i1, j0, j1)) = pixel_range(v_a, v_b, h, w) else {
                return (acc, touched);
            };
            let inv_len = 1.0 / l2.sqrt();
            for i in i0..=i1 {
                for j in j0..=j1 {
                    if !mask.get(i, j) {
                        continue;
                    }
                    let pixel = Rect::pixel(i, j);
                    let Some(clipped) = liang_barsky_clip(Segment::new(v_a, v_b), &pixel) else {
                        continue;
                    };
                    touched.push((i * w + j) as u32);
                    let mid = Vec2::new(
                        (clipped.a.x + clipped.b.x) * 0.5,
                        (clipped.a.y + clipped.b.y) * 0.5,
                    );
                    // Offset toward alpha > 0 (the background side).
                    let probe = Vec2::new(
                        mid.x + co.a * inv_len * probe_offset,
                        mid.y + co.b * inv_len * probe_offset,
                    );
                    if probe_covered(probe, front_tiles, screen, edge.face, edge.neighbor) {
                        continue;
                    }
                    let partials =
                        partials_from_clip(v_a, v_b, &co, &clipped, p0, p1, pixel.area());
                    per_pixel(&mut acc, i * w + j, partials);
                }
            }
            (acc, touched)
        })
        .collect()
}

/// Backward pass with instrumentation. See [`backward`].
pub fn backward_with_stats(
    img: &SilhouetteImage,
    loss_grads: &[f64],
    screen: &ScreenMesh,
    settings: &RenderSettings,
) -> Result<(ScreenGradients, BackwardStats)> {
    if loss_grads.len() != img.pixel_count() {
        return Err(Error::DimensionMismatch(format!(
            "loss_grads has {} entries for a {}x{} image",
            loss_grads.len(),
            img.height,
            img.width
        )));
    }
    let mask = detect_boundary_pixels(img);
    let edges = silhouette_edges(screen);
    let front_tiles = TileIndex::build_filtered(screen, img.height, img.width, |fi| {
        screen.face_signed_area(fi) > FACE_AREA_EPSILON
    });
    let probe_offset = 0.5 / settings.supersampling as f64;

    let contribs: Vec<(EdgeContribution, Vec<u32>)> = edge_pass(
        screen,
        &edges,
        &mask,
        &front_tiles,
        probe_offset,
        img.p0,
        img.p1,
        |acc: &mut EdgeContribution, px, partials| {
            let g = loss_grads[px];
            if g != 0.0 {
                acc.sum_a += Vec2::new(partials.d_x0, partials.d_y0) * g;
                acc.sum_b += Vec2::new(partials.d_x1, partials.d_y1) * g;
            }
        },
        |edge| EdgeContribution {
            a: edge.a,
            b: edge.b,
            sum_a: Vec2::ZERO,
            sum_b: Vec2::ZERO,
        },
    );

    // Deterministic reduction in (edge, pixel) order regardless of the
    // worker count.
    let mut grads = ScreenGradients::zeros(screen.vertices.len());
    let mut touched = vec![false; img.pixel_count()];
    for (c, t) in &contribs {
        grads.grads[c.a] += c.sum_a;
        grads.grads[c.b] += c.sum_b;
        for &px in t {
            touched[px as usize] = true;
        }
    }
    let touched_pixels = touched.iter().filter(|&&t| t).count();
    Ok((
        grads,
        BackwardStats {
            touched,
            touched_pixels,
            silhouette_edge_count: edges.len(),
        },
    ))
}

/// Accumulates dL/dv for every screen vertex from per-pixel loss
/// gradients dL/dI.
///
/// Only boundary pixels ([`detect_boundary_pixels`]) of the rendered image
/// carry gradient. For each silhouette edge crossing such a pixel (after
/// bounding-box culling), the closed-form partials are summed into the
/// edge's endpoints. A midpoint probe offset half a subpixel toward the
/// background side suppresses edges that pass through a boundary pixel
/// while buried inside the silhouette of other faces.
pub fn backward(
    img: &SilhouetteImage,
    loss_grads: &[f64],
    screen: &ScreenMesh,
    settings: &RenderSettings,
) -> Result<ScreenGradients> {
    backward_with_stats(img, loss_grads, screen, settings).map(|(g, _)| g)
}

/// Per-pixel gradient image for a scalar parameter: G(i, j) =
/// sum_k dI(i,j)/dv_k . dv_k/dparam, with `dvertex_dparam` holding the
/// screen-space motion of every vertex per unit of the parameter.
pub fn parameter_gradient_image(
    screen: &ScreenMesh,
    dvertex_dparam: &[Vec2],
    height: usize,
    width: usize,
    settings: &RenderSettings,
) -> Result<Vec<f64>> {
    if dvertex_dparam.len() != screen.vertices.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} vertex directions for {} vertices",
            dvertex_dparam.len(),
            screen.vertices.len()
        )));
    }
    let img = rasterize(screen, height, width, settings);
    let mask = detect_boundary_pixels(&img);
    let edges = silhouette_edges(screen);
    let front_tiles = TileIndex::build_filtered(screen, height, width, |fi| {
        screen.face_signed_area(fi) > FACE_AREA_EPSILON
    });
    let probe_offset = 0.5 / settings.supersampling as f64;

    struct PixelScatter {
        a: usize,
        b: usize,
        values: Vec<(u32, f64)>,
    }

    let contribs: Vec<(PixelScatter, Vec<u32>)> = edge_pass(
        screen,
        &edges,
        &mask,
        &front_tiles,
        probe_offset,
        img.p0,
        img.p1,
        |acc: &mut PixelScatter, px, partials| {
            let da = dvertex_dparam[acc.a];
            let db = dvertex_dparam[acc.b];
            let value = partials.d_x0 * da.x
                + partials.d_y0 * da.y
                + partials.d_x1 * db.x
                + partials.d_y1 * db.y;
            acc.values.push((px as u32, value));
        },
        |edge| PixelScatter {
            a: edge.a,
            b: edge.b,
            values: Vec::new(),
        },
    );

    let mut grid = vec![0.0f64; height * width];
    for (c, _) in &contribs {
        for &(px, value) in &c.values {
            grid[px as usize] += value;
        }
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::signed_area;

    const UNIT: Rect = Rect {
        x_min: 0.0,
        y_min: 0.0,
        x_max: 1.0,
        y_max: 1.0,
    };

    fn screen_mesh(vertices: Vec<Vec2>, faces: Vec<[usize; 3]>) -> ScreenMesh {
        let depths = vec![1.0; vertices.len()];
        ScreenMesh {
            vertices,
            faces,
            depths,
        }
    }

    #[test]
    fn edge_coefficient_examples() {
        let co = edge_coefficients(Vec2::new(0.5, 0.0), Vec2::new(0.5, 1.0));
        assert_eq!((co.a, co.b, co.c), (1.0, 0.0, -0.5));
        let co = edge_coefficients(Vec2::new(0.0, 0.5), Vec2::new(1.0, 0.5));
        assert_eq!((co.a, co.b, co.c), (0.0, -1.0, 0.5));
        let co = edge_coefficients(Vec2::new(0.3, 0.7), Vec2::new(0.3, 0.7));
        assert_eq!((co.a, co.b), (0.0, 0.0));
    }

    #[test]
    fn edge_endpoints_lie_on_line() {
        let cases = [
            (Vec2::new(0.1, -2.0), Vec2::new(3.4, 1.2)),
            (Vec2::new(-5.0, 7.0), Vec2::new(2.0, -3.0)),
            (Vec2::new(0.0, 0.0), Vec2::new(1e3, 1e-3)),
        ];
        for (a, b) in cases {
            let co = edge_coefficients(a, b);
            assert!(co.eval(a).abs() < 1e-9);
            assert!(co.eval(b).abs() < 1e-9);
        }
    }

    #[test]
    fn vertical_edge_worked_example() {
        // Foreground left of x = 0.5; coverage is a left trapezoid whose
        // area responds half-for-half to each endpoint's x.
        let p =
            edge_pixel_partials(Vec2::new(0.5, 0.0), Vec2::new(0.5, 1.0), &UNIT, 0.0, 1.0).unwrap();
        assert!((p.d_x0 - 0.5).abs() < 1e-12);
        assert!(p.d_y0.abs() < 1e-12);
        assert!((p.d_x1 - 0.5).abs() < 1e-12);
        assert!(p.d_y1.abs() < 1e-12);
    }

    #[test]
    fn horizontal_edge_worked_example() {
        // Foreground below y = 0.5 (alpha < 0 side): pushing either
        // endpoint down shrinks coverage.
        let p =
            edge_pixel_partials(Vec2::new(0.0, 0.5), Vec2::new(1.0, 0.5), &UNIT, 0.0, 1.0).unwrap();
        assert!(p.d_x0.abs() < 1e-12);
        assert!((p.d_y0 + 0.5).abs() < 1e-12);
        assert!(p.d_x1.abs() < 1e-12);
        assert!((p.d_y1 + 0.5).abs() < 1e-12);
    }

    #[test]
    fn non_intersecting_edge_has_zero_partials() {
        let p =
            edge_pixel_partials(Vec2::new(5.0, 5.0), Vec2::new(6.0, 7.0), &UNIT, 0.0, 1.0).unwrap();
        assert_eq!(p, EdgePixelPartials::ZERO);
    }

    #[test]
    fn degenerate_edge_is_an_error() {
        let r = edge_pixel_partials(Vec2::new(0.5, 0.5), Vec2::new(0.5, 0.5), &UNIT, 0.0, 1.0);
        assert!(matches!(r, Err(Error::DegenerateEdge)));
    }

    #[test]
    fn boundary_mask_constant_image_empty() {
        let img = SilhouetteImage::constant(4, 4, 0.0, 0.0, 1.0);
        assert_eq!(detect_boundary_pixels(&img).count(), 0);
        let img = SilhouetteImage::constant(4, 4, 1.0, 0.0, 1.0);
        assert_eq!(detect_boundary_pixels(&img).count(), 0);
    }

    #[test]
    fn boundary_mask_hard_edge_marks_two_columns() {
        let mut img = SilhouetteImage::constant(4, 6, 0.0, 0.0, 1.0);
        for i in 0..4 {
            for j in 0..3 {
                img.set(i, j, 1.0);
            }
        }
        let mask = detect_boundary_pixels(&img);
        for i in 0..4 {
            for j in 0..6 {
                assert_eq!(mask.get(i, j), j == 2 || j == 3, "pixel ({i},{j})");
            }
        }
    }

    #[test]
    fn boundary_mask_antialiased_column_marks_three() {
        // Exhaustive application of the rule on a constructed image:
        // column 2 fractional, so columns 1..=3 are marked.
        let mut img = SilhouetteImage::constant(3, 6, 0.0, 0.0, 1.0);
        for i in 0..3 {
            for j in 0..2 {
                img.set(i, j, 1.0);
            }
            img.set(i, 2, 0.5);
        }
        let mask = detect_boundary_pixels(&img);
        for i in 0..3 {
            for j in 0..6 {
                assert_eq!(mask.get(i, j), (1..=3).contains(&j), "pixel ({i},{j})");
            }
        }
    }

    /// Every returned directed edge must keep the foreground on its
    /// alpha < 0 side; for a single triangle the interior is the
    /// foreground, so test against the opposite vertex.
    fn assert_interior_negative(screen: &ScreenMesh, edges: &[SilhouetteEdge]) {
        for e in edges {
            let co = edge_coefficients(screen.vertices[e.a], screen.vertices[e.b]);
            let [i0, i1, i2] = screen.faces[e.face];
            let opposite = [i0, i1, i2]
                .into_iter()
                .find(|&v| v != e.a && v != e.b)
                .unwrap();
            assert!(
                co.eval(screen.vertices[opposite]) < 0.0,
                "interior not on alpha<0 side for edge ({}, {})",
                e.a,
                e.b
            );
        }
    }

    #[test]
    fn single_triangle_yields_three_edges_both_windings() {
        let verts = vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(4.0, 0.0),
            Vec2::new(0.0, 4.0),
        ];
        for faces in [vec![[0usize, 1, 2]], vec![[0usize, 2, 1]]] {
            let screen = screen_mesh(verts.clone(), faces);
            let edges = silhouette_edges(&screen);
            assert_eq!(edges.len(), 3);
            assert_interior_negative(&screen, &edges);
        }
    }

    #[test]
    fn quad_excludes_shared_diagonal() {
        // Two front-facing triangles forming a quad: the 4 outer edges
        // remain, the diagonal is interior.
        let verts = vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(4.0, 0.0),
            Vec2::new(4.0, 4.0),
            Vec2::new(0.0, 4.0),
        ];
        let faces = vec![[0, 1, 2], [0, 2, 3]];
        let screen = screen_mesh(verts, faces);
        assert!(screen.face_signed_area(0) > 0.0 && screen.face_signed_area(1) > 0.0);
        let edges = silhouette_edges(&screen);
        assert_eq!(edges.len(), 4);
        assert!(edges.iter().all(|e| {
            let key = (e.a.min(e.b), e.a.max(e.b));
            key != (0, 2)
        }));
    }

    #[test]
    fn tetrahedron_front_back_junctions() {
        // Orthographic projection = drop z. Expected silhouette edges are
        // re-derived here by classifying each face by projected signed
        // area and enumerating mixed-sign shared edges.
        let v3 = [
            (0.0, 0.0, 0.0),
            (4.0, 0.0, 0.5),
            (1.0, 4.0, 0.2),
            (1.5, 1.5, 3.0),
        ];
        let faces: Vec<[usize; 3]> = vec![[0, 1, 2], [0, 3, 1], [1, 3, 2], [0, 2, 3]];
        let vertices: Vec<Vec2> = v3.iter().map(|&(x, y, _)| Vec2::new(x, y)).collect();
        let screen = screen_mesh(vertices.clone(), faces.clone());

        let sign =
            |f: &[usize; 3]| signed_area(vertices[f[0]], vertices[f[1]], vertices[f[2]]) > 0.0;
        let mut expected: Vec<(usize, usize)> = Vec::new();
        for (i, fi) in faces.iter().enumerate() {
            for fj in faces.iter().skip(i + 1) {
                let shared: Vec<usize> = fi.iter().filter(|v| fj.contains(v)).copied().collect();
                if shared.len() == 2 && sign(fi) != sign(fj) {
                    expected.push((shared[0].min(shared[1]), shared[0].max(shared[1])));
                }
            }
        }
        expected.sort_unstable();

        let mut got: Vec<(usize, usize)> = silhouette_edges(&screen)
            .iter()
            .map(|e| (e.a.min(e.b), e.a.max(e.b)))
            .collect();
        got.sort_unstable();
        assert_eq!(got, expected);
        assert!(!got.is_empty());
    }

    #[test]
    fn edge_intersects_pixel_cases() {
        assert!(edge_intersects_pixel(
            Segment::new(Vec2::new(-1.0, 0.5), Vec2::new(2.0, 0.4)),
            &UNIT
        ));
        assert!(!edge_intersects_pixel(
            Segment::new(Vec2::new(5.0, 5.0), Vec2::new(6.0, 6.0)),
            &UNIT
        ));
        // Corner touch only: zero measure, excluded by the clip convention.
        assert!(!edge_intersects_pixel(
            Segment::new(Vec2::new(0.5, 1.5), Vec2::new(1.5, 0.5)),
            &UNIT
        ));
    }

    #[test]
    fn backward_zero_loss_grads_zero_gradients() {
        let screen = screen_mesh(
            vec![
                Vec2::new(1.0, 1.0),
                Vec2::new(6.0, 1.5),
                Vec2::new(2.0, 6.0),
            ],
            vec![[0, 1, 2]],
        );
        let settings = RenderSettings::default();
        let img = rasterize(&screen, 8, 8, &settings);
        let grads = backward(&img, &[0.0; 64], &screen, &settings).unwrap();
        assert!(grads.grads.iter().all(|g| *g == Vec2::ZERO));
    }

    #[test]
    fn backward_single_pixel_composes_edge_partials() {
        let verts = [
            Vec2::new(1.2, 1.1),
            Vec2::new(6.3, 1.7),
            Vec2::new(2.4, 6.5),
        ];
        let screen = screen_mesh(verts.to_vec(), vec![[0, 1, 2]]);
        let settings = RenderSettings::default();
        let img = rasterize(&screen, 8, 8, &settings);
        let mask = detect_boundary_pixels(&img);
        // Pick one boundary pixel the first edge crosses.
        let (pi, pj) = (0..8)
            .flat_map(|i| (0..8).map(move |j| (i, j)))
            .find(|&(i, j)| {
                mask.get(i, j)
                    && edge_intersects_pixel(Segment::new(verts[0], verts[1]), &Rect::pixel(i, j))
            })
            .expect("a boundary pixel on edge 0-1");
        let mut loss = [0.0; 64];
        loss[pi * 8 + pj] = 1.0;
        let grads = backward(&img, &loss, &screen, &settings).unwrap();

        let mut expected = vec![Vec2::ZERO; 3];
        for e in silhouette_edges(&screen) {
            let p = edge_pixel_partials(
                screen.vertices[e.a],
                screen.vertices[e.b],
                &Rect::pixel(pi, pj),
                img.p0,
                img.p1,
            )
            .unwrap();
            expected[e.a] += Vec2::new(p.d_x0, p.d_y0);
            expected[e.b] += Vec2::new(p.d_x1, p.d_y1);
        }
        for (got, want) in grads.grads.iter().zip(&expected) {
            assert!((got.x - want.x).abs() < 1e-12);
            assert!((got.y - want.y).abs() < 1e-12);
        }
    }

    #[test]
    fn backward_dimension_mismatch() {
        let screen = screen_mesh(
            vec![
                Vec2::new(1.0, 1.0),
                Vec2::new(6.0, 1.5),
                Vec2::new(2.0, 6.0),
            ],
            vec![[0, 1, 2]],
        );
        let settings = RenderSettings::default();
        let img = rasterize(&screen, 8, 8, &settings);
        assert!(matches!(
            backward(&img, &[0.0; 63], &screen, &settings),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn backward_touches_only_masked_pixels_and_is_thread_invariant() {
        let screen = screen_mesh(
            vec![
                Vec2::new(3.0, 4.0),
                Vec2::new(26.0, 6.0),
                Vec2::new(14.0, 27.0),
                Vec2::new(24.0, 22.0),
            ],
            vec![[0, 1, 2], [1, 3, 2]],
        );
        let settings = RenderSettings::default();
        let img = rasterize(&screen, 32, 32, &settings);
        let loss: Vec<f64> = img.data.iter().map(|v| 2.0 * v).collect();
        let mask = detect_boundary_pixels(&img);

        let run = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| backward_with_stats(&img, &loss, &screen, &settings).unwrap())
        };
        let (g1, s1) = run(1);
        let (g4, s4) = run(4);
        assert_eq!(g1, g4);
        assert_eq!(s1.touched, s4.touched);
        assert!(s1.touched_pixels > 0);
        for (px, &t) in s1.touched.iter().enumerate() {
            if t {
                assert!(mask.mask[px], "touched unmasked pixel {px}");
            }
        }
    }

    #[test]
    fn parameter_gradient_image_zero_direction() {
        let screen = screen_mesh(
            vec![
                Vec2::new(2.0, 2.0),
                Vec2::new(9.0, 3.0),
                Vec2::new(4.0, 9.0),
            ],
            vec![[0, 1, 2]],
        );
        let g = parameter_gradient_image(
            &screen,
            &[Vec2::ZERO; 3],
            12,
            12,
            &RenderSettings::default(),
        )
        .unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    fn quad_screen() -> ScreenMesh {
        // Axis-aligned-ish quad strictly inside a 24x24 frame, offset from
        // the pixel grid so every crossing pixel is fractional at F=4.
        screen_mesh(
            vec![
                Vec2::new(5.3, 6.4),
                Vec2::new(17.7, 6.4),
                Vec2::new(17.7, 16.6),
                Vec2::new(5.3, 16.6),
            ],
            vec![[0, 1, 2], [0, 2, 3]],
        )
    }

    #[test]
    fn x_translation_gradient_has_opposing_flanks_and_zero_sum() {
        let screen = quad_screen();
        let settings = RenderSettings::default();
        let g = parameter_gradient_image(&screen, &[Vec2::new(1.0, 0.0); 4], 24, 24, &settings)
            .unwrap();
        // Right flank positive (foreground enters), left flank negative.
        assert!(g[11 * 24 + 17] > 0.0);
        assert!(g[11 * 24 + 5] < 0.0);
        // Closed silhouette strictly inside the frame: total coverage is
        // translation-invariant.
        let total: f64 = g.iter().sum();
        assert!(total.abs() < 1e-6, "sum {total}");
    }

    #[test]
    fn uniform_scale_gradient_has_one_sign() {
        let screen = quad_screen();
        let centroid = Vec2::new(11.5, 11.5);
        let dirs: Vec<Vec2> = screen.vertices.iter().map(|&v| v - centroid).collect();
        let g =
            parameter_gradient_image(&screen, &dirs, 24, 24, &RenderSettings::default()).unwrap();
        assert!(g.iter().any(|&v| v != 0.0));
        assert!(
            g.iter().all(|&v| v >= 0.0),
            "scale-up must not shrink coverage anywhere"
        );
    }
}
