//! Anti-aliased forward silhouette rendering.
//!
//! The pixel intensity is an area integral of the foreground indicator over
//! the pixel square, approximated by averaging an F x F grid of subpixel
//! samples placed at subcell centers. Sampling at subcell centers keeps the
//! estimate unbiased for the coverage integral, and the result converges to
//! the exact coverage as F grows.
//!
//! Coverage uses union semantics over all faces with no depth buffer:
//! silhouettes have no self-occlusion to resolve, and back-facing triangles
//! count as foreground (a closed mesh's silhouette is the union of all its
//! projected faces). Front/back classification only matters to the backward
//! pass.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{Rect, ScreenMesh, Vec2};

/// Pixel tile edge for the face-binning accelerator, in pixels.
pub const TILE_SIZE: usize = 16;

/// H x W grid of intensities in the closed interval spanned by p0 and p1.
#[derive(Debug, Clone, PartialEq)]
pub struct SilhouetteImage {
    pub height: usize,
    pub width: usize,
    /// Row-major, `data[i * width + j]`.
    pub data: Vec<f64>,
    pub p0: f64,
    pub p1: f64,
}

impl SilhouetteImage {
    pub fn constant(height: usize, width: usize, value: f64, p0: f64, p1: f64) -> Self {
        SilhouetteImage {
            height,
            width,
            data: vec![value; height * width],
            p0,
            p1,
        }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.width + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.width + j] = value;
    }

    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }
}

/// Supersampling factor and the two silhouette intensities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenderSettings {
    /// F: samples per pixel axis, so F^2 samples per pixel.
    pub supersampling: u32,
    /// p0.
    pub background: f64,
    /// p1.
    pub foreground: f64,
}

impl Default for RenderSettings {
    fn default() -> Self {
        RenderSettings {
            supersampling: 4,
            background: 0.0,
            foreground: 1.0,
        }
    }
}

impl RenderSettings {
    pub fn with_supersampling(self, f: u32) -> Self {
        RenderSettings {
            supersampling: f,
            ..self
        }
    }

    pub fn is_valid(&self) -> bool {
        self.supersampling >= 1
            && self.background.is_finite()
            && self.foreground.is_finite()
            && self.background != self.foreground
    }
}

/// True iff p lies inside or on the boundary of triangle (a, b, c),
/// regardless of winding.
pub fn point_in_triangle(p: Vec2, a: Vec2, b: Vec2, c: Vec2) -> bool {
    let e0 = (b - a).cross(p - a);
    let e1 = (c - b).cross(p - b);
    let e2 = (a - c).cross(p - c);
    (e0 >= 0.0 && e1 >= 0.0 && e2 >= 0.0) || (e0 <= 0.0 && e1 <= 0.0 && e2 <= 0.0)
}

/// Per-tile candidate face lists: each TILE_SIZE x TILE_SIZE pixel block
/// maps to the faces whose bounding box overlaps it. Rasterization and the
/// backward occlusion probes consult only tile-local faces; because a
/// triangle is contained in its bounding box, results are identical with
/// and without the accelerator.
#[derive(Debug, Clone)]
pub struct TileIndex {
    tiles_x: usize,
    tiles_y: usize,
    faces: Vec<Vec<u32>>,
}

impl TileIndex {
    /// Bins the given faces of a screen mesh over an H x W pixel grid.
    pub fn build(screen: &ScreenMesh, height: usize, width: usize) -> TileIndex {
        Self::build_filtered(screen, height, width, |_| true)
    }

    /// Bins only the faces accepted by the predicate.
    pub fn build_filtered(
        screen: &ScreenMesh,
        height: usize,
        width: usize,
        keep: impl Fn(usize) -> bool,
    ) -> TileIndex {
        let tiles_x = width.div_ceil(TILE_SIZE).max(1);
        let tiles_y = height.div_ceil(TILE_SIZE).max(1);
        let mut faces = vec![Vec::new(); tiles_x * tiles_y];
        for fi in 0..screen.faces.len() {
            if !keep(fi) {
                continue;
            }
            let bbox = screen.face_bbox(fi);
            let tx0 = ((bbox.x_min / TILE_SIZE as f64).floor().max(0.0) as usize).min(tiles_x - 1);
            let ty0 = ((bbox.y_min / TILE_SIZE as f64).floor().max(0.0) as usize).min(tiles_y - 1);
            let tx1 = ((bbox.x_max / TILE_SIZE as f64).floor().max(0.0) as usize).min(tiles_x - 1);
            let ty1 = ((bbox.y_max / TILE_SIZE as f64).floor().max(0.0) as usize).min(tiles_y - 1);
            if bbox.x_max < 0.0
                || bbox.y_max < 0.0
                || bbox.x_min > width as f64
                || bbox.y_min > height as f64
            {
                continue;
            }
            for ty in ty0..=ty1 {
                for tx in tx0..=tx1 {
                    faces[ty * tiles_x + tx].push(fi as u32);
                }
            }
        }
        TileIndex {
            tiles_x,
            tiles_y,
            faces,
        }
    }

    /// Candidate faces for pixel (i, j).
    #[inline]
    pub fn candidates(&self, i: usize, j: usize) -> &[u32] {
        let tx = (j / TILE_SIZE).min(self.tiles_x - 1);
        let ty = (i / TILE_SIZE).min(self.tiles_y - 1);
        &self.faces[ty * self.tiles_x + tx]
    }

    /// Candidate faces at an arbitrary screen point (used by the backward
    /// occlusion probe; points outside the grid clamp to the border tile).
    #[inline]
    pub fn candidates_at(&self, p: Vec2) -> &[u32] {
        let tx = ((p.x / TILE_SIZE as f64).floor().max(0.0) as usize).min(self.tiles_x - 1);
        let ty = ((p.y / TILE_SIZE as f64).floor().max(0.0) as usize).min(self.tiles_y - 1);
        &self.faces[ty * self.tiles_x + tx]
    }

    pub fn non_empty_tiles(&self) -> usize {
        self.faces.iter().filter(|f| !f.is_empty()).count()
    }

    pub fn tile_count(&self) -> usize {
        self.faces.len()
    }
}

/// Renders columns `j_start..j_start + out.len()` of row i against a
/// fixed candidate list.
fn render_span(
    screen: &ScreenMesh,
    i: usize,
    j_start: usize,
    settings: &RenderSettings,
    candidates: &[u32],
    out_span: &mut [f64],
) {
    let f = settings.supersampling as usize;
    let samples = (f * f) as f64;
    let inv_f = 1.0 / settings.supersampling as f64;
    // Pixel-level bbox prefilter on top of the tile bin.
    let mut local: Vec<(u32, Rect)> = Vec::with_capacity(candidates.len());
    for &fi in candidates {
        local.push((fi, screen.face_bbox(fi as usize)));
    }
    for (dj, out) in out_span.iter_mut().enumerate() {
        let j = j_start + dj;
        let pixel = Rect::pixel(i, j);
        let mut hit_count = 0usize;
        let any = local.iter().any(|(_, bbox)| bbox.overlaps(&pixel));
        if any {
            for v in 0..f {
                let y = i as f64 + (v as f64 + 0.5) * inv_f;
                for u in 0..f {
                    let x = j as f64 + (u as f64 + 0.5) * inv_f;
                    let p = Vec2::new(x, y);
                    let inside = local.iter().any(|&(fi, ref bbox)| {
                        bbox.contains(p, 0.0) && {
                            let (a, b, c) = screen.face_vertices(fi as usize);
                            point_in_triangle(p, a, b, c)
                        }
                    });
                    if inside {
                        hit_count += 1;
                    }
                }
            }
        }
        *out = settings.background
            + (settings.foreground - settings.background) * (hit_count as f64 / samples);
    }
}

/// Renders the silhouette of a screen mesh into an H x W image.
///
/// Samples sit at the centers of the F x F subgrid of each pixel square:
/// `x = j + (u + 0.5)/F`, `y = i + (v + 0.5)/F`. A sample scores p1 when it
/// is inside any face (union semantics), else p0; the pixel value is the
/// mean of the F^2 sample scores, always an exact multiple of
/// `(p1 - p0)/F^2` above p0.
pub fn rasterize(
    screen: &ScreenMesh,
    height: usize,
    width: usize,
    settings: &RenderSettings,
) -> SilhouetteImage {
    assert!(settings.is_valid(), "invalid render settings");
    let tiles = TileIndex::build(screen, height, width);
    rasterize_with_tiles(screen, height, width, settings, &tiles)
}

/// As [`rasterize`] but reusing a prebuilt tile index.
pub fn rasterize_with_tiles(
    screen: &ScreenMesh,
    height: usize,
    width: usize,
    settings: &RenderSettings,
    tiles: &TileIndex,
) -> SilhouetteImage {
    assert!(settings.is_valid(), "invalid render settings");
    let mut data = vec![0.0f64; height * width];
    data.par_chunks_mut(width.max(1))
        .enumerate()
        .for_each(|(i, row)| {
            let mut j = 0;
            while j < width {
                let span_end = (j + TILE_SIZE - j % TILE_SIZE).min(width);
                render_span(
                    screen,
                    i,
                    j,
                    settings,
                    tiles.candidates(i, j),
                    &mut row[j..span_end],
                );
                j = span_end;
            }
        });
    SilhouetteImage {
        height,
        width,
        data,
        p0: settings.background,
        p1: settings.foreground,
    }
}

/// Reference renderer that tests every face for every pixel. Output is
/// bit-identical to [`rasterize`]; it exists so tests can assert that the
/// tile accelerator changes nothing.
pub fn rasterize_brute_force(
    screen: &ScreenMesh,
    height: usize,
    width: usize,
    settings: &RenderSettings,
) -> SilhouetteImage {
    assert!(settings.is_valid(), "invalid render settings");
    let all: Vec<u32> = (0..screen.faces.len() as u32).collect();
    let mut data = vec![0.0f64; height * width];
    for i in 0..height {
        let row = &mut data[i * width..(i + 1) * width];
        render_span(screen, i, 0, settings, &all, row);
    }
    SilhouetteImage {
        height,
        width,
        data,
        p0: settings.background,
        p1: settings.foreground,
    }
}
