//! Shared fixtures for the integration and acceptance suites.
#![allow(dead_code)] // each test target uses a different subset

use silgrad_core::geometry::{Mat3, TriangleMesh, Vec2, Vec3};
use silgrad_core::loss::{MultiViewTargets, TargetView};
use silgrad_core::model::VertexJacobian;
use silgrad_core::optim::PoseModel;
use silgrad_core::projection::{project, Camera, CameraKind};
use silgrad_core::raster_forward::{rasterize, RenderSettings};
use silgrad_core::Result;

/// Screen-plane translation model: params [tx, ty], vertices move by
/// (tx, ty, 0). The minimal model for the rigid-translation experiments.
pub struct TranslationModel {
    pub template: TriangleMesh,
}

impl PoseModel for TranslationModel {
    fn param_count(&self) -> usize {
        2
    }

    fn pose(&self, params: &[f64]) -> Result<(TriangleMesh, VertexJacobian)> {
        let offset = Vec3::new(params[0], params[1], 0.0);
        let vertices = self.template.vertices.iter().map(|&v| v + offset).collect();
        let mut jac = VertexJacobian::zeros(self.template.vertices.len(), 2);
        for v in 0..self.template.vertices.len() {
            jac.add(v, 0, Vec3::new(1.0, 0.0, 0.0));
            jac.add(v, 1, Vec3::new(0.0, 1.0, 0.0));
        }
        Ok((
            TriangleMesh {
                vertices,
                faces: self.template.faces.clone(),
            },
            jac,
        ))
    }
}

/// Identity-pose orthographic camera: object (x, y) lands on screen (x, y).
pub fn identity_ortho_camera(height: usize, width: usize) -> Camera {
    Camera {
        kind: CameraKind::Orthographic { scale: 1.0 },
        rotation: Mat3::IDENTITY,
        translation: Vec3::new(0.0, 0.0, 1.0),
        principal_point: Vec2::ZERO,
        image_size: (height, width),
    }
}

/// Flat z=0 triangle mesh in screen-like coordinates.
pub fn flat_triangle(points: [(f64, f64); 3]) -> TriangleMesh {
    TriangleMesh::new(
        points.iter().map(|&(x, y)| Vec3::new(x, y, 0.0)).collect(),
        vec![[0, 1, 2]],
    )
    .unwrap()
}

/// Renders ground-truth target silhouettes for a model at given params.
pub fn render_targets(
    model: &dyn PoseModel,
    params: &[f64],
    cameras: &[Camera],
    settings: &RenderSettings,
) -> MultiViewTargets {
    let (mesh, _) = model.pose(params).unwrap();
    let views = cameras
        .iter()
        .map(|camera| {
            let (screen, _) = project(&mesh, camera).unwrap();
            let (h, w) = camera.image_size;
            TargetView {
                camera: camera.clone(),
                image: rasterize(&screen, h, w, settings),
            }
        })
        .collect();
    MultiViewTargets::new(views).unwrap()
}

/// Separating-axis disjointness test for two convex polygons, used to
/// validate that the exact-union oracle's no-overlap precondition holds.
pub fn convex_polygons_disjoint(a: &[Vec2], b: &[Vec2]) -> bool {
    let separated_by_edges_of = |p: &[Vec2], q: &[Vec2]| -> bool {
        for i in 0..p.len() {
            let edge = p[(i + 1) % p.len()] - p[i];
            let normal = Vec2::new(-edge.y, edge.x);
            let pa: Vec<f64> = p.iter().map(|&v| normal.dot(v)).collect();
            let qa: Vec<f64> = q.iter().map(|&v| normal.dot(v)).collect();
            let (pmin, pmax) = (
                pa.iter().cloned().fold(f64::INFINITY, f64::min),
                pa.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            );
            let (qmin, qmax) = (
                qa.iter().cloned().fold(f64::INFINITY, f64::min),
                qa.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            );
            if pmax < qmin || qmax < pmin {
                return true;
            }
        }
        false
    };
    separated_by_edges_of(a, b) || separated_by_edges_of(b, a)
}
