//! Projection of 3D meshes to screen space and chain-rule transport of
//! screen-space vertex gradients back to 3D.
//!
//! Two camera models: orthographic (pixels per unit scale) and pinhole
//! perspective (focal length in pixels). Both use the y-down screen frame:
//! the camera x axis maps to image right, the camera y axis to image down,
//! and the camera looks along +z.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Mat3, ScreenMesh, TriangleMesh, Vec2, Vec3};
use crate::raster_backward::ScreenGradients;

/// Perspective divide guard: camera-space depths at or below this error out.
pub const DEPTH_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CameraKind {
    /// Parallel projection; `scale` is pixels per object unit.
    Orthographic { scale: f64 },
    /// Pinhole projection; `focal` is in pixels.
    Perspective { focal: f64 },
}

/// World-to-camera rigid transform plus intrinsics.
///
/// A world point p maps to camera space as `R p + t`; camera space maps to
/// the screen by the orthographic or pinhole model plus the principal
/// point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    #[serde(flatten)]
    pub kind: CameraKind,
    pub rotation: Mat3,
    pub translation: Vec3,
    pub principal_point: Vec2,
    /// (H, W) in pixels.
    pub image_size: (usize, usize),
}

impl Camera {
    pub fn validate(&self) -> Result<()> {
        let gain = match self.kind {
            CameraKind::Orthographic { scale } => scale,
            CameraKind::Perspective { focal } => focal,
        };
        if !(gain > 0.0 && gain.is_finite()) {
            return Err(Error::InvalidCamera(format!(
                "focal/scale must be positive and finite, got {gain}"
            )));
        }
        let ortho_err = self.rotation.orthonormality_error();
        if ortho_err > 1e-9 {
            return Err(Error::InvalidCamera(format!(
                "rotation is not orthonormal (deviation {ortho_err:.3e})"
            )));
        }
        if self.image_size.0 == 0 || self.image_size.1 == 0 {
            return Err(Error::InvalidCamera("image size must be nonzero".into()));
        }
        if !self.translation.is_finite() || !self.principal_point.is_finite() {
            return Err(Error::InvalidCamera(
                "non-finite pose or principal point".into(),
            ));
        }
        Ok(())
    }

    /// Camera center in world coordinates: -R^T t.
    pub fn center(&self) -> Vec3 {
        -self.rotation.transpose().apply(self.translation)
    }

    /// Camera placed at `center` looking at `target`, with `up` appearing
    /// upward in the image (the camera y axis points down in world terms).
    pub fn look_at(
        center: Vec3,
        target: Vec3,
        up: Vec3,
        kind: CameraKind,
        principal_point: Vec2,
        image_size: (usize, usize),
    ) -> Camera {
        let forward = (target - center).normalized();
        let mut right = (-up).cross(forward);
        if right.length() < 1e-12 {
            // Looking straight along up: pick any perpendicular axis.
            let fallback = if forward.x.abs() < 0.9 {
                Vec3::new(1.0, 0.0, 0.0)
            } else {
                Vec3::new(0.0, 0.0, 1.0)
            };
            right = fallback.cross(forward);
        }
        let right = right.normalized();
        let down = forward.cross(right);
        let rotation = Mat3::from_rows(right, down, forward);
        let translation = -rotation.apply(center);
        Camera {
            kind,
            rotation,
            translation,
            principal_point,
            image_size,
        }
    }
}

/// One 2x3 screen-from-object Jacobian, d(screen vertex)/d(3D vertex).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jacobian2x3 {
    pub m: [[f64; 3]; 2],
}

impl Jacobian2x3 {
    pub fn apply(&self, v: Vec3) -> Vec2 {
        Vec2::new(
            self.m[0][0] * v.x + self.m[0][1] * v.y + self.m[0][2] * v.z,
            self.m[1][0] * v.x + self.m[1][1] * v.y + self.m[1][2] * v.z,
        )
    }

    /// J^T g: transports a screen gradient to a 3D gradient.
    pub fn transpose_apply(&self, g: Vec2) -> Vec3 {
        Vec3::new(
            self.m[0][0] * g.x + self.m[1][0] * g.y,
            self.m[0][1] * g.x + self.m[1][1] * g.y,
            self.m[0][2] * g.x + self.m[1][2] * g.y,
        )
    }
}

/// Per-vertex projection Jacobians, the chain-rule carrier from screen
/// space back to object space.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionJacobians {
    pub jacobians: Vec<Jacobian2x3>,
}

/// Projects every vertex to the screen and records the exact per-vertex
/// Jacobian of the camera model, plus the camera-space depth.
///
/// Perspective cameras reject vertices at or behind the camera plane
/// (depth <= [`DEPTH_EPSILON`]) with an error naming the vertex.
pub fn project(mesh: &TriangleMesh, camera: &Camera) -> Result<(ScreenMesh, ProjectionJacobians)> {
    let r = &camera.rotation;
    let mut vertices = Vec::with_capacity(mesh.vertices.len());
    let mut depths = Vec::with_capacity(mesh.vertices.len());
    let mut jacobians = Vec::with_capacity(mesh.vertices.len());

    for (index, &v) in mesh.vertices.iter().enumerate() {
        let pc = r.apply(v) + camera.translation;
        let (screen, jac_cam) = match camera.kind {
            CameraKind::Orthographic { scale } => {
                let screen = Vec2::new(
                    scale * pc.x + camera.principal_point.x,
                    scale * pc.y + camera.principal_point.y,
                );
                let jac = [[scale, 0.0, 0.0], [0.0, scale, 0.0]];
                (screen, jac)
            }
            CameraKind::Perspective { focal } => {
                if pc.z <= DEPTH_EPSILON {
                    return Err(Error::VertexBehindCamera { index, depth: pc.z });
                }
                let inv_z = 1.0 / pc.z;
                let screen = Vec2::new(
                    focal * pc.x * inv_z + camera.principal_point.x,
                    focal * pc.y * inv_z + camera.principal_point.y,
                );
                let jac = [
                    [focal * inv_z, 0.0, -focal * pc.x * inv_z * inv_z],
                    [0.0, focal * inv_z, -focal * pc.y * inv_z * inv_z],
                ];
                (screen, jac)
            }
        };
        // Chain through the world-to-camera rotation: J = J_cam * R.
        let mut m = [[0.0; 3]; 2];
        for (row, jc) in m.iter_mut().zip(jac_cam.iter()) {
            for (col, cell) in row.iter_mut().enumerate() {
                *cell = (0..3).map(|k| jc[k] * r.m[k][col]).sum();
            }
        }
        vertices.push(screen);
        depths.push(pc.z);
        jacobians.push(Jacobian2x3 { m });
    }

    Ok((
        ScreenMesh {
            vertices,
            faces: mesh.faces.clone(),
            depths,
        },
        ProjectionJacobians { jacobians },
    ))
}

/// g3_k = J_k^T g2_k for every vertex.
pub fn backproject_gradients(
    screen_grads: &ScreenGradients,
    jac: &ProjectionJacobians,
) -> Result<Vec<Vec3>> {
    if screen_grads.len() != jac.jacobians.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} screen gradients for {} Jacobians",
            screen_grads.len(),
            jac.jacobians.len()
        )));
    }
    Ok(screen_grads
        .grads
        .iter()
        .zip(&jac.jacobians)
        .map(|(g, j)| j.transpose_apply(*g))
        .collect())
}

/// Cameras on a circle of the given radius around `look_at`, at azimuths
/// k * 360/n degrees with a fixed elevation, all sharing the template's
/// intrinsics and image size. The world up axis is +y.
pub fn make_turntable_cameras(
    n: usize,
    radius: f64,
    elevation_deg: f64,
    look_at: Vec3,
    template: &Camera,
) -> Vec<Camera> {
    let elevation = elevation_deg.to_radians();
    (0..n)
        .map(|k| {
            let azimuth = (k as f64) * std::f64::consts::TAU / (n as f64);
            let offset = Vec3::new(
                radius * elevation.cos() * azimuth.cos(),
                radius * elevation.sin(),
                radius * elevation.cos() * azimuth.sin(),
            );
            Camera::look_at(
                look_at + offset,
                look_at,
                Vec3::new(0.0, 1.0, 0.0),
                template.kind,
                template.principal_point,
                template.image_size,
            )
        })
        .collect()
}
