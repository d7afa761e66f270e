//! Shared benchmark fixtures: the humanoid scene at a given resolution,
//! posed and projected through the default turntable camera.

use silgrad_core::geometry::{ScreenMesh, TriangleMesh, Vec2, Vec3};
use silgrad_core::model::{make_toy_body, PoseParams, Skeleton, ToyBodySpec};
use silgrad_core::projection::{make_turntable_cameras, project, Camera, CameraKind};
use silgrad_core::raster_forward::{rasterize, RenderSettings, SilhouetteImage};
use silgrad_core::Mat3;

pub struct BenchScene {
    pub mesh: TriangleMesh,
    pub skeleton: Skeleton,
    pub camera: Camera,
    pub screen: ScreenMesh,
    pub image: SilhouetteImage,
    pub loss_grads: Vec<f64>,
    pub settings: RenderSettings,
    pub resolution: usize,
}

pub fn humanoid_scene(resolution: usize) -> BenchScene {
    let (mesh, skeleton) = make_toy_body(&ToyBodySpec::humanoid()).unwrap();
    let look_at = mesh.centroid();
    let bound = mesh.bounding_radius();
    let focal = 0.4 * resolution as f64 * 2.5 / bound;
    let template = Camera {
        kind: CameraKind::Perspective { focal },
        rotation: Mat3::IDENTITY,
        translation: Vec3::ZERO,
        principal_point: Vec2::new(resolution as f64 / 2.0, resolution as f64 / 2.0),
        image_size: (resolution, resolution),
    };
    let camera = make_turntable_cameras(1, 2.5, 0.0, look_at, &template).remove(0);
    let settings = RenderSettings::default();
    let (screen, _) = project(&mesh, &camera).unwrap();
    let image = rasterize(&screen, resolution, resolution, &settings);
    let loss_grads: Vec<f64> = image.data.iter().map(|v| 2.0 * v).collect();
    BenchScene {
        mesh,
        skeleton,
        camera,
        screen,
        image,
        loss_grads,
        settings,
        resolution,
    }
}

pub fn bent_pose(skeleton: &Skeleton) -> PoseParams {
    let mut pose = PoseParams::zero(skeleton.joint_count());
    if pose.theta.len() >= 9 {
        pose.theta[4] = Vec3::new(0.0, 0.0, -0.4);
        pose.theta[8] = Vec3::new(0.4, 0.0, 0.0);
    }
    pose
}
