//! Differentiable silhouette rasterizer with analytical backward-pass
//! gradients, plus the multi-view silhouette-consistency fitting harness
//! built on it: cameras, a toy articulated body, the silhouette objective,
//! and an Adam-driven pose fitting loop.
//!
//! The forward pass renders anti-aliased silhouettes by supersampling the
//! pixel coverage integral; the backward pass differentiates that integral
//! in closed form along silhouette edges, clipped per pixel with the
//! Liang-Barsky algorithm, so gradients flow only at boundary pixels and
//! need no numerical approximation.

pub mod clip;
pub mod error;
pub mod geometry;
pub mod imageio;
pub mod loss;
pub mod model;
pub mod optim;
pub mod oracle;
pub mod projection;
pub mod raster_backward;
pub mod raster_forward;

pub use error::{Error, Result};
pub use geometry::{
    face_bounding_box, load_obj, save_obj, signed_area, Mat3, Rect, ScreenMesh, TriangleMesh, Vec2,
    Vec3,
};
pub use loss::{
    evaluate_objective, per_vertex_error, silhouette_loss, MultiViewTargets, Objective,
    Regularizer, RenderedView, TargetView,
};
pub use model::{
    apply_rigid, axis_angle_to_matrix, make_toy_body, pose_mesh, LimbSpec, PoseParams, RigidParams,
    Skeleton, ToyBodySpec, VertexJacobian,
};
pub use optim::{
    adam_step, fit, write_trace_csv, AdamParams, AdamState, FitProblem, FitResult, PoseModel,
    RigidModel, SkinnedModel, TraceRow,
};
pub use projection::{
    backproject_gradients, make_turntable_cameras, project, Camera, CameraKind, ProjectionJacobians,
};
pub use raster_backward::{
    backward, backward_with_stats, detect_boundary_pixels, edge_coefficients,
    edge_intersects_pixel, edge_pixel_partials, parameter_gradient_image, silhouette_edges,
    BackwardStats, BoundaryMask, EdgeCoefficients, EdgePixelPartials, ScreenGradients,
    SilhouetteEdge,
};
pub use raster_forward::{
    point_in_triangle, rasterize, rasterize_brute_force, RenderSettings, SilhouetteImage, TileIndex,
};
