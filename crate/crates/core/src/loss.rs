//! Multi-view silhouette objective, pluggable regularizer slot, and the
//! per-vertex evaluation metric.

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::projection::{backproject_gradients, Camera, ProjectionJacobians};
use crate::raster_backward::backward;
use crate::raster_forward::{RenderSettings, SilhouetteImage};

/// One ground-truth silhouette with the camera that produced it.
#[derive(Debug, Clone)]
pub struct TargetView {
    pub camera: Camera,
    pub image: SilhouetteImage,
}

/// The N_s target silhouettes of one fitting problem.
#[derive(Debug, Clone)]
pub struct MultiViewTargets {
    pub views: Vec<TargetView>,
}

impl MultiViewTargets {
    pub fn new(views: Vec<TargetView>) -> Result<Self> {
        if views.is_empty() {
            return Err(Error::DimensionMismatch(
                "need at least one target view".into(),
            ));
        }
        let first = &views[0].image;
        for (i, view) in views.iter().enumerate() {
            let img = &view.image;
            if img.height != first.height || img.width != first.width {
                return Err(Error::DimensionMismatch(format!(
                    "view {i} is {}x{}, view 0 is {}x{}",
                    img.height, img.width, first.height, first.width
                )));
            }
            if img.p0 != first.p0 || img.p1 != first.p1 {
                return Err(Error::DimensionMismatch(format!(
                    "view {i} has different intensities (p0, p1)"
                )));
            }
        }
        Ok(MultiViewTargets { views })
    }

    pub fn len(&self) -> usize {
        self.views.len()
    }

    pub fn is_empty(&self) -> bool {
        self.views.is_empty()
    }
}

/// A pluggable penalty term: value plus per-vertex 3D gradients.
pub trait Regularizer: Send + Sync {
    fn evaluate(&self, vertices: &[Vec3]) -> (f64, Vec<Vec3>);
}

/// Weighted objective E = E_sl + lambda * E_reg. The regularizer slot
/// defaults to zero so the silhouette term alone drives the fit.
pub struct Objective {
    pub lambda: f64,
    pub regularizer: Option<Box<dyn Regularizer>>,
}

impl Objective {
    pub fn silhouette_only() -> Self {
        Objective {
            lambda: 0.0,
            regularizer: None,
        }
    }

    pub fn with_regularizer(lambda: f64, regularizer: Box<dyn Regularizer>) -> Self {
        Objective {
            lambda,
            regularizer: Some(regularizer),
        }
    }
}

impl Default for Objective {
    fn default() -> Self {
        Self::silhouette_only()
    }
}

impl std::fmt::Debug for Objective {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Objective")
            .field("lambda", &self.lambda)
            .field("regularizer", &self.regularizer.is_some())
            .finish()
    }
}

/// Sum-of-squares silhouette error over all views, plus the per-view pixel
/// gradient grids 2 (I_i - S_i).
pub fn silhouette_loss(
    rendered: &[SilhouetteImage],
    targets: &MultiViewTargets,
) -> Result<(f64, Vec<Vec<f64>>)> {
    if rendered.len() != targets.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} rendered views for {} targets",
            rendered.len(),
            targets.len()
        )));
    }
    let mut total = 0.0;
    let mut grads = Vec::with_capacity(rendered.len());
    for (img, target) in rendered.iter().zip(&targets.views) {
        if img.height != target.image.height || img.width != target.image.width {
            return Err(Error::DimensionMismatch(format!(
                "rendered {}x{} vs target {}x{}",
                img.height, img.width, target.image.height, target.image.width
            )));
        }
        let mut grid = Vec::with_capacity(img.data.len());
        for (&i, &s) in img.data.iter().zip(&target.image.data) {
            let diff = i - s;
            total += diff * diff;
            grid.push(2.0 * diff);
        }
        grads.push(grid);
    }
    Ok((total, grads))
}

/// One view rendered from the current mesh, with the projection state the
/// backward pass needs.
#[derive(Debug, Clone)]
pub struct RenderedView {
    pub screen: crate::geometry::ScreenMesh,
    pub jacobians: ProjectionJacobians,
    pub image: SilhouetteImage,
}

/// Evaluates the full objective and its per-vertex 3D gradient: silhouette
/// term via the analytical backward pass and backprojection summed over
/// views in fixed order, plus lambda times the regularizer.
pub fn evaluate_objective(
    vertices: &[Vec3],
    views: &[RenderedView],
    targets: &MultiViewTargets,
    objective: &Objective,
    settings: &RenderSettings,
) -> Result<(f64, Vec<Vec3>)> {
    let rendered: Vec<SilhouetteImage> = views.iter().map(|v| v.image.clone()).collect();
    let (e_sl, pixel_grads) = silhouette_loss(&rendered, targets)?;

    let mut total_grads = vec![Vec3::ZERO; vertices.len()];
    for (view, grads) in views.iter().zip(&pixel_grads) {
        let screen_grads = backward(&view.image, grads, &view.screen, settings)?;
        let g3 = backproject_gradients(&screen_grads, &view.jacobians)?;
        if g3.len() != total_grads.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} projected gradients for {} vertices",
                g3.len(),
                total_grads.len()
            )));
        }
        for (acc, g) in total_grads.iter_mut().zip(g3) {
            *acc += g;
        }
    }

    let mut e = e_sl;
    if let Some(reg) = &objective.regularizer {
        let (value, reg_grads) = reg.evaluate(vertices);
        if reg_grads.len() != total_grads.len() {
            return Err(Error::DimensionMismatch(
                "regularizer gradient length".into(),
            ));
        }
        e += objective.lambda * value;
        for (acc, g) in total_grads.iter_mut().zip(reg_grads) {
            *acc += g * objective.lambda;
        }
    }
    Ok((e, total_grads))
}

/// Mean Euclidean distance between corresponding vertices.
pub fn per_vertex_error(estimated: &[Vec3], truth: &[Vec3]) -> Result<f64> {
    if estimated.len() != truth.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} estimated vertices vs {} ground truth",
            estimated.len(),
            truth.len()
        )));
    }
    if estimated.is_empty() {
        return Err(Error::DimensionMismatch("empty vertex sets".into()));
    }
    let sum: f64 = estimated
        .iter()
        .zip(truth)
        .map(|(a, b)| (*a - *b).length())
        .sum();
    Ok(sum / estimated.len() as f64)
}
