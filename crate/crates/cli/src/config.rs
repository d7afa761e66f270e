//! JSON scene configuration with full defaulting; CLI flags override
//! individual fields. Unknown fields are rejected so typos surface as
//! usage errors naming the field.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use silgrad_core::geometry::{TriangleMesh, Vec3};
use silgrad_core::model::{
    make_toy_body, LimbShape, LimbSpec, PoseParams, RigidParams, Skeleton, ToyBodySpec,
};
use silgrad_core::optim::AdamParams;
use silgrad_core::projection::{make_turntable_cameras, Camera, CameraKind};
use silgrad_core::raster_forward::RenderSettings;
use silgrad_core::{Mat3, Vec2};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeshConfig {
    /// Wavefront OBJ file (v/f subset).
    Obj { path: PathBuf },
    /// Generated capsule-limb body.
    ToyBody {
        #[serde(default)]
        preset: Option<String>,
        #[serde(default)]
        upper_len: Option<f64>,
        #[serde(default)]
        fore_len: Option<f64>,
        #[serde(default)]
        radius: Option<f64>,
        #[serde(default)]
        radial_segments: Option<usize>,
        #[serde(default)]
        cap_rings: Option<usize>,
        #[serde(default)]
        blend_radius: Option<f64>,
        #[serde(default)]
        limb_shape: Option<LimbShape>,
        #[serde(default)]
        limbs: Option<Vec<LimbSpec>>,
    },
    /// A single inline triangle.
    Triangle { points: [[f64; 3]; 3] },
}

impl Default for MeshConfig {
    fn default() -> Self {
        MeshConfig::ToyBody {
            preset: Some("humanoid".into()),
            upper_len: None,
            fore_len: None,
            radius: None,
            radial_segments: None,
            cap_rings: None,
            blend_radius: None,
            limb_shape: None,
            limbs: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Projection {
    Perspective,
    Orthographic,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraConfig {
    pub count: usize,
    pub radius: f64,
    pub elevation_deg: f64,
    pub projection: Projection,
    /// Pixels; derived from the mesh bounds when omitted.
    pub focal: Option<f64>,
    /// Pixels per unit (orthographic); derived when omitted.
    pub scale: Option<f64>,
    /// Defaults to the rest mesh centroid.
    pub look_at: Option<[f64; 3]>,
}

impl Default for CameraConfig {
    fn default() -> Self {
        CameraConfig {
            count: 4,
            radius: 2.5,
            elevation_deg: 0.0,
            projection: Projection::Perspective,
            focal: None,
            scale: None,
            look_at: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderConfig {
    pub height: usize,
    pub width: usize,
    pub supersampling: u32,
    pub background: f64,
    pub foreground: f64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig {
            height: 64,
            width: 64,
            supersampling: 4,
            background: 0.0,
            foreground: 1.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObjectiveConfig {
    pub lambda: f64,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        ObjectiveConfig { lambda: 0.001 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub iterations: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            alpha: 1.5e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            iterations: 2000,
        }
    }
}

impl OptimizerConfig {
    pub fn adam(&self) -> AdamParams {
        AdamParams {
            alpha: self.alpha,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }
}

/// Serializable pose parameters (flat arrays for JSON friendliness).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseConfig {
    pub theta: Vec<[f64; 3]>,
    #[serde(default)]
    pub root_translation: [f64; 3],
}

impl PoseConfig {
    pub fn to_params(&self) -> PoseParams {
        PoseParams {
            theta: self
                .theta
                .iter()
                .map(|t| Vec3::new(t[0], t[1], t[2]))
                .collect(),
            root_translation: Vec3::new(
                self.root_translation[0],
                self.root_translation[1],
                self.root_translation[2],
            ),
        }
    }

    pub fn from_params(params: &PoseParams) -> Self {
        PoseConfig {
            theta: params.theta.iter().map(|t| [t.x, t.y, t.z]).collect(),
            root_translation: [
                params.root_translation.x,
                params.root_translation.y,
                params.root_translation.z,
            ],
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TruthConfig {
    pub rigid: RigidParams,
    /// Zero pose when omitted.
    pub pose: Option<PoseConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitConfig {
    /// Start at the ground truth.
    Truth,
    /// Explicit rigid parameters.
    Rigid {
        translation: [f64; 3],
        rotation: [f64; 3],
        scale: f64,
    },
    /// Explicit pose parameters.
    Pose {
        theta: Vec<[f64; 3]>,
        #[serde(default)]
        root_translation: [f64; 3],
    },
    /// Ground truth plus a seeded random perturbation.
    Perturb {
        #[serde(default = "default_perturb_angle")]
        max_angle_deg: f64,
        /// Joints to perturb (pose model); all when omitted.
        #[serde(default)]
        joints: Option<Vec<usize>>,
        /// Norm of the random translation offset (rigid model), object units.
        #[serde(default)]
        translation: f64,
    },
}

fn default_perturb_angle() -> f64 {
    30.0
}

impl Default for InitConfig {
    fn default() -> Self {
        InitConfig::Perturb {
            max_angle_deg: default_perturb_angle(),
            joints: None,
            translation: 0.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub seed: u64,
    pub threads: Option<usize>,
    pub mesh: MeshConfig,
    pub cameras: CameraConfig,
    pub render: RenderConfig,
    pub objective: ObjectiveConfig,
    pub optimizer: OptimizerConfig,
    pub truth: TruthConfig,
    pub init: InitConfig,
}

impl SceneConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let config: SceneConfig = serde_json::from_str(&text)
            .with_context(|| format!("invalid config {}", path.display()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.render.height < 1 || self.render.width < 1 {
            bail!("field render.height/render.width: must be >= 1");
        }
        if self.render.supersampling < 1 {
            bail!("field render.supersampling: must be >= 1");
        }
        if self.render.background == self.render.foreground {
            bail!("field render.background/foreground: intensities must differ");
        }
        if self.cameras.count < 1 {
            bail!("field cameras.count: must be >= 1");
        }
        if self.cameras.radius <= 0.0 || self.cameras.radius.is_nan() {
            bail!("field cameras.radius: must be positive");
        }
        if let Some(f) = self.cameras.focal {
            if f <= 0.0 || f.is_nan() {
                bail!("field cameras.focal: must be positive");
            }
        }
        if let Some(s) = self.cameras.scale {
            if s <= 0.0 || s.is_nan() {
                bail!("field cameras.scale: must be positive");
            }
        }
        if self.objective.lambda < 0.0 {
            bail!("field objective.lambda: must be >= 0");
        }
        if self.optimizer.iterations < 1 {
            bail!("field optimizer.iterations: must be >= 1");
        }
        if self.optimizer.alpha <= 0.0 || self.optimizer.alpha.is_nan() {
            bail!("field optimizer.alpha: must be positive");
        }
        if let MeshConfig::Obj { path } = &self.mesh {
            if !path.exists() {
                bail!("field mesh.path: file {} does not exist", path.display());
            }
        }
        Ok(())
    }

    pub fn settings(&self) -> RenderSettings {
        RenderSettings {
            supersampling: self.render.supersampling,
            background: self.render.background,
            foreground: self.render.foreground,
        }
    }

    /// Builds the rest mesh and, for generated bodies, its skeleton.
    pub fn build_mesh(&self) -> anyhow::Result<(TriangleMesh, Option<Skeleton>)> {
        match &self.mesh {
            MeshConfig::Obj { path } => {
                let mesh = silgrad_core::load_obj(path)?;
                Ok((mesh, None))
            }
            MeshConfig::Triangle { points } => {
                let vertices = points.iter().map(|p| Vec3::new(p[0], p[1], p[2])).collect();
                Ok((TriangleMesh::new(vertices, vec![[0, 1, 2]])?, None))
            }
            MeshConfig::ToyBody {
                preset,
                upper_len,
                fore_len,
                radius,
                radial_segments,
                cap_rings,
                blend_radius,
                limb_shape,
                limbs,
            } => {
                let mut spec = match (limbs, preset.as_deref()) {
                    (Some(limbs), _) => ToyBodySpec {
                        limbs: limbs.clone(),
                        radial_segments: 8,
                        cap_rings: 2,
                        blend_radius: None,
                        limb_shape: LimbShape::Capsule,
                    },
                    (None, Some("humanoid") | None) => ToyBodySpec::humanoid(),
                    (None, Some("two_joint_arm")) => ToyBodySpec::two_joint_arm(
                        upper_len.unwrap_or(0.5),
                        fore_len.unwrap_or(0.4),
                        radius.unwrap_or(0.08),
                        radial_segments.unwrap_or(8),
                    ),
                    (None, Some(other)) => {
                        bail!(
                            "field mesh.preset: unknown preset {other:?} (humanoid, two_joint_arm)"
                        )
                    }
                };
                if let Some(s) = radial_segments {
                    spec.radial_segments = *s;
                }
                if let Some(r) = cap_rings {
                    spec.cap_rings = *r;
                }
                spec.blend_radius = *blend_radius;
                if let Some(shape) = limb_shape {
                    spec.limb_shape = *shape;
                }
                let (mesh, skeleton) = make_toy_body(&spec)?;
                Ok((mesh, Some(skeleton)))
            }
        }
    }

    /// Turntable cameras sized so the rest mesh spans ~80% of the frame
    /// unless explicit intrinsics are given.
    pub fn build_cameras(&self, rest_mesh: &TriangleMesh) -> anyhow::Result<Vec<Camera>> {
        let look_at = match self.cameras.look_at {
            Some(p) => Vec3::new(p[0], p[1], p[2]),
            None => rest_mesh.centroid(),
        };
        let bound = rest_mesh.bounding_radius().max(1e-9);
        let min_dim = self.render.height.min(self.render.width) as f64;
        let kind = match self.cameras.projection {
            Projection::Perspective => CameraKind::Perspective {
                focal: self
                    .cameras
                    .focal
                    .unwrap_or(0.4 * min_dim * self.cameras.radius / bound),
            },
            Projection::Orthographic => CameraKind::Orthographic {
                scale: self.cameras.scale.unwrap_or(0.4 * min_dim / bound),
            },
        };
        let template = Camera {
            kind,
            rotation: Mat3::IDENTITY,
            translation: Vec3::ZERO,
            principal_point: Vec2::new(
                self.render.width as f64 / 2.0,
                self.render.height as f64 / 2.0,
            ),
            image_size: (self.render.height, self.render.width),
        };
        let cameras = make_turntable_cameras(
            self.cameras.count,
            self.cameras.radius,
            self.cameras.elevation_deg,
            look_at,
            &template,
        );
        for camera in &cameras {
            camera.validate()?;
        }
        Ok(cameras)
    }

    pub fn truth_pose(&self, skeleton: &Skeleton) -> anyhow::Result<PoseParams> {
        match &self.truth.pose {
            None => Ok(PoseParams::zero(skeleton.joint_count())),
            Some(pose) => {
                let params = pose.to_params();
                if params.theta.len() != skeleton.joint_count() {
                    bail!(
                        "field truth.pose.theta: {} rotations for {} joints",
                        params.theta.len(),
                        skeleton.joint_count()
                    );
                }
                Ok(params)
            }
        }
    }

    /// Initial rigid parameters per the init block.
    pub fn init_rigid(&self, rng: &mut ChaCha8Rng) -> anyhow::Result<RigidParams> {
        match &self.init {
            InitConfig::Truth => Ok(self.truth.rigid),
            InitConfig::Rigid {
                translation,
                rotation,
                scale,
            } => Ok(RigidParams {
                translation: Vec3::new(translation[0], translation[1], translation[2]),
                rotation: Vec3::new(rotation[0], rotation[1], rotation[2]),
                scale: *scale,
            }),
            InitConfig::Pose { .. } => bail!("field init: pose parameters given for a rigid fit"),
            InitConfig::Perturb {
                max_angle_deg,
                translation,
                ..
            } => {
                let mut params = self.truth.rigid;
                let axis = random_unit(rng);
                let angle = rng.gen_range(0.0..max_angle_deg.to_radians().max(f64::MIN_POSITIVE));
                params.rotation += axis * angle;
                if *translation > 0.0 {
                    params.translation += random_unit(rng) * *translation;
                }
                Ok(params)
            }
        }
    }

    /// Initial pose parameters per the init block.
    pub fn init_pose(
        &self,
        skeleton: &Skeleton,
        rng: &mut ChaCha8Rng,
    ) -> anyhow::Result<PoseParams> {
        let truth = self.truth_pose(skeleton)?;
        match &self.init {
            InitConfig::Truth => Ok(truth),
            InitConfig::Pose {
                theta,
                root_translation,
            } => {
                if theta.len() != skeleton.joint_count() {
                    bail!(
                        "field init.theta: {} rotations for {} joints",
                        theta.len(),
                        skeleton.joint_count()
                    );
                }
                Ok(PoseConfig {
                    theta: theta.clone(),
                    root_translation: *root_translation,
                }
                .to_params())
            }
            InitConfig::Rigid { .. } => bail!("field init: rigid parameters given for a pose fit"),
            InitConfig::Perturb {
                max_angle_deg,
                joints,
                translation,
            } => {
                let mut params = truth;
                let selected: Vec<usize> = match joints {
                    Some(list) => {
                        for &j in list {
                            if j >= skeleton.joint_count() {
                                bail!(
                                    "field init.joints: joint {j} out of range (J={})",
                                    skeleton.joint_count()
                                );
                            }
                        }
                        list.clone()
                    }
                    None => (0..skeleton.joint_count()).collect(),
                };
                for j in selected {
                    let axis = random_unit(rng);
                    let angle =
                        rng.gen_range(0.0..max_angle_deg.to_radians().max(f64::MIN_POSITIVE));
                    params.theta[j] += axis * angle;
                }
                if *translation > 0.0 {
                    params.root_translation += random_unit(rng) * *translation;
                }
                Ok(params)
            }
        }
    }
}

fn random_unit(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = Vec3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        let len = v.length();
        if len > 1e-3 && len <= 1.0 {
            return v * (1.0 / len);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_matches_paper_constants() {
        let config = SceneConfig::default();
        assert_eq!(config.render.height, 64);
        assert_eq!(config.render.width, 64);
        assert_eq!(config.render.supersampling, 4);
        assert_eq!(config.cameras.count, 4);
        assert_eq!(config.objective.lambda, 0.001);
        assert_eq!(config.optimizer.alpha, 1.5e-4);
        assert_eq!(config.optimizer.beta1, 0.9);
        assert_eq!(config.optimizer.beta2, 0.999);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let err = serde_json::from_str::<SceneConfig>(r#"{"renderr": {}}"#).unwrap_err();
        assert!(err.to_string().contains("renderr"));
    }

    #[test]
    fn empty_document_uses_defaults() {
        let config: SceneConfig = serde_json::from_str("{}").unwrap();
        config.validate().unwrap();
        let (mesh, skeleton) = config.build_mesh().unwrap();
        assert!(skeleton.is_some());
        assert!(mesh.vertex_count() >= 400);
        let cameras = config.build_cameras(&mesh).unwrap();
        assert_eq!(cameras.len(), 4);
    }
}
