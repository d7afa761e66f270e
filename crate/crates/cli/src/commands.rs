//! Subcommand implementations.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use silgrad_core::geometry::{save_obj, TriangleMesh, Vec2, Vec3};
use silgrad_core::imageio;
use silgrad_core::loss::{MultiViewTargets, Objective, TargetView};
use silgrad_core::model::{RigidParams, Skeleton};
use silgrad_core::optim::{
    fit, write_trace_csv, FitProblem, FitResult, PoseModel, RigidModel, SkinnedModel,
};
use silgrad_core::oracle::{edge_partials_fd_sweep, end_to_end_fd_sweep, finite_difference};
use silgrad_core::projection::{project, Camera, CameraKind};
use silgrad_core::raster_backward::parameter_gradient_image;
use silgrad_core::raster_forward::{rasterize, RenderSettings, SilhouetteImage};
use silgrad_core::{apply_rigid, pose_mesh};

use crate::config::{PoseConfig, SceneConfig};

/// Serialized alongside the target dumps so fits reproduce the exact
/// rendering configuration that generated them.
#[derive(Debug, Serialize, Deserialize)]
struct CameraFile {
    render: RenderSettings,
    height: usize,
    width: usize,
    cameras: Vec<Camera>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TruthFile {
    model: String,
    rigid: Option<RigidParams>,
    pose: Option<PoseConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ModelKind {
    Auto,
    Rigid,
    Pose,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum GradParam {
    Tx,
    Ty,
    Rot,
    Scale,
}

/// A scene assembled from the config: rest mesh, optional skeleton,
/// cameras, and settings.
pub struct Scene {
    pub config: SceneConfig,
    pub mesh: TriangleMesh,
    pub skeleton: Option<Skeleton>,
    pub cameras: Vec<Camera>,
    pub settings: RenderSettings,
}

impl Scene {
    pub fn build(config: SceneConfig) -> anyhow::Result<Scene> {
        let (mesh, skeleton) = config.build_mesh()?;
        let cameras = config.build_cameras(&mesh)?;
        let settings = config.settings();
        Ok(Scene {
            config,
            mesh,
            skeleton,
            cameras,
            settings,
        })
    }

    fn resolve_model(&self, kind: ModelKind) -> anyhow::Result<ModelKind> {
        Ok(match kind {
            ModelKind::Auto => {
                if self.skeleton.is_some() {
                    ModelKind::Pose
                } else {
                    ModelKind::Rigid
                }
            }
            ModelKind::Pose if self.skeleton.is_none() => {
                bail!("pose model requires a toy_body mesh (no skeleton available)")
            }
            other => other,
        })
    }

    /// The ground-truth posed mesh for the given model kind.
    fn truth_mesh(&self, kind: ModelKind) -> anyhow::Result<(TriangleMesh, ModelKind)> {
        let kind = self.resolve_model(kind)?;
        let mesh = match kind {
            ModelKind::Rigid => apply_rigid(&self.mesh, &self.config.truth.rigid)?.0,
            ModelKind::Pose => {
                let skeleton = self.skeleton.as_ref().expect("resolved pose model");
                let pose = self.config.truth_pose(skeleton)?;
                pose_mesh(&self.mesh, skeleton, &pose)?.0
            }
            ModelKind::Auto => unreachable!(),
        };
        Ok((mesh, kind))
    }
}

fn target_name(index: usize, ext: &str) -> String {
    format!("target_{index:02}.{ext}")
}

pub fn gen_data(
    config: SceneConfig,
    out: &Path,
    model: ModelKind,
    png: bool,
) -> anyhow::Result<()> {
    let scene = Scene::build(config)?;
    let (truth_mesh, kind) = scene.truth_mesh(model)?;
    std::fs::create_dir_all(out)?;

    for (k, camera) in scene.cameras.iter().enumerate() {
        let (screen, _) = project(&truth_mesh, camera)?;
        let (h, w) = camera.image_size;
        let img = rasterize(&screen, h, w, &scene.settings);
        imageio::write_f32_dump(out.join(target_name(k, "f32")), &img.data)?;
        imageio::write_pgm(out.join(target_name(k, "pgm")), &img)?;
        if png {
            imageio::write_png_gray(out.join(target_name(k, "png")), &img)?;
        }
    }

    let cam_file = CameraFile {
        render: scene.settings,
        height: scene.config.render.height,
        width: scene.config.render.width,
        cameras: scene.cameras.clone(),
    };
    imageio::atomic_write(
        out.join("cameras.json"),
        serde_json::to_string_pretty(&cam_file)?.as_bytes(),
    )?;

    let truth = TruthFile {
        model: match kind {
            ModelKind::Rigid => "rigid".into(),
            ModelKind::Pose => "pose".into(),
            ModelKind::Auto => unreachable!(),
        },
        rigid: Some(scene.config.truth.rigid),
        pose: scene
            .skeleton
            .as_ref()
            .map(|s| {
                scene
                    .config
                    .truth_pose(s)
                    .map(|p| PoseConfig::from_params(&p))
            })
            .transpose()?,
    };
    imageio::atomic_write(
        out.join("truth.json"),
        serde_json::to_string_pretty(&truth)?.as_bytes(),
    )?;

    println!(
        "wrote {} target views + cameras.json + truth.json to {}",
        scene.cameras.len(),
        out.display()
    );
    Ok(())
}

pub fn render(
    config: SceneConfig,
    out: &Path,
    view: usize,
    model: ModelKind,
    png: bool,
    float_dump: Option<&Path>,
) -> anyhow::Result<()> {
    let scene = Scene::build(config)?;
    let (truth_mesh, _) = scene.truth_mesh(model)?;
    let camera = scene
        .cameras
        .get(view)
        .ok_or_else(|| anyhow!("view {view} out of range ({} cameras)", scene.cameras.len()))?;
    let (screen, _) = project(&truth_mesh, camera)?;
    let (h, w) = camera.image_size;
    let img = rasterize(&screen, h, w, &scene.settings);
    imageio::write_pgm(out, &img)?;
    if png {
        imageio::write_png_gray(out.with_extension("png"), &img)?;
    }
    if let Some(path) = float_dump {
        imageio::write_f32_dump(path, &img.data)?;
    }
    println!("rendered view {view} to {}", out.display());
    Ok(())
}

pub fn gradmap(
    config: SceneConfig,
    out: &Path,
    param: GradParam,
    view: usize,
    model: ModelKind,
) -> anyhow::Result<()> {
    let scene = Scene::build(config)?;
    let (truth_mesh, _) = scene.truth_mesh(model)?;
    let camera = scene
        .cameras
        .get(view)
        .ok_or_else(|| anyhow!("view {view} out of range ({} cameras)", scene.cameras.len()))?;
    let (screen, _) = project(&truth_mesh, camera)?;

    let centroid = {
        let mut c = Vec2::ZERO;
        for v in &screen.vertices {
            c += *v;
        }
        c * (1.0 / screen.vertices.len() as f64)
    };
    // Screen-space motion of each vertex per unit of the parameter; `rot`
    // is a visually anticlockwise rotation about the screen centroid.
    let dirs: Vec<Vec2> = screen
        .vertices
        .iter()
        .map(|&v| match param {
            GradParam::Tx => Vec2::new(1.0, 0.0),
            GradParam::Ty => Vec2::new(0.0, 1.0),
            GradParam::Rot => Vec2::new(v.y - centroid.y, -(v.x - centroid.x)),
            GradParam::Scale => v - centroid,
        })
        .collect();

    let (h, w) = camera.image_size;
    let grid = parameter_gradient_image(&screen, &dirs, h, w, &scene.settings)?;
    imageio::write_gradient_png(out, &grid, h, w)?;
    imageio::write_f32_dump(out.with_extension("f32"), &grid)?;
    println!("wrote gradient map ({param:?}) to {}", out.display());
    Ok(())
}

/// Projection-Jacobian sweep: analytic J against central differences of
/// the projection itself, over random camera poses and vertices.
fn projection_jacobian_sweep(trials: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-5;
    let mut max_scaled = 0.0f64;
    for trial in 0..trials {
        let axis = Vec3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        )
        .normalized();
        let rotation = silgrad_core::axis_angle_to_matrix(axis * rng.gen_range(-3.0..3.0)).0;
        let kind = if trial % 2 == 0 {
            CameraKind::Perspective {
                focal: rng.gen_range(20.0..120.0),
            }
        } else {
            CameraKind::Orthographic {
                scale: rng.gen_range(4.0..40.0),
            }
        };
        let camera = Camera {
            kind,
            rotation,
            translation: Vec3::new(0.0, 0.0, 4.0),
            principal_point: Vec2::new(32.0, 32.0),
            image_size: (64, 64),
        };
        let v = Vec3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        let mesh = TriangleMesh {
            vertices: vec![
                v,
                v + Vec3::new(0.1, 0.0, 0.0),
                v + Vec3::new(0.0, 0.1, 0.0),
            ],
            faces: vec![[0, 1, 2]],
        };
        let Ok((_, jac)) = project(&mesh, &camera) else {
            continue;
        };
        let analytic = jac.jacobians[0];
        for axis_idx in 0..3 {
            for row in 0..2 {
                let fd = finite_difference(
                    |p| {
                        let vv = Vec3::new(p[0], p[1], p[2]);
                        let m = TriangleMesh {
                            vertices: vec![vv, vv + Vec3::new(0.1, 0.0, 0.0), vv],
                            faces: vec![[0, 1, 2]],
                        };
                        let (s, _) = project(&m, &camera).unwrap();
                        if row == 0 {
                            s.vertices[0].x
                        } else {
                            s.vertices[0].y
                        }
                    },
                    &[v.x, v.y, v.z],
                    h,
                );
                let want = analytic.m[row][axis_idx];
                let err = (fd[axis_idx] - want).abs() / (1e-4 + want.abs());
                max_scaled = max_scaled.max(err);
            }
        }
    }
    max_scaled
}

pub fn gradcheck(trials: usize, seed: u64) -> anyhow::Result<()> {
    let edge = edge_partials_fd_sweep(trials, seed, 1e-9, 1e-6);
    println!(
        "edge partials vs exact-coverage FD: {} configs, max rel err {:.3e} (tol 1e-6) {}",
        edge.trials,
        edge.max_scaled_err,
        if edge.passes(1e-6) { "ok" } else { "FAIL" }
    );

    let e2e_trials = (trials / 10).clamp(10, 100);
    let e2e = end_to_end_fd_sweep(e2e_trials, seed + 1, 1e-9, 1e-5);
    println!(
        "end-to-end triangle loss vs FD:     {} trials, max rel err {:.3e} (tol 1e-5) {}",
        e2e.trials,
        e2e.max_scaled_err,
        if e2e.passes(1e-5) { "ok" } else { "FAIL" }
    );

    let proj_trials = (trials / 10).clamp(10, 200);
    let proj = projection_jacobian_sweep(proj_trials, seed + 2);
    let proj_ok = proj <= 1e-5;
    println!(
        "projection Jacobians vs FD:         {} trials, max rel err {:.3e} (tol 1e-5) {}",
        proj_trials,
        proj,
        if proj_ok { "ok" } else { "FAIL" }
    );

    if edge.passes(1e-6) && e2e.passes(1e-5) && proj_ok {
        println!("gradcheck: all suites within tolerance");
        Ok(())
    } else {
        bail!("gradient check failed")
    }
}

fn load_targets(data: &Path) -> anyhow::Result<(MultiViewTargets, RenderSettings, TruthFile)> {
    let cam_text = std::fs::read_to_string(data.join("cameras.json"))
        .with_context(|| format!("cannot read {}", data.join("cameras.json").display()))?;
    let cam_file: CameraFile = serde_json::from_str(&cam_text).context("invalid cameras.json")?;
    let truth_text = std::fs::read_to_string(data.join("truth.json"))
        .with_context(|| format!("cannot read {}", data.join("truth.json").display()))?;
    let truth: TruthFile = serde_json::from_str(&truth_text).context("invalid truth.json")?;

    let mut views = Vec::new();
    for (k, camera) in cam_file.cameras.iter().enumerate() {
        let dump = imageio::read_f32_dump(data.join(target_name(k, "f32")))?;
        let (h, w) = camera.image_size;
        if dump.len() != h * w {
            bail!(
                "{}: {} values for a {h}x{w} image",
                target_name(k, "f32"),
                dump.len()
            );
        }
        views.push(TargetView {
            camera: camera.clone(),
            image: SilhouetteImage {
                height: h,
                width: w,
                data: dump,
                p0: cam_file.render.background,
                p1: cam_file.render.foreground,
            },
        });
    }
    Ok((MultiViewTargets::new(views)?, cam_file.render, truth))
}

fn self_targets(scene: &Scene, kind: ModelKind) -> anyhow::Result<MultiViewTargets> {
    let (truth_mesh, _) = scene.truth_mesh(kind)?;
    let views = scene
        .cameras
        .iter()
        .map(|camera| -> anyhow::Result<TargetView> {
            let (screen, _) = project(&truth_mesh, camera)?;
            let (h, w) = camera.image_size;
            Ok(TargetView {
                camera: camera.clone(),
                image: rasterize(&screen, h, w, &scene.settings),
            })
        })
        .collect::<anyhow::Result<_>>()?;
    Ok(MultiViewTargets::new(views)?)
}

pub struct FitArgs {
    pub out: PathBuf,
    pub data: Option<PathBuf>,
    pub iterations: Option<usize>,
    pub alpha: Option<f64>,
    pub init_at_truth: bool,
    pub seed: u64,
    pub png: bool,
}

pub fn fit_command(config: SceneConfig, kind: ModelKind, args: FitArgs) -> anyhow::Result<()> {
    let mut scene = Scene::build(config)?;
    let kind = scene.resolve_model(kind)?;

    // Targets either from a gen-data directory (bit-exact f32 dumps plus
    // the recorded render settings) or self-generated from the config.
    let targets = match &args.data {
        Some(dir) => {
            let (targets, render, _) = load_targets(dir)?;
            scene.settings = render;
            targets
        }
        None => self_targets(&scene, kind)?,
    };

    let (truth_mesh, _) = scene.truth_mesh(kind)?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);

    let model: Box<dyn PoseModel> = match kind {
        ModelKind::Rigid => Box::new(RigidModel {
            template: scene.mesh.clone(),
        }),
        ModelKind::Pose => Box::new(SkinnedModel {
            template: scene.mesh.clone(),
            skeleton: scene.skeleton.clone().expect("resolved pose model"),
        }),
        ModelKind::Auto => unreachable!(),
    };

    let init: Vec<f64> = match kind {
        ModelKind::Rigid => {
            if args.init_at_truth {
                scene.config.truth.rigid.to_flat()
            } else {
                scene.config.init_rigid(&mut rng)?.to_flat()
            }
        }
        ModelKind::Pose => {
            let skeleton = scene.skeleton.as_ref().expect("resolved pose model");
            if args.init_at_truth {
                scene.config.truth_pose(skeleton)?.to_flat()
            } else {
                scene.config.init_pose(skeleton, &mut rng)?.to_flat()
            }
        }
        ModelKind::Auto => unreachable!(),
    };

    let objective = Objective {
        lambda: scene.config.objective.lambda,
        regularizer: None,
    };
    let problem = FitProblem {
        model: model.as_ref(),
        targets: &targets,
        objective: &objective,
        settings: scene.settings,
        truth_vertices: Some(truth_mesh.vertices.clone()),
    };

    let iterations = args.iterations.unwrap_or(scene.config.optimizer.iterations);
    let mut adam = scene.config.optimizer.adam();
    if let Some(alpha) = args.alpha {
        adam.alpha = alpha;
    }

    let result = fit(&problem, &init, iterations, adam, None)?;
    write_fit_outputs(
        &scene,
        model.as_ref(),
        &targets,
        &result,
        &args.out,
        args.png,
    )?;

    let last = result.final_row();
    println!(
        "fit ({}) finished: E {:.5e}, E_sl {:.5e}, E_p {}",
        match kind {
            ModelKind::Rigid => "rigid",
            ModelKind::Pose => "pose",
            ModelKind::Auto => unreachable!(),
        },
        last.e,
        last.e_sl,
        last.e_p
            .map(|v| format!("{v:.5e}"))
            .unwrap_or_else(|| "n/a".into())
    );
    if let Some(iteration) = result.diverged {
        bail!("loss went non-finite at iteration {iteration}; trace retained in trace.csv");
    }
    Ok(())
}

fn write_fit_outputs(
    scene: &Scene,
    model: &dyn PoseModel,
    targets: &MultiViewTargets,
    result: &FitResult,
    out: &Path,
    png: bool,
) -> anyhow::Result<()> {
    std::fs::create_dir_all(out)?;

    let mut csv = Vec::new();
    write_trace_csv(&mut csv, &result.rows)?;
    imageio::atomic_write(out.join("trace.csv"), &csv)?;

    imageio::atomic_write(
        out.join("final_params.json"),
        serde_json::to_string_pretty(&result.params)?.as_bytes(),
    )?;

    let (final_mesh, _) = model.pose(&result.params)?;
    save_obj(out.join("final.obj"), &final_mesh)?;

    for (k, target) in targets.views.iter().enumerate() {
        let (screen, _) = project(&final_mesh, &target.camera)?;
        let (h, w) = target.camera.image_size;
        let img = rasterize(&screen, h, w, &scene.settings);
        imageio::write_overlay_png(out.join(format!("overlay_{k:02}.png")), &img, &target.image)?;
        if png {
            imageio::write_png_gray(out.join(format!("render_{k:02}.png")), &img)?;
        }
    }
    Ok(())
}
