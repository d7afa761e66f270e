//! Adam optimizer and the iterative multi-view silhouette fitting loop.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{TriangleMesh, Vec3};
use crate::loss::{evaluate_objective, MultiViewTargets, Objective, RenderedView};
use crate::model::{apply_rigid, pose_mesh, PoseParams, RigidParams, Skeleton, VertexJacobian};
use crate::projection::project;
use crate::raster_forward::{rasterize, RenderSettings};

/// Adam hyperparameters. The defaults follow the fitting setup this
/// harness reproduces; toy problems usually override alpha.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AdamParams {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams {
            alpha: 1.5e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First/second moment state of Adam.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub t: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub hyper: AdamParams,
}

impl AdamState {
    pub fn new(n_params: usize, hyper: AdamParams) -> Self {
        AdamState {
            t: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            hyper,
        }
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step(state: &mut AdamState, params: &mut [f64], grads: &[f64]) -> Result<()> {
    if params.len() != state.m.len() || grads.len() != state.m.len() {
        return Err(Error::DimensionMismatch(format!(
            "adam state has {} slots, got {} params and {} gradients",
            state.m.len(),
            params.len(),
            grads.len()
        )));
    }
    for (index, &g) in grads.iter().enumerate() {
        if !g.is_finite() {
            return Err(Error::NonFiniteGradient { index });
        }
    }
    state.t += 1;
    let h = &state.hyper;
    let bias1 = 1.0 - h.beta1.powi(state.t as i32);
    let bias2 = 1.0 - h.beta2.powi(state.t as i32);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = h.beta1 * state.m[i] + (1.0 - h.beta1) * g;
        state.v[i] = h.beta2 * state.v[i] + (1.0 - h.beta2) * g * g;
        let m_hat = state.m[i] / bias1;
        let v_hat = state.v[i] / bias2;
        params[i] -= h.alpha * m_hat / (v_hat.sqrt() + h.epsilon);
    }
    Ok(())
}

/// Anything that maps a flat parameter vector to a posed mesh plus the
/// exact per-vertex Jacobian.
pub trait PoseModel: Sync {
    fn param_count(&self) -> usize;
    fn pose(&self, params: &[f64]) -> Result<(TriangleMesh, VertexJacobian)>;
}

/// Rigid 7-parameter model [tx, ty, tz, rx, ry, rz, scale].
#[derive(Debug, Clone)]
pub struct RigidModel {
    pub template: TriangleMesh,
}

impl PoseModel for RigidModel {
    fn param_count(&self) -> usize {
        RigidParams::PARAM_COUNT
    }

    fn pose(&self, params: &[f64]) -> Result<(TriangleMesh, VertexJacobian)> {
        apply_rigid(&self.template, &RigidParams::from_flat(params)?)
    }
}

/// Kinematic-chain model with 3J + 3 parameters.
#[derive(Debug, Clone)]
pub struct SkinnedModel {
    pub template: TriangleMesh,
    pub skeleton: Skeleton,
}

impl PoseModel for SkinnedModel {
    fn param_count(&self) -> usize {
        PoseParams::param_count(self.skeleton.joint_count())
    }

    fn pose(&self, params: &[f64]) -> Result<(TriangleMesh, VertexJacobian)> {
        let pose = PoseParams::from_flat(params, self.skeleton.joint_count())?;
        pose_mesh(&self.template, &self.skeleton, &pose)
    }
}

/// Everything a fit needs besides the initial parameters.
pub struct FitProblem<'a> {
    pub model: &'a dyn PoseModel,
    pub targets: &'a MultiViewTargets,
    pub objective: &'a Objective,
    pub settings: RenderSettings,
    /// Ground-truth vertices for the E_p trace column, when known.
    pub truth_vertices: Option<Vec<Vec3>>,
}

/// One row of the optimization trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub e: f64,
    pub e_sl: f64,
    pub e_p: Option<f64>,
    pub wall_ms: f64,
}

/// Full fit outcome: the trace (iterations + 1 rows, the last evaluated at
/// the final parameters), the final parameters, and the iteration at which
/// the loss went non-finite, if it did (the trace is retained either way).
#[derive(Debug, Clone)]
pub struct FitResult {
    pub rows: Vec<TraceRow>,
    pub params: Vec<f64>,
    pub diverged: Option<usize>,
}

impl FitResult {
    pub fn final_row(&self) -> &TraceRow {
        self.rows.last().expect("fit produces at least one row")
    }
}

/// Runs the fitting loop: pose the model, render and differentiate every
/// view, transport gradients to parameter space, take an Adam step.
///
/// Per-view rendering and backward passes fan out in parallel and join in
/// fixed view order, so the trajectory is bitwise reproducible for a given
/// problem, init, and hyperparameters.
pub fn fit(
    problem: &FitProblem,
    init: &[f64],
    iterations: usize,
    adam: AdamParams,
    mut callback: Option<&mut dyn FnMut(&TraceRow)>,
) -> Result<FitResult> {
    if init.len() != problem.model.param_count() {
        return Err(Error::InvalidParameter(format!(
            "init has {} parameters, model expects {}",
            init.len(),
            problem.model.param_count()
        )));
    }
    let start = Instant::now();
    let mut params = init.to_vec();
    let mut state = AdamState::new(params.len(), adam);
    let mut rows = Vec::with_capacity(iterations + 1);
    let mut diverged = None;

    for iteration in 0..=iterations {
        let (mesh, jacobian) = problem.model.pose(&params)?;

        let views: Vec<RenderedView> = problem
            .targets
            .views
            .par_iter()
            .map(|target| -> Result<RenderedView> {
                let (screen, jacobians) = project(&mesh, &target.camera)?;
                let (h, w) = (target.image.height, target.image.width);
                let image = rasterize(&screen, h, w, &problem.settings);
                Ok(RenderedView {
                    screen,
                    jacobians,
                    image,
                })
            })
            .collect::<Result<_>>()?;

        let rendered: Vec<_> = views.iter().map(|v| v.image.clone()).collect();
        let (e_sl, _) = crate::loss::silhouette_loss(&rendered, problem.targets)?;
        let (e, vertex_grads) = evaluate_objective(
            &mesh.vertices,
            &views,
            problem.targets,
            problem.objective,
            &problem.settings,
        )?;

        let e_p = match &problem.truth_vertices {
            Some(truth) => Some(crate::loss::per_vertex_error(&mesh.vertices, truth)?),
            None => None,
        };

        let row = TraceRow {
            iteration,
            e,
            e_sl,
            e_p,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        };
        if let Some(cb) = callback.as_deref_mut() {
            cb(&row);
        }
        rows.push(row);

        if iteration == iterations {
            break;
        }
        if !e.is_finite() {
            diverged = Some(iteration);
            break;
        }

        let param_grads = jacobian.transpose_apply(&vertex_grads)?;
        adam_step(&mut state, &mut params, &param_grads)?;
    }

    Ok(FitResult {
        rows,
        params,
        diverged,
    })
}

/// Writes the trace as CSV with 6-significant-digit formatting. The E_p
/// column is empty when no ground truth was available.
pub fn write_trace_csv(writer: &mut impl Write, rows: &[TraceRow]) -> std::io::Result<()> {
    writeln!(writer, "iteration,E,E_sl,E_p,wall_ms")?;
    for row in rows {
        let e_p = row.e_p.map(|v| format!("{v:.5e}")).unwrap_or_default();
        writeln!(
            writer,
            "{},{:.5e},{:.5e},{},{:.3}",
            row.iteration, row.e, row.e_sl, e_p, row.wall_ms
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_zero_gradient_keeps_params() {
        let mut state = AdamState::new(3, AdamParams::default());
        let mut params = vec![1.0, -2.0, 0.5];
        adam_step(&mut state, &mut params, &[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(params, vec![1.0, -2.0, 0.5]);
        assert_eq!(state.t, 1);
    }

    #[test]
    fn adam_first_step_matches_hand_evaluation() {
        // t=1, g=1: m_hat = 1, v_hat = 1, step = -alpha / (1 + eps).
        let hyper = AdamParams {
            alpha: 0.1,
            ..AdamParams::default()
        };
        let mut state = AdamState::new(2, hyper);
        let mut params = vec![0.0, 5.0];
        adam_step(&mut state, &mut params, &[1.0, 1.0]).unwrap();
        let expected = -0.1 / (1.0 + 1e-8);
        assert!((params[0] - expected).abs() < 1e-15);
        assert!((params[1] - (5.0 + expected)).abs() < 1e-15);
    }

    #[test]
    fn adam_two_runs_bitwise_identical() {
        let run = || {
            let mut state = AdamState::new(4, AdamParams::default());
            let mut params = vec![0.3, -0.8, 1.2, 0.0];
            for k in 0..100 {
                let grads: Vec<f64> = params.iter().map(|p| 2.0 * p + (k as f64).sin()).collect();
                adam_step(&mut state, &mut params, &grads).unwrap();
            }
            params
        };
        let a = run();
        let b = run();
        assert_eq!(
            a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn adam_rejects_non_finite_gradient() {
        let mut state = AdamState::new(2, AdamParams::default());
        let mut params = vec![0.0, 0.0];
        match adam_step(&mut state, &mut params, &[0.0, f64::NAN]) {
            Err(Error::NonFiniteGradient { index }) => assert_eq!(index, 1),
            other => panic!("expected NonFiniteGradient, got {other:?}"),
        }
    }

    #[test]
    fn adam_converges_on_quadratic() {
        let hyper = AdamParams {
            alpha: 0.05,
            ..AdamParams::default()
        };
        let mut state = AdamState::new(2, hyper);
        let mut params = vec![3.0, -2.0];
        for _ in 0..2000 {
            let grads: Vec<f64> = params.iter().map(|p| 2.0 * p).collect();
            adam_step(&mut state, &mut params, &grads).unwrap();
        }
        assert!(params.iter().all(|p| p.abs() < 1e-3), "{params:?}");
    }

    #[test]
    fn trace_csv_formatting() {
        let rows = vec![
            TraceRow {
                iteration: 0,
                e: 123.456789,
                e_sl: 123.456789,
                e_p: Some(0.0123456),
                wall_ms: 1.5,
            },
            TraceRow {
                iteration: 1,
                e: 100.0,
                e_sl: 99.5,
                e_p: None,
                wall_ms: 3.25,
            },
        ];
        let mut buf = Vec::new();
        write_trace_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "iteration,E,E_sl,E_p,wall_ms");
        assert_eq!(lines[1], "0,1.23457e2,1.23457e2,1.23456e-2,1.500");
        assert_eq!(lines[2], "1,1.00000e2,9.95000e1,,3.250");
    }
}
