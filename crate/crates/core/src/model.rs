//! Optimizable geometry generators: a rigid-transform model and a
//! kinematic-chain body with linear blend skinning, exposing a fixed shape
//! plus pose parameters.
//!
//! Rotations use the axis-angle encoding via the Rodrigues formula
//! `R = I + (sin t / t) K + ((1 - cos t)/t^2) K^2` with `K = skew(aa)` and
//! `t = |aa|`; both the value and its three partial-derivative matrices are
//! exact, with series fallbacks so nothing blows up at tiny angles.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Mat3, TriangleMesh, Vec3};

/// Below this angle the Rodrigues coefficients use their Taylor series.
pub const SMALL_ANGLE_THRESHOLD: f64 = 1e-4;

/// Rigid pose: v -> scale * R(rotation) * v + translation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidParams {
    pub translation: Vec3,
    /// Axis-angle (radians times unit axis).
    pub rotation: Vec3,
    pub scale: f64,
}

impl Default for RigidParams {
    fn default() -> Self {
        RigidParams {
            translation: Vec3::ZERO,
            rotation: Vec3::ZERO,
            scale: 1.0,
        }
    }
}

impl RigidParams {
    /// Flat layout [tx, ty, tz, rx, ry, rz, scale].
    pub const PARAM_COUNT: usize = 7;

    pub fn to_flat(&self) -> Vec<f64> {
        vec![
            self.translation.x,
            self.translation.y,
            self.translation.z,
            self.rotation.x,
            self.rotation.y,
            self.rotation.z,
            self.scale,
        ]
    }

    pub fn from_flat(flat: &[f64]) -> Result<RigidParams> {
        if flat.len() != Self::PARAM_COUNT {
            return Err(Error::InvalidParameter(format!(
                "rigid parameter vector needs {} entries, got {}",
                Self::PARAM_COUNT,
                flat.len()
            )));
        }
        Ok(RigidParams {
            translation: Vec3::new(flat[0], flat[1], flat[2]),
            rotation: Vec3::new(flat[3], flat[4], flat[5]),
            scale: flat[6],
        })
    }
}

// sin(t)/t, (1-cos t)/t^2, and the factors of their derivatives with
// respect to the squared-angle chain: d(sin t/t)/d(aa_c) = ds1 * aa_c etc.
fn rodrigues_coefficients(theta: f64) -> (f64, f64, f64, f64) {
    let t2 = theta * theta;
    if theta < SMALL_ANGLE_THRESHOLD {
        // Series in t^2; truncation error ~t^6 is far below f64 noise here.
        let s1 = 1.0 - t2 / 6.0 + t2 * t2 / 120.0;
        let c2 = 0.5 - t2 / 24.0 + t2 * t2 / 720.0;
        let ds1 = -1.0 / 3.0 + t2 / 30.0 - t2 * t2 / 840.0;
        let dc2 = -1.0 / 12.0 + t2 / 180.0 - t2 * t2 / 6720.0;
        (s1, c2, ds1, dc2)
    } else {
        let (s, c) = theta.sin_cos();
        let s1 = s / theta;
        let c2 = (1.0 - c) / t2;
        let ds1 = (theta * c - s) / (t2 * theta);
        let dc2 = (theta * s - 2.0 * (1.0 - c)) / (t2 * t2);
        (s1, c2, ds1, dc2)
    }
}

/// Rodrigues rotation for an axis-angle vector, plus the three exact
/// partial-derivative matrices dR/d(aa_x), dR/d(aa_y), dR/d(aa_z).
pub fn axis_angle_to_matrix(aa: Vec3) -> (Mat3, [Mat3; 3]) {
    let theta = aa.length();
    let (s1, c2, ds1, dc2) = rodrigues_coefficients(theta);
    let k = Mat3::skew(aa);
    let k2 = k.matmul(&k);
    let r = Mat3::IDENTITY.add(&k.scale(s1)).add(&k2.scale(c2));

    let basis = [
        Vec3::new(1.0, 0.0, 0.0),
        Vec3::new(0.0, 1.0, 0.0),
        Vec3::new(0.0, 0.0, 1.0),
    ];
    let mut derivs = [Mat3::ZERO; 3];
    for (c, (e, out)) in basis.into_iter().zip(derivs.iter_mut()).enumerate() {
        let ec = Mat3::skew(e);
        let a_c = match c {
            0 => aa.x,
            1 => aa.y,
            _ => aa.z,
        };
        // dR = (ds1 a_c) K + s1 E_c + (dc2 a_c) K^2 + c2 (E_c K + K E_c)
        *out = k
            .scale(ds1 * a_c)
            .add(&ec.scale(s1))
            .add(&k2.scale(dc2 * a_c))
            .add(&ec.matmul(&k).add(&k.matmul(&ec)).scale(c2));
    }
    (r, derivs)
}

/// Dense per-vertex Jacobian: `rows[v * n_params + p]` is the derivative of
/// vertex v's 3D position with respect to scalar parameter p.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexJacobian {
    pub n_vertices: usize,
    pub n_params: usize,
    pub rows: Vec<Vec3>,
}

impl VertexJacobian {
    pub fn zeros(n_vertices: usize, n_params: usize) -> Self {
        VertexJacobian {
            n_vertices,
            n_params,
            rows: vec![Vec3::ZERO; n_vertices * n_params],
        }
    }

    #[inline]
    pub fn get(&self, vertex: usize, param: usize) -> Vec3 {
        self.rows[vertex * self.n_params + param]
    }

    #[inline]
    pub fn add(&mut self, vertex: usize, param: usize, value: Vec3) {
        self.rows[vertex * self.n_params + param] += value;
    }

    /// Parameter-space gradient g_p = sum_v dv/dp . g3_v.
    pub fn transpose_apply(&self, vertex_grads: &[Vec3]) -> Result<Vec<f64>> {
        if vertex_grads.len() != self.n_vertices {
            return Err(Error::DimensionMismatch(format!(
                "{} vertex gradients for {} vertices",
                vertex_grads.len(),
                self.n_vertices
            )));
        }
        let mut out = vec![0.0; self.n_params];
        for (v, g) in vertex_grads.iter().enumerate() {
            let base = v * self.n_params;
            for (p, o) in out.iter_mut().enumerate() {
                *o += self.rows[base + p].dot(*g);
            }
        }
        Ok(out)
    }
}

/// v -> scale * R * v + translation, with the exact Jacobian with respect
/// to the 7 rigid parameters [tx, ty, tz, rx, ry, rz, scale].
pub fn apply_rigid(
    template: &TriangleMesh,
    params: &RigidParams,
) -> Result<(TriangleMesh, VertexJacobian)> {
    if params.scale <= 0.0 || params.scale.is_nan() {
        return Err(Error::InvalidParameter(format!(
            "scale must be positive, got {}",
            params.scale
        )));
    }
    let (r, dr) = axis_angle_to_matrix(params.rotation);
    let n = template.vertices.len();
    let mut jac = VertexJacobian::zeros(n, RigidParams::PARAM_COUNT);
    let mut vertices = Vec::with_capacity(n);
    for (v, &x) in template.vertices.iter().enumerate() {
        let rx = r.apply(x);
        vertices.push(rx * params.scale + params.translation);
        jac.add(v, 0, Vec3::new(1.0, 0.0, 0.0));
        jac.add(v, 1, Vec3::new(0.0, 1.0, 0.0));
        jac.add(v, 2, Vec3::new(0.0, 0.0, 1.0));
        for (c, drc) in dr.iter().enumerate() {
            jac.add(v, 3 + c, drc.apply(x) * params.scale);
        }
        jac.add(v, 6, rx);
    }
    let mesh = TriangleMesh {
        vertices,
        faces: template.faces.clone(),
    };
    Ok((mesh, jac))
}

/// Kinematic tree with rest-pose joint positions and per-vertex skinning
/// weights (at most 4 joint/weight pairs per vertex).
#[derive(Debug, Clone, PartialEq)]
pub struct Skeleton {
    pub joints: Vec<Vec3>,
    /// `parents[0]` must be None; every other joint's parent precedes it.
    pub parents: Vec<Option<usize>>,
    /// Per mesh vertex: (joint, weight) pairs; weights sum to 1.
    pub weights: Vec<Vec<(usize, f64)>>,
}

impl Skeleton {
    pub fn validate(&self, n_vertices: usize) -> Result<()> {
        if self.joints.is_empty() {
            return Err(Error::InvalidSkeleton("no joints".into()));
        }
        if self.parents.len() != self.joints.len() {
            return Err(Error::InvalidSkeleton(
                "parents/joints length mismatch".into(),
            ));
        }
        if self.parents[0].is_some() {
            return Err(Error::InvalidSkeleton("joint 0 must be the root".into()));
        }
        for (j, parent) in self.parents.iter().enumerate().skip(1) {
            match parent {
                Some(p) if *p < j => {}
                Some(p) => {
                    return Err(Error::InvalidSkeleton(format!(
                        "joint {j} has parent {p}, which does not precede it"
                    )))
                }
                None => {
                    return Err(Error::InvalidSkeleton(format!(
                        "joint {j} is an extra root; the tree must be rooted at joint 0"
                    )))
                }
            }
        }
        if self.weights.len() != n_vertices {
            return Err(Error::InvalidSkeleton(format!(
                "{} weight lists for {} vertices",
                self.weights.len(),
                n_vertices
            )));
        }
        for (v, list) in self.weights.iter().enumerate() {
            if list.is_empty() || list.len() > 4 {
                return Err(Error::InvalidSkeleton(format!(
                    "vertex {v} has {} weights (need 1..=4)",
                    list.len()
                )));
            }
            let mut sum = 0.0;
            for &(j, w) in list {
                if j >= self.joints.len() {
                    return Err(Error::InvalidSkeleton(format!(
                        "vertex {v} references joint {j}"
                    )));
                }
                if w < 0.0 {
                    return Err(Error::InvalidSkeleton(format!(
                        "vertex {v} has negative weight {w}"
                    )));
                }
                sum += w;
            }
            if (sum - 1.0).abs() > 1e-6 {
                return Err(Error::InvalidSkeleton(format!(
                    "vertex {v} weights sum to {sum}"
                )));
            }
        }
        Ok(())
    }

    pub fn joint_count(&self) -> usize {
        self.joints.len()
    }
}

/// Per-joint axis-angle rotations plus a root translation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseParams {
    pub theta: Vec<Vec3>,
    pub root_translation: Vec3,
}

impl PoseParams {
    pub fn zero(joint_count: usize) -> Self {
        PoseParams {
            theta: vec![Vec3::ZERO; joint_count],
            root_translation: Vec3::ZERO,
        }
    }

    pub fn param_count(joint_count: usize) -> usize {
        3 * joint_count + 3
    }

    /// Flat layout [theta_0.xyz, ..., theta_{J-1}.xyz, root.xyz].
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(Self::param_count(self.theta.len()));
        for t in &self.theta {
            out.extend_from_slice(&[t.x, t.y, t.z]);
        }
        out.extend_from_slice(&[
            self.root_translation.x,
            self.root_translation.y,
            self.root_translation.z,
        ]);
        out
    }

    pub fn from_flat(flat: &[f64], joint_count: usize) -> Result<PoseParams> {
        if flat.len() != Self::param_count(joint_count) {
            return Err(Error::InvalidParameter(format!(
                "pose vector needs {} entries for {joint_count} joints, got {}",
                Self::param_count(joint_count),
                flat.len()
            )));
        }
        let theta = (0..joint_count)
            .map(|j| Vec3::new(flat[3 * j], flat[3 * j + 1], flat[3 * j + 2]))
            .collect();
        let root_translation = Vec3::new(
            flat[3 * joint_count],
            flat[3 * joint_count + 1],
            flat[3 * joint_count + 2],
        );
        Ok(PoseParams {
            theta,
            root_translation,
        })
    }
}

#[derive(Debug, Clone, Copy)]
struct Affine {
    lin: Mat3,
    tr: Vec3,
}

impl Affine {
    const IDENTITY: Affine = Affine {
        lin: Mat3::IDENTITY,
        tr: Vec3::ZERO,
    };

    fn apply(&self, v: Vec3) -> Vec3 {
        self.lin.apply(v) + self.tr
    }

    fn compose(&self, other: &Affine) -> Affine {
        Affine {
            lin: self.lin.matmul(&other.lin),
            tr: self.lin.apply(other.tr) + self.tr,
        }
    }
}

struct JointTransforms {
    /// Rotation about the joint's rest position: M_j = T(p) R T(-p).
    motion: Vec<Affine>,
    /// dR matrices per joint, one triple per axis-angle component.
    rotation_derivs: Vec<[Mat3; 3]>,
    /// Linear part of the global transform of the joint's parent chain.
    prefix_lin: Vec<Mat3>,
}

fn forward_kinematics(skeleton: &Skeleton, pose: &PoseParams) -> JointTransforms {
    let j = skeleton.joint_count();
    let mut motion = Vec::with_capacity(j);
    let mut rotation_derivs = Vec::with_capacity(j);
    let mut global = Vec::with_capacity(j);
    let mut prefix_lin = Vec::with_capacity(j);

    for jt in 0..j {
        let (r, dr) = axis_angle_to_matrix(pose.theta[jt]);
        let p = skeleton.joints[jt];
        let m = Affine {
            lin: r,
            tr: p - r.apply(p),
        };
        let parent_global = match skeleton.parents[jt] {
            None => Affine::IDENTITY,
            Some(parent) => global[parent],
        };
        prefix_lin.push(parent_global.lin);
        global.push(parent_global.compose(&m));
        motion.push(m);
        rotation_derivs.push(dr);
    }

    JointTransforms {
        motion,
        rotation_derivs,
        prefix_lin,
    }
}

/// Poses the template by forward kinematics plus linear blend skinning and
/// returns the exact Jacobian of every vertex with respect to the flat
/// pose vector (3J + 3 parameters).
pub fn pose_mesh(
    template: &TriangleMesh,
    skeleton: &Skeleton,
    pose: &PoseParams,
) -> Result<(TriangleMesh, VertexJacobian)> {
    skeleton.validate(template.vertices.len())?;
    if pose.theta.len() != skeleton.joint_count() {
        return Err(Error::InvalidParameter(format!(
            "pose has {} joint rotations for {} joints",
            pose.theta.len(),
            skeleton.joint_count()
        )));
    }
    let transforms = forward_kinematics(skeleton, pose);
    let n_params = PoseParams::param_count(skeleton.joint_count());
    let root_base = 3 * skeleton.joint_count();

    let results: Vec<(Vec3, Vec<Vec3>)> = template
        .vertices
        .par_iter()
        .enumerate()
        .map(|(v, &x)| {
            let mut rows = vec![Vec3::ZERO; n_params];
            let mut posed = Vec3::ZERO;
            for &(joint, weight) in &skeleton.weights[v] {
                // Walk from the skinned joint up to the root: `cur` holds
                // the vertex position under the chain strictly below the
                // current ancestor, so each theta derivative is a rotation
                // of (cur - joint position) carried by the prefix rotation.
                let mut cur = x;
                let mut ancestor = Some(joint);
                while let Some(jt) = ancestor {
                    let lever = cur - skeleton.joints[jt];
                    for c in 0..3 {
                        let d = transforms.prefix_lin[jt]
                            .apply(transforms.rotation_derivs[jt][c].apply(lever));
                        rows[3 * jt + c] += d * weight;
                    }
                    cur = transforms.motion[jt].apply(cur);
                    ancestor = skeleton.parents[jt];
                }
                posed += cur * weight;
            }
            rows[root_base] = Vec3::new(1.0, 0.0, 0.0);
            rows[root_base + 1] = Vec3::new(0.0, 1.0, 0.0);
            rows[root_base + 2] = Vec3::new(0.0, 0.0, 1.0);
            (posed + pose.root_translation, rows)
        })
        .collect();

    let mut vertices = Vec::with_capacity(template.vertices.len());
    let mut jac = VertexJacobian::zeros(template.vertices.len(), n_params);
    for (v, (pos, rows)) in results.into_iter().enumerate() {
        vertices.push(pos);
        jac.rows[v * n_params..(v + 1) * n_params].copy_from_slice(&rows);
    }

    let mesh = TriangleMesh {
        vertices,
        faces: template.faces.clone(),
    };
    Ok((mesh, jac))
}

/// One capsule-shaped limb of the toy body.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimbSpec {
    pub parent: Option<usize>,
    /// Joint rest position; the capsule spans start..end.
    pub start: Vec3,
    pub end: Vec3,
    pub radius: f64,
}

/// Cross-section of the generated limbs. Capsules are solids of
/// revolution, so their axial roll is invisible to silhouettes; box limbs
/// make every pose parameter observable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LimbShape {
    #[default]
    Capsule,
    Box,
}

/// Generator input for the toy articulated body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyBodySpec {
    pub limbs: Vec<LimbSpec>,
    /// Vertices around each capsule ring.
    pub radial_segments: usize,
    /// Latitude rings per hemispherical cap.
    pub cap_rings: usize,
    /// When set, vertices within this distance of a child joint blend
    /// smoothly between the limb and its parent; default one-hot weights
    /// keep the gradient checks exact.
    pub blend_radius: Option<f64>,
    pub limb_shape: LimbShape,
}

impl ToyBodySpec {
    /// Two-limb chain along +x: shoulder at the origin, elbow at
    /// (upper_len, 0, 0).
    pub fn two_joint_arm(
        upper_len: f64,
        fore_len: f64,
        radius: f64,
        radial_segments: usize,
    ) -> Self {
        ToyBodySpec {
            limbs: vec![
                LimbSpec {
                    parent: None,
                    start: Vec3::ZERO,
                    end: Vec3::new(upper_len, 0.0, 0.0),
                    radius,
                },
                LimbSpec {
                    parent: Some(0),
                    start: Vec3::new(upper_len, 0.0, 0.0),
                    end: Vec3::new(upper_len + fore_len, 0.0, 0.0),
                    radius,
                },
            ],
            radial_segments,
            cap_rings: 2,
            blend_radius: None,
            limb_shape: LimbShape::Capsule,
        }
    }

    /// 12-joint standing humanoid about 1.6 units tall, facing +z, built
    /// from capsule limbs: pelvis-spine-chest-head column, two arms in
    /// T-pose, two legs.
    pub fn humanoid() -> Self {
        let limb = |parent: Option<usize>, start: (f64, f64, f64), end: (f64, f64, f64), radius| {
            LimbSpec {
                parent,
                start: Vec3::new(start.0, start.1, start.2),
                end: Vec3::new(end.0, end.1, end.2),
                radius,
            }
        };
        ToyBodySpec {
            limbs: vec![
                // 0 pelvis -> spine
                limb(None, (0.0, 0.90, 0.0), (0.0, 1.05, 0.0), 0.10),
                // 1 spine -> chest
                limb(Some(0), (0.0, 1.05, 0.0), (0.0, 1.20, 0.0), 0.095),
                // 2 chest -> neck top
                limb(Some(1), (0.0, 1.20, 0.0), (0.0, 1.38, 0.0), 0.09),
                // 3 head
                limb(Some(2), (0.0, 1.38, 0.0), (0.0, 1.52, 0.0), 0.07),
                // 4 left upper arm, 5 left forearm
                limb(Some(2), (0.18, 1.30, 0.0), (0.44, 1.30, 0.0), 0.035),
                limb(Some(4), (0.44, 1.30, 0.0), (0.68, 1.30, 0.0), 0.030),
                // 6 right upper arm, 7 right forearm
                limb(Some(2), (-0.18, 1.30, 0.0), (-0.44, 1.30, 0.0), 0.035),
                limb(Some(6), (-0.44, 1.30, 0.0), (-0.68, 1.30, 0.0), 0.030),
                // 8 left thigh, 9 left shin
                limb(Some(0), (0.09, 0.85, 0.0), (0.10, 0.45, 0.0), 0.05),
                limb(Some(8), (0.10, 0.45, 0.0), (0.10, 0.06, 0.0), 0.042),
                // 10 right thigh, 11 right shin
                limb(Some(0), (-0.09, 0.85, 0.0), (-0.10, 0.45, 0.0), 0.05),
                limb(Some(10), (-0.10, 0.45, 0.0), (-0.10, 0.06, 0.0), 0.042),
            ],
            radial_segments: 8,
            cap_rings: 2,
            blend_radius: None,
            limb_shape: LimbShape::Capsule,
        }
    }

    pub fn with_box_limbs(mut self) -> Self {
        self.limb_shape = LimbShape::Box;
        self
    }
}

/// Closed box limb with square cross-section of half-width `radius`,
/// extended by `radius` past each joint like the capsule caps.
fn append_box(limb: &LimbSpec, vertices: &mut Vec<Vec3>, faces: &mut Vec<[usize; 3]>) {
    let axis = limb.end - limb.start;
    let u = axis.normalized();
    let reference = if u.x.abs() < 0.9 {
        Vec3::new(1.0, 0.0, 0.0)
    } else {
        Vec3::new(0.0, 0.0, 1.0)
    };
    let a = reference.cross(u).normalized();
    let b = a.cross(u);
    let r = limb.radius;
    let p0 = limb.start - u * r;
    let p1 = limb.end + u * r;

    let base = vertices.len();
    let corners = [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)];
    for center in [p0, p1] {
        for &(sx, sy) in &corners {
            vertices.push(center + a * (sx * r) + b * (sy * r));
        }
    }
    let bi = |k: usize| base + k % 4;
    let ti = |k: usize| base + 4 + k % 4;
    faces.push([bi(0), bi(1), bi(2)]);
    faces.push([bi(0), bi(2), bi(3)]);
    faces.push([ti(0), ti(2), ti(1)]);
    faces.push([ti(0), ti(3), ti(2)]);
    for k in 0..4 {
        faces.push([bi(k), ti(k), ti(k + 1)]);
        faces.push([bi(k), ti(k + 1), bi(k + 1)]);
    }
}

/// Closed capsule mesh for one limb, appended to the shared buffers.
fn append_capsule(
    limb: &LimbSpec,
    radial_segments: usize,
    cap_rings: usize,
    vertices: &mut Vec<Vec3>,
    faces: &mut Vec<[usize; 3]>,
) {
    let axis = limb.end - limb.start;
    let length = axis.length();
    let u = axis * (1.0 / length);
    let reference = if u.x.abs() < 0.9 {
        Vec3::new(1.0, 0.0, 0.0)
    } else {
        Vec3::new(0.0, 0.0, 1.0)
    };
    let a = reference.cross(u).normalized();
    let b = a.cross(u);
    let place = |x: f64, y: f64, z: f64| limb.start + a * x + u * y + b * z;

    let base = vertices.len();
    let s = radial_segments;
    let r = limb.radius;

    // Rings bottom to top: cap_rings on the lower hemisphere (equator
    // last), then cap_rings mirrored on the upper hemisphere.
    let mut ring_levels: Vec<(f64, f64)> = Vec::new(); // (y, ring radius)
    for k in 1..=cap_rings {
        let phi = (k as f64 / cap_rings as f64) * std::f64::consts::FRAC_PI_2;
        ring_levels.push((-r * phi.cos(), r * phi.sin()));
    }
    for k in (1..=cap_rings).rev() {
        let phi = (k as f64 / cap_rings as f64) * std::f64::consts::FRAC_PI_2;
        ring_levels.push((length + r * phi.cos(), r * phi.sin()));
    }

    vertices.push(place(0.0, -r, 0.0)); // bottom pole
    for &(y, rho) in &ring_levels {
        for m in 0..s {
            let ang = std::f64::consts::TAU * (m as f64) / (s as f64);
            vertices.push(place(rho * ang.cos(), y, rho * ang.sin()));
        }
    }
    vertices.push(place(0.0, length + r, 0.0)); // top pole

    let ring = |k: usize, m: usize| base + 1 + k * s + (m % s);
    let bottom = base;
    let top = base + 1 + ring_levels.len() * s;

    for m in 0..s {
        faces.push([bottom, ring(0, m + 1), ring(0, m)]);
    }
    for k in 0..ring_levels.len() - 1 {
        for m in 0..s {
            faces.push([ring(k, m), ring(k, m + 1), ring(k + 1, m)]);
            faces.push([ring(k, m + 1), ring(k + 1, m + 1), ring(k + 1, m)]);
        }
    }
    let last = ring_levels.len() - 1;
    for m in 0..s {
        faces.push([top, ring(last, m), ring(last, m + 1)]);
    }
}

/// Builds the watertight capsule-limb mesh and its skeleton. Deterministic
/// for a given spec. Weights are one-hot per limb unless `blend_radius`
/// asks for smooth blending near the joints.
pub fn make_toy_body(spec: &ToyBodySpec) -> Result<(TriangleMesh, Skeleton)> {
    if spec.limbs.is_empty() {
        return Err(Error::InvalidParameter(
            "toy body needs at least one limb".into(),
        ));
    }
    if spec.radial_segments < 3 {
        return Err(Error::InvalidParameter(format!(
            "radial_segments must be >= 3, got {}",
            spec.radial_segments
        )));
    }
    if spec.cap_rings < 1 {
        return Err(Error::InvalidParameter(format!(
            "cap_rings must be >= 1, got {}",
            spec.cap_rings
        )));
    }
    for (j, limb) in spec.limbs.iter().enumerate() {
        if limb.radius <= 0.0 || limb.radius.is_nan() {
            return Err(Error::InvalidParameter(format!(
                "limb {j} radius must be positive, got {}",
                limb.radius
            )));
        }
        if (limb.end - limb.start).length() <= 0.0 {
            return Err(Error::InvalidParameter(format!("limb {j} has zero length")));
        }
    }

    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    let mut weights: Vec<Vec<(usize, f64)>> = Vec::new();

    for (j, limb) in spec.limbs.iter().enumerate() {
        let start = vertices.len();
        match spec.limb_shape {
            LimbShape::Capsule => append_capsule(
                limb,
                spec.radial_segments,
                spec.cap_rings,
                &mut vertices,
                &mut faces,
            ),
            LimbShape::Box => append_box(limb, &mut vertices, &mut faces),
        }
        for vertex in vertices.iter().skip(start) {
            let weight = match (spec.blend_radius, limb.parent) {
                (Some(rb), Some(parent)) if rb > 0.0 => {
                    let d = (*vertex - limb.start).length();
                    if d < rb {
                        let own = 0.5 + 0.5 * (d / rb);
                        vec![(j, own), (parent, 1.0 - own)]
                    } else {
                        vec![(j, 1.0)]
                    }
                }
                _ => vec![(j, 1.0)],
            };
            weights.push(weight);
        }
    }

    let mesh = TriangleMesh::new(vertices, faces)?;
    let skeleton = Skeleton {
        joints: spec.limbs.iter().map(|l| l.start).collect(),
        parents: spec.limbs.iter().map(|l| l.parent).collect(),
        weights,
    };
    skeleton.validate(mesh.vertices.len())?;
    Ok((mesh, skeleton))
}
