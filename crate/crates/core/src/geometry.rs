//! Core geometric records and mesh utilities shared by every other module.
//!
//! Screen convention: x grows rightward, y grows downward, origin at the
//! image top-left. Pixel (i, j) — row i, column j, 0-based — occupies the
//! unit square `Rect(j, i, j+1, i+1)`, so the pixel area is 1 in screen
//! units. With that convention a positive [`signed_area`] means the
//! triangle interior lies on the negative side of the edge line
//! `A x + B y + C` for each directed edge of the triangle.

use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::ops::{Add, AddAssign, Mul, Neg, Sub};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// 2D screen-space point or vector, in pixel units.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// 2D cross product (z component of the 3D cross of the embedded vectors).
    pub fn cross(self, other: Vec2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn length(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl AddAssign for Vec2 {
    fn add_assign(&mut self, rhs: Vec2) {
        self.x += rhs.x;
        self.y += rhs.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

impl fmt::Display for Vec2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// 3D object-space point or vector.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 {
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn dot(self, other: Vec3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn cross(self, other: Vec3) -> Vec3 {
        Vec3::new(
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        )
    }

    pub fn length(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn normalized(self) -> Vec3 {
        let len = self.length();
        if len == 0.0 {
            Vec3::ZERO
        } else {
            self * (1.0 / len)
        }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, rhs: Vec3) -> Vec3 {
        Vec3::new(self.x + rhs.x, self.y + rhs.y, self.z + rhs.z)
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, rhs: Vec3) {
        self.x += rhs.x;
        self.y += rhs.y;
        self.z += rhs.z;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, rhs: Vec3) -> Vec3 {
        Vec3::new(self.x - rhs.x, self.y - rhs.y, self.z - rhs.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// Row-major 3x3 matrix. Only the handful of operations the projection and
/// kinematics code needs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mat3 {
    pub m: [[f64; 3]; 3],
}

impl Mat3 {
    pub const IDENTITY: Mat3 = Mat3 {
        m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
    };

    pub const ZERO: Mat3 = Mat3 { m: [[0.0; 3]; 3] };

    pub fn from_rows(r0: Vec3, r1: Vec3, r2: Vec3) -> Mat3 {
        Mat3 {
            m: [[r0.x, r0.y, r0.z], [r1.x, r1.y, r1.z], [r2.x, r2.y, r2.z]],
        }
    }

    /// Skew-symmetric cross-product matrix: `skew(v) * w == v.cross(w)`.
    pub fn skew(v: Vec3) -> Mat3 {
        Mat3 {
            m: [[0.0, -v.z, v.y], [v.z, 0.0, -v.x], [-v.y, v.x, 0.0]],
        }
    }

    pub fn row(&self, i: usize) -> Vec3 {
        Vec3::new(self.m[i][0], self.m[i][1], self.m[i][2])
    }

    pub fn transpose(&self) -> Mat3 {
        let m = &self.m;
        Mat3 {
            m: [
                [m[0][0], m[1][0], m[2][0]],
                [m[0][1], m[1][1], m[2][1]],
                [m[0][2], m[1][2], m[2][2]],
            ],
        }
    }

    pub fn apply(&self, v: Vec3) -> Vec3 {
        Vec3::new(self.row(0).dot(v), self.row(1).dot(v), self.row(2).dot(v))
    }

    pub fn matmul(&self, other: &Mat3) -> Mat3 {
        let mut out = [[0.0; 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = (0..3).map(|k| self.m[i][k] * other.m[k][j]).sum();
            }
        }
        Mat3 { m: out }
    }

    pub fn scale(&self, s: f64) -> Mat3 {
        let mut out = self.m;
        for row in out.iter_mut() {
            for cell in row.iter_mut() {
                *cell *= s;
            }
        }
        Mat3 { m: out }
    }

    pub fn add(&self, other: &Mat3) -> Mat3 {
        let mut out = self.m;
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell += other.m[i][j];
            }
        }
        Mat3 { m: out }
    }

    /// Max absolute deviation of `R^T R` from the identity.
    pub fn orthonormality_error(&self) -> f64 {
        let gram = self.transpose().matmul(self);
        let mut err: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                err = err.max((gram.m[i][j] - want).abs());
            }
        }
        err
    }
}

/// Axis-aligned screen-space rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl Rect {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Rect {
        Rect {
            x_min,
            y_min,
            x_max,
            y_max,
        }
    }

    /// The unit square occupied by pixel (row i, column j).
    pub fn pixel(i: usize, j: usize) -> Rect {
        Rect::new(j as f64, i as f64, j as f64 + 1.0, i as f64 + 1.0)
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn is_empty(&self) -> bool {
        self.x_min >= self.x_max || self.y_min >= self.y_max
    }

    pub fn contains(&self, p: Vec2, tol: f64) -> bool {
        p.x >= self.x_min - tol
            && p.x <= self.x_max + tol
            && p.y >= self.y_min - tol
            && p.y <= self.y_max + tol
    }

    pub fn overlaps(&self, other: &Rect) -> bool {
        self.x_min < other.x_max
            && other.x_min < self.x_max
            && self.y_min < other.y_max
            && other.y_min < self.y_max
    }
}

/// Signed area of the triangle (a, b, c).
///
/// Positive iff, for every directed edge a→b, b→c, c→a, the triangle
/// interior lies on the side where the edge line function A x + B y + C
/// (A = y1-y0, B = x0-x1, C = x1 y0 - x0 y1) is negative. In the y-down
/// screen frame that is the visually clockwise winding.
pub fn signed_area(a: Vec2, b: Vec2, c: Vec2) -> f64 {
    (b - a).cross(c - a) / 2.0
}

/// Tight axis-aligned bounding box of three screen vertices.
pub fn face_bounding_box(a: Vec2, b: Vec2, c: Vec2) -> Rect {
    Rect::new(
        a.x.min(b.x).min(c.x),
        a.y.min(b.y).min(c.y),
        a.x.max(b.x).max(c.x),
        a.y.max(b.y).max(c.y),
    )
}

/// Triangulated 3D mesh: vertices plus face index triples.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[usize; 3]>,
}

impl TriangleMesh {
    /// Validates the mesh invariants: at least 3 vertices and 1 face, all
    /// indices in range, no face repeating a vertex.
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::InvalidMesh(format!(
                "need at least 3 vertices, got {}",
                vertices.len()
            )));
        }
        if faces.is_empty() {
            return Err(Error::InvalidMesh("mesh has no faces".into()));
        }
        for (fi, face) in faces.iter().enumerate() {
            for &idx in face {
                if idx >= vertices.len() {
                    return Err(Error::InvalidMesh(format!(
                        "face {fi} references vertex {idx} but mesh has {} vertices",
                        vertices.len()
                    )));
                }
            }
            if face[0] == face[1] || face[1] == face[2] || face[0] == face[2] {
                return Err(Error::InvalidMesh(format!(
                    "face {fi} repeats a vertex index: {face:?}"
                )));
            }
        }
        for (vi, v) in vertices.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::InvalidMesh(format!("vertex {vi} is not finite")));
            }
        }
        Ok(TriangleMesh { vertices, faces })
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn centroid(&self) -> Vec3 {
        let mut sum = Vec3::ZERO;
        for v in &self.vertices {
            sum += *v;
        }
        sum * (1.0 / self.vertices.len() as f64)
    }

    /// Radius of the bounding sphere centered at the centroid.
    pub fn bounding_radius(&self) -> f64 {
        let c = self.centroid();
        self.vertices
            .iter()
            .map(|v| (*v - c).length())
            .fold(0.0, f64::max)
    }
}

/// A mesh projected to screen space. Faces share the source topology;
/// depths record the camera-space z per vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct ScreenMesh {
    pub vertices: Vec<Vec2>,
    pub faces: Vec<[usize; 3]>,
    pub depths: Vec<f64>,
}

impl ScreenMesh {
    pub fn face_vertices(&self, face: usize) -> (Vec2, Vec2, Vec2) {
        let [a, b, c] = self.faces[face];
        (self.vertices[a], self.vertices[b], self.vertices[c])
    }

    pub fn face_signed_area(&self, face: usize) -> f64 {
        let (a, b, c) = self.face_vertices(face);
        signed_area(a, b, c)
    }

    pub fn face_bbox(&self, face: usize) -> Rect {
        let (a, b, c) = self.face_vertices(face);
        face_bounding_box(a, b, c)
    }
}

/// Loads a triangulated mesh from the v/f subset of Wavefront OBJ.
///
/// Normals, texture coordinates and materials are ignored. Faces with more
/// than three vertices are fan-triangulated. Indices are converted to
/// 0-based.
pub fn load_obj(path: impl AsRef<Path>) -> Result<TriangleMesh> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)?;
    let reader = BufReader::new(file);
    let path_str = path.display().to_string();

    let mut vertices: Vec<Vec3> = Vec::new();
    let mut faces: Vec<[usize; 3]> = Vec::new();

    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("v") => {
                let coords: Vec<f64> = parts
                    .clone()
                    .take(3)
                    .map(|tok| {
                        tok.parse::<f64>().map_err(|_| Error::ObjParse {
                            path: path_str.clone(),
                            line: lineno,
                            message: format!("bad vertex coordinate {tok:?}"),
                        })
                    })
                    .collect::<Result<_>>()?;
                if coords.len() != 3 {
                    return Err(Error::ObjParse {
                        path: path_str.clone(),
                        line: lineno,
                        message: "vertex needs 3 coordinates".into(),
                    });
                }
                vertices.push(Vec3::new(coords[0], coords[1], coords[2]));
            }
            Some("f") => {
                let mut idx: Vec<usize> = Vec::new();
                for tok in parts {
                    // "i", "i/t", "i//n", "i/t/n" — only the vertex index matters.
                    let vtok = tok.split('/').next().unwrap_or("");
                    let raw: i64 = vtok.parse().map_err(|_| Error::ObjParse {
                        path: path_str.clone(),
                        line: lineno,
                        message: format!("bad face index {tok:?}"),
                    })?;
                    if raw < 1 || raw as usize > vertices.len() {
                        return Err(Error::ObjParse {
                            path: path_str.clone(),
                            line: lineno,
                            message: format!(
                                "face index {raw} out of range (1..={})",
                                vertices.len()
                            ),
                        });
                    }
                    idx.push(raw as usize - 1);
                }
                if idx.len() < 3 {
                    return Err(Error::ObjParse {
                        path: path_str.clone(),
                        line: lineno,
                        message: "face needs at least 3 indices".into(),
                    });
                }
                for k in 1..idx.len() - 1 {
                    faces.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {} // vn, vt, usemtl, o, g, s, mtllib ... all ignored
        }
    }

    TriangleMesh::new(vertices, faces)
}

/// Writes the v/f OBJ form of a mesh. Indices are emitted 1-based.
pub fn save_obj_to(writer: &mut impl Write, mesh: &TriangleMesh) -> Result<()> {
    for v in &mesh.vertices {
        writeln!(writer, "v {} {} {}", v.x, v.y, v.z)?;
    }
    for f in &mesh.faces {
        writeln!(writer, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1)?;
    }
    Ok(())
}

/// Atomic OBJ export (temp file + rename).
pub fn save_obj(path: impl AsRef<Path>, mesh: &TriangleMesh) -> Result<()> {
    let mut buf: Vec<u8> = Vec::new();
    save_obj_to(&mut buf, mesh)?;
    crate::imageio::atomic_write(path, &buf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn signed_area_conventions() {
        let a = Vec2::new(0.0, 0.0);
        let b = Vec2::new(1.0, 0.0);
        let c = Vec2::new(0.0, 1.0);
        assert_eq!(signed_area(a, b, c), 0.5);
        assert_eq!(signed_area(a, c, b), -0.5);
        let p = Vec2::new(0.0, 0.0);
        let q = Vec2::new(1.0, 1.0);
        let r = Vec2::new(2.0, 2.0);
        assert_eq!(signed_area(p, q, r), 0.0);
    }

    #[test]
    fn positive_area_means_interior_on_negative_line_side() {
        // For each directed edge of a positively wound triangle, the third
        // vertex must satisfy A x + B y + C < 0.
        let tri = [
            Vec2::new(0.3, 0.1),
            Vec2::new(2.0, 0.4),
            Vec2::new(0.8, 1.7),
        ];
        let area = signed_area(tri[0], tri[1], tri[2]);
        let tri = if area > 0.0 {
            tri
        } else {
            [tri[0], tri[2], tri[1]]
        };
        for k in 0..3 {
            let (x0, y0) = (tri[k].x, tri[k].y);
            let (x1, y1) = (tri[(k + 1) % 3].x, tri[(k + 1) % 3].y);
            let third = tri[(k + 2) % 3];
            let a = y1 - y0;
            let b = x0 - x1;
            let c = x1 * y0 - x0 * y1;
            assert!(a * third.x + b * third.y + c < 0.0);
        }
    }

    #[test]
    fn bbox_examples() {
        let r = face_bounding_box(
            Vec2::new(0.0, 0.0),
            Vec2::new(2.0, 0.0),
            Vec2::new(0.0, 2.0),
        );
        assert_eq!(r, Rect::new(0.0, 0.0, 2.0, 2.0));
        let r = face_bounding_box(
            Vec2::new(-1.0, -1.0),
            Vec2::new(5.0, 1.0),
            Vec2::new(2.0, 7.0),
        );
        assert_eq!(r, Rect::new(-1.0, -1.0, 5.0, 7.0));
        // Degenerate collinear points give a zero-area box.
        let r = face_bounding_box(
            Vec2::new(1.0, 1.0),
            Vec2::new(2.0, 1.0),
            Vec2::new(3.0, 1.0),
        );
        assert_eq!(r.area(), 0.0);
    }

    #[test]
    fn mesh_validation() {
        let verts = vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
        ];
        assert!(TriangleMesh::new(verts.clone(), vec![[0, 1, 2]]).is_ok());
        assert!(TriangleMesh::new(verts.clone(), vec![[0, 1, 3]]).is_err());
        assert!(TriangleMesh::new(verts.clone(), vec![[0, 1, 1]]).is_err());
        assert!(TriangleMesh::new(verts, vec![]).is_err());
    }

    fn write_temp_obj(content: &str) -> tempfile::NamedTempFile {
        use std::io::Write as _;
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn obj_cube_round_trip() {
        let cube = "\
v -1 -1 -1\nv 1 -1 -1\nv 1 1 -1\nv -1 1 -1\nv -1 -1 1\nv 1 -1 1\nv 1 1 1\nv -1 1 1\n\
f 1 2 3\nf 1 3 4\nf 5 7 6\nf 5 8 7\nf 1 5 6\nf 1 6 2\nf 2 6 7\nf 2 7 3\n\
f 3 7 8\nf 3 8 4\nf 4 8 5\nf 4 5 1\n";
        let f = write_temp_obj(cube);
        let mesh = load_obj(f.path()).unwrap();
        assert_eq!(mesh.vertex_count(), 8);
        assert_eq!(mesh.face_count(), 12);

        let out = tempfile::NamedTempFile::new().unwrap();
        save_obj(out.path(), &mesh).unwrap();
        let back = load_obj(out.path()).unwrap();
        assert_eq!(mesh, back);
    }

    #[test]
    fn obj_quad_fan_triangulation() {
        let f = write_temp_obj("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n");
        let mesh = load_obj(f.path()).unwrap();
        assert_eq!(mesh.faces, vec![[0, 1, 2], [0, 2, 3]]);
    }

    #[test]
    fn obj_index_out_of_range() {
        let f = write_temp_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 99\n");
        let err = load_obj(f.path()).unwrap_err();
        match err {
            Error::ObjParse { line, .. } => assert_eq!(line, 4),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn obj_ignores_normals_and_slashed_indices() {
        let f =
            write_temp_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nvn 0 0 1\nvt 0 0\nf 1/1/1 2/2/1 3/3/1\n");
        let mesh = load_obj(f.path()).unwrap();
        assert_eq!(mesh.faces, vec![[0, 1, 2]]);
    }

    proptest! {
        #[test]
        fn signed_area_antisymmetric(
            ax in -10.0..10.0f64, ay in -10.0..10.0f64,
            bx in -10.0..10.0f64, by in -10.0..10.0f64,
            cx in -10.0..10.0f64, cy in -10.0..10.0f64,
        ) {
            let (a, b, c) = (Vec2::new(ax, ay), Vec2::new(bx, by), Vec2::new(cx, cy));
            let s = signed_area(a, b, c);
            prop_assert!((signed_area(b, a, c) + s).abs() <= 1e-9 * s.abs().max(1.0));
            prop_assert!((signed_area(a, c, b) + s).abs() <= 1e-9 * s.abs().max(1.0));
            prop_assert!((signed_area(c, b, a) + s).abs() <= 1e-9 * s.abs().max(1.0));
        }

        #[test]
        fn bbox_contains_inputs(
            ax in -10.0..10.0f64, ay in -10.0..10.0f64,
            bx in -10.0..10.0f64, by in -10.0..10.0f64,
            cx in -10.0..10.0f64, cy in -10.0..10.0f64,
        ) {
            let (a, b, c) = (Vec2::new(ax, ay), Vec2::new(bx, by), Vec2::new(cx, cy));
            let r = face_bounding_box(a, b, c);
            for p in [a, b, c] {
                prop_assert!(r.contains(p, 0.0));
            }
            // Componentwise exactness: every box edge touches some vertex.
            prop_assert!(r.x_min == ax.min(bx).min(cx));
            prop_assert!(r.y_max == ay.max(by).max(cy));
        }
    }
}
