use std::collections::BTreeMap;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use super::GeomError;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn from_slice(s: &[f64]) -> Self {
        Self::new(s[0], s[1], s[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    pub fn distance(self, o: Vec3) -> f64 {
        (self - o).norm()
    }

    pub fn distance_squared(self, o: Vec3) -> f64 {
        (self - o).norm_squared()
    }

    /// Unit vector, or `None` for (near) zero length.
    pub fn normalized(self) -> Option<Vec3> {
        let n = self.norm();
        (n > 1e-300).then(|| self * (1.0 / n))
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
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

/// A per-vertex (or per-point) field: `rows` entries of `cols` channels, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Field {
    pub fn rows(&self) -> usize {
        if self.cols == 0 {
            0
        } else {
            self.data.len() / self.cols
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
}

/// Triangle mesh with counter-clockwise faces.
#[derive(Debug, Clone, Default)]
pub struct TriangleMesh {
    pub positions: Vec<Vec3>,
    pub faces: Vec<[usize; 3]>,
    pub fields: BTreeMap<String, Field>,
}

impl TriangleMesh {
    /// Builds a mesh and checks index range and face degeneracy.
    pub fn new(positions: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<Self, GeomError> {
        let mesh = Self {
            positions,
            faces,
            fields: BTreeMap::new(),
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn validate(&self) -> Result<(), GeomError> {
        let n = self.positions.len();
        if let Some(i) = self.positions.iter().position(|p| !p.is_finite()) {
            return Err(GeomError::NonFinite(i));
        }
        for (fi, f) in self.faces.iter().enumerate() {
            for &v in f {
                if v >= n {
                    return Err(GeomError::IndexError {
                        face: fi,
                        index: v,
                        vertex_count: n,
                    });
                }
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(GeomError::DegenerateFace(fi));
            }
        }
        for (name, field) in &self.fields {
            if field.rows() != n || field.data.len() != n * field.cols {
                return Err(GeomError::FieldRows(name.clone()));
            }
        }
        Ok(())
    }

    pub fn vertex_count(&self) -> usize {
        self.positions.len()
    }

    pub fn face_positions(&self, f: usize) -> [Vec3; 3] {
        let [a, b, c] = self.faces[f];
        [self.positions[a], self.positions[b], self.positions[c]]
    }

    /// Unnormalized face normal; its length is twice the face area.
    pub fn face_cross(&self, f: usize) -> Vec3 {
        let [a, b, c] = self.face_positions(f);
        (b - a).cross(c - a)
    }

    pub fn face_area(&self, f: usize) -> f64 {
        0.5 * self.face_cross(f).norm()
    }

    /// Unique undirected edges as (min, max) pairs, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut e: Vec<(usize, usize)> = self
            .faces
            .iter()
            .flat_map(|f| [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])])
            .map(|(a, b)| (a.min(b), a.max(b)))
            .collect();
        e.sort_unstable();
        e.dedup();
        e
    }

    pub fn mean_edge_length(&self) -> f64 {
        let edges = self.edges();
        if edges.is_empty() {
            return 0.0;
        }
        edges
            .iter()
            .map(|&(a, b)| self.positions[a].distance(self.positions[b]))
            .sum::<f64>()
            / edges.len() as f64
    }

    /// Number of connected components over face adjacency (isolated vertices count as components).
    pub fn component_count(&self) -> usize {
        let n = self.positions.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for (a, b) in self.edges() {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra != rb {
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
        (0..n).filter(|&i| find(&mut parent, i) == i).count()
    }

    pub fn to_point_cloud(&self) -> PointCloud {
        PointCloud {
            positions: self.positions.clone(),
            fields: self.fields.clone(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct PointCloud {
    pub positions: Vec<Vec3>,
    pub fields: BTreeMap<String, Field>,
}

impl PointCloud {
    pub fn new(positions: Vec<Vec3>) -> Self {
        Self {
            positions,
            fields: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Result of [`super::io::load_shape`]: faces decide which variant a file yields.
#[derive(Debug, Clone)]
pub enum Shape {
    Mesh(TriangleMesh),
    Points(PointCloud),
}

impl Shape {
    pub fn positions(&self) -> &[Vec3] {
        match self {
            Shape::Mesh(m) => &m.positions,
            Shape::Points(p) => &p.positions,
        }
    }

    pub fn positions_mut(&mut self) -> &mut Vec<Vec3> {
        match self {
            Shape::Mesh(m) => &mut m.positions,
            Shape::Points(p) => &mut p.positions,
        }
    }

    pub fn as_mesh(&self) -> Option<&TriangleMesh> {
        match self {
            Shape::Mesh(m) => Some(m),
            Shape::Points(_) => None,
        }
    }

    pub fn into_mesh(self) -> Result<TriangleMesh, GeomError> {
        match self {
            Shape::Mesh(m) => Ok(m),
            Shape::Points(_) => Err(GeomError::NoFaces),
        }
    }
}

pub fn flatten(points: &[Vec3]) -> Vec<f64> {
    points.iter().flat_map(|p| p.to_array()).collect()
}

pub fn unflatten(data: &[f64]) -> Vec<Vec3> {
    data.chunks_exact(3).map(Vec3::from_slice).collect()
}
