//! Triangle meshes, surface addressing, tangent frames and point-set queries.

mod chamfer;
mod fps;
mod frame;
pub mod io;
mod kdtree;
mod sampling;

pub use chamfer::{chamfer, directed_nearest};
pub use fps::farthest_point_sample;
pub use frame::{local_frame, vertex_normals, FrameField, LocalFrame};
pub use kdtree::{brute_force_nearest, k_nearest_brute_force, nearest_neighbor, KdTree};
pub use sampling::{interpolate_feature, position_at, sample_surface};

use thiserror::Error;

pub type Vec3 = nalgebra::Vector3<f64>;
pub type Mat3 = nalgebra::Matrix3<f64>;

#[derive(Debug, Error)]
pub enum GeomError {
    #[error("degenerate surface: total area is {0}")]
    DegenerateSurface(f64),
    #[error("degenerate frame at face {face}")]
    DegenerateFrame { face: usize },
    #[error("face index {face} out of range ({count} faces)")]
    FaceOutOfRange { face: usize, count: usize },
    #[error("vertex index {index} out of range ({count} vertices)")]
    VertexOutOfRange { index: usize, count: usize },
    #[error("invalid barycentric weights {0:?}")]
    InvalidBarycentric([f64; 3]),
    #[error("feature dimension mismatch on face {face}: {dims:?}")]
    FeatureDimensionMismatch { face: usize, dims: [usize; 3] },
    #[error("sample count {k} out of range 1..={n}")]
    SampleCountOutOfRange { k: usize, n: usize },
    #[error("empty point cloud")]
    EmptyCloud,
    #[error("point cloud has {positions} positions but {normals} normals")]
    NormalCountMismatch { positions: usize, normals: usize },
    #[error("normal {index} is not unit length (|n| = {norm})")]
    NonUnitNormal { index: usize, norm: f64 },
}

/// Indexed triangle mesh. Faces are counter-clockwise seen from outside.
#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[usize; 3]>,
}

impl TriMesh {
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<Self, GeomError> {
        let count = vertices.len();
        for face in &faces {
            for &index in face {
                if index >= count {
                    return Err(GeomError::VertexOutOfRange { index, count });
                }
            }
        }
        Ok(Self { vertices, faces })
    }

    pub fn face_area(&self, face: usize) -> f64 {
        triangle_area(&self.vertices, self.faces[face])
    }

    pub fn total_area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    /// Checks that every undirected edge borders exactly two faces with
    /// opposite orientation.
    pub fn is_closed_manifold(&self) -> bool {
        use std::collections::HashMap;
        let mut directed: HashMap<(usize, usize), usize> = HashMap::new();
        for f in &self.faces {
            for e in 0..3 {
                let a = f[e];
                let b = f[(e + 1) % 3];
                if a == b {
                    return false;
                }
                *directed.entry((a, b)).or_insert(0) += 1;
            }
        }
        directed
            .iter()
            .all(|(&(a, b), &n)| n == 1 && directed.get(&(b, a)) == Some(&1))
    }

    /// Signed enclosed volume; positive for outward-oriented closed meshes.
    pub fn signed_volume(&self) -> f64 {
        self.faces
            .iter()
            .map(|f| {
                let [a, b, c] = f.map(|i| self.vertices[i]);
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum()
    }
}

pub(crate) fn triangle_area(vertices: &[Vec3], face: [usize; 3]) -> f64 {
    let [a, b, c] = face.map(|i| vertices[i]);
    0.5 * (b - a).cross(&(c - a)).norm()
}

/// A point on a mesh surface: a face plus barycentric weights over its corners.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SurfacePoint {
    pub face: usize,
    pub bary: [f64; 3],
}

impl SurfacePoint {
    pub fn new(face: usize, bary: [f64; 3]) -> Result<Self, GeomError> {
        let sum: f64 = bary.iter().sum();
        if bary.iter().any(|w| !(0.0..=1.0).contains(w)) || (sum - 1.0).abs() > 1e-12 {
            return Err(GeomError::InvalidBarycentric(bary));
        }
        Ok(Self { face, bary })
    }

    pub fn vertex_indices(&self, faces: &[[usize; 3]]) -> Result<[usize; 3], GeomError> {
        faces
            .get(self.face)
            .copied()
            .ok_or(GeomError::FaceOutOfRange {
                face: self.face,
                count: faces.len(),
            })
    }
}

/// Positions with optional per-point unit normals.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub positions: Vec<Vec3>,
    pub normals: Option<Vec<Vec3>>,
}

impl PointCloud {
    pub fn new(positions: Vec<Vec3>, normals: Option<Vec<Vec3>>) -> Result<Self, GeomError> {
        if let Some(n) = &normals {
            if n.len() != positions.len() {
                return Err(GeomError::NormalCountMismatch {
                    positions: positions.len(),
                    normals: n.len(),
                });
            }
            for (index, v) in n.iter().enumerate() {
                let norm = v.norm();
                if (norm - 1.0).abs() > 1e-6 {
                    return Err(GeomError::NonUnitNormal { index, norm });
                }
            }
        }
        Ok(Self { positions, normals })
    }

    pub fn from_positions(positions: Vec<Vec3>) -> Self {
        Self {
            positions,
            normals: None,
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}
