use super::{GeomError, Mat3, SurfacePoint, Vec3};

/// Orthonormal tangent frame anchored on a posed body surface point.
///
/// Columns of `rotation` are (tangent, bitangent, normal).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalFrame {
    pub rotation: Mat3,
    pub origin: Vec3,
}

impl LocalFrame {
    pub fn to_world(&self, local: &Vec3) -> Vec3 {
        self.rotation * local + self.origin
    }
}

/// Area-weighted vertex normals. Isolated vertices get a zero normal.
pub fn vertex_normals(vertices: &[Vec3], faces: &[[usize; 3]]) -> Vec<Vec3> {
    let mut normals = vec![Vec3::zeros(); vertices.len()];
    for f in faces {
        let [a, b, c] = f.map(|i| vertices[i]);
        let n = (b - a).cross(&(c - a));
        for &i in f {
            normals[i] += n;
        }
    }
    for n in &mut normals {
        let len = n.norm();
        if len > 0.0 {
            *n /= len;
        }
    }
    normals
}

/// Posed mesh with cached vertex normals, for evaluating many frames.
#[derive(Debug, Clone)]
pub struct FrameField<'a> {
    vertices: &'a [Vec3],
    faces: &'a [[usize; 3]],
    normals: Vec<Vec3>,
}

impl<'a> FrameField<'a> {
    pub fn new(vertices: &'a [Vec3], faces: &'a [[usize; 3]]) -> Self {
        Self {
            vertices,
            faces,
            normals: vertex_normals(vertices, faces),
        }
    }

    pub fn normals(&self) -> &[Vec3] {
        &self.normals
    }

    pub fn frame(&self, sp: &SurfacePoint) -> Result<LocalFrame, GeomError> {
        let idx = sp.vertex_indices(self.faces)?;
        let [a, b, c] = idx.map(|i| self.vertices[i]);
        let origin = a * sp.bary[0] + b * sp.bary[1] + c * sp.bary[2];

        let degenerate = GeomError::DegenerateFrame { face: sp.face };
        let n = idx
            .iter()
            .zip(&sp.bary)
            .fold(Vec3::zeros(), |acc, (&i, &w)| acc + self.normals[i] * w);
        let n_len = n.norm();
        if !(n_len > 1e-12) {
            return Err(degenerate);
        }
        let normal = n / n_len;

        let edge = b - a;
        let tangent = edge - normal * edge.dot(&normal);
        let t_len = tangent.norm();
        if !(t_len > 1e-12 * edge.norm().max(f64::MIN_POSITIVE))
            || (c - a).cross(&edge).norm() == 0.0
        {
            return Err(degenerate);
        }
        let tangent = tangent / t_len;
        let bitangent = normal.cross(&tangent);
        Ok(LocalFrame {
            rotation: Mat3::from_columns(&[tangent, bitangent, normal]),
            origin,
        })
    }
}

/// Local frame at `sp` on the posed mesh.
pub fn local_frame(
    posed_vertices: &[Vec3],
    faces: &[[usize; 3]],
    sp: &SurfacePoint,
) -> Result<LocalFrame, GeomError> {
    FrameField::new(posed_vertices, faces).frame(sp)
}
