use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{GeomError, SurfacePoint, TriMesh, Vec3};

/// Draws `count` area-uniform points on the mesh surface.
pub fn sample_surface(
    mesh: &TriMesh,
    count: usize,
    seed: u64,
) -> Result<Vec<SurfacePoint>, GeomError> {
    let mut cumulative = Vec::with_capacity(mesh.faces.len());
    let mut total = 0.0;
    for f in 0..mesh.faces.len() {
        total += mesh.face_area(f);
        cumulative.push(total);
    }
    if !(total > 0.0) || !total.is_finite() {
        return Err(GeomError::DegenerateSurface(total));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(count);
    for _ in 0..count {
        let target = rng.random::<f64>() * total;
        let mut face = cumulative.partition_point(|&c| c <= target);
        // zero-area faces have the same cumulative value as their predecessor
        face = face.min(mesh.faces.len() - 1);
        let s = rng.random::<f64>().sqrt();
        let t = rng.random::<f64>();
        let bary = [1.0 - s, s * (1.0 - t), s * t];
        points.push(SurfacePoint { face, bary });
    }
    Ok(points)
}

/// Barycentric position of `sp` on the mesh given by `vertices` and `faces`.
pub fn position_at(
    vertices: &[Vec3],
    faces: &[[usize; 3]],
    sp: &SurfacePoint,
) -> Result<Vec3, GeomError> {
    let idx = sp.vertex_indices(faces)?;
    for &index in &idx {
        if index >= vertices.len() {
            return Err(GeomError::VertexOutOfRange {
                index,
                count: vertices.len(),
            });
        }
    }
    Ok(vertices[idx[0]] * sp.bary[0]
        + vertices[idx[1]] * sp.bary[1]
        + vertices[idx[2]] * sp.bary[2])
}

/// Barycentric interpolation of a per-vertex feature field.
pub fn interpolate_feature<F: AsRef<[f64]>>(
    field: &[F],
    faces: &[[usize; 3]],
    sp: &SurfacePoint,
) -> Result<Vec<f64>, GeomError> {
    let idx = sp.vertex_indices(faces)?;
    let mut rows = [&[][..]; 3];
    for (row, &index) in rows.iter_mut().zip(&idx) {
        *row = field
            .get(index)
            .ok_or(GeomError::VertexOutOfRange {
                index,
                count: field.len(),
            })?
            .as_ref();
    }
    let dims = rows.map(|r| r.len());
    if dims[0] != dims[1] || dims[0] != dims[2] {
        return Err(GeomError::FeatureDimensionMismatch {
            face: sp.face,
            dims,
        });
    }
    Ok((0..dims[0])
        .map(|c| sp.bary[0] * rows[0][c] + sp.bary[1] * rows[1][c] + sp.bary[2] * rows[2][c])
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triangle() -> TriMesh {
        TriMesh::new(
            vec![
                Vec3::new(0.0, 0.0, 0.0),
                Vec3::new(3.0, 0.0, 0.0),
                Vec3::new(0.0, 3.0, 0.0),
            ],
            vec![[0, 1, 2]],
        )
        .unwrap()
    }

    #[test]
    fn samples_stay_inside_single_triangle() {
        let pts = sample_surface(&triangle(), 3, 11).unwrap();
        assert_eq!(pts.len(), 3);
        for p in pts {
            assert_eq!(p.face, 0);
            assert!(p.bary.iter().all(|&w| (0.0..=1.0).contains(&w)));
            assert!((p.bary.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn sampling_is_area_proportional() {
        // areas 4.5 and 0.5
        let mesh = TriMesh::new(
            vec![
                Vec3::new(0.0, 0.0, 0.0),
                Vec3::new(3.0, 0.0, 0.0),
                Vec3::new(0.0, 3.0, 0.0),
                Vec3::new(10.0, 0.0, 0.0),
                Vec3::new(11.0, 0.0, 0.0),
                Vec3::new(10.0, 1.0, 0.0),
            ],
            vec![[0, 1, 2], [3, 4, 5]],
        )
        .unwrap();
        let pts = sample_surface(&mesh, 10_000, 5).unwrap();
        let big = pts.iter().filter(|p| p.face == 0).count();
        assert!((8700..=9300).contains(&big), "{big}");
    }

    #[test]
    fn sampling_is_deterministic() {
        let a = sample_surface(&triangle(), 50, 42).unwrap();
        let b = sample_surface(&triangle(), 50, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_area_mesh_is_rejected() {
        let mesh = TriMesh::new(
            vec![
                Vec3::zeros(),
                Vec3::new(1.0, 0.0, 0.0),
                Vec3::new(2.0, 0.0, 0.0),
            ],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let err = sample_surface(&mesh, 3, 0).unwrap_err();
        assert!(err.to_string().contains("degenerate surface"));
    }

    #[test]
    fn position_examples() {
        let m = triangle();
        let at = |b| position_at(&m.vertices, &m.faces, &SurfacePoint::new(0, b).unwrap()).unwrap();
        assert_eq!(at([1.0, 0.0, 0.0]), Vec3::zeros());
        let c = at([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]);
        assert!((c - Vec3::new(1.0, 1.0, 0.0)).norm() < 1e-15);
        assert_eq!(at([0.5, 0.25, 0.25]), Vec3::new(0.75, 0.75, 0.0));
        assert_eq!(at([0.25, 0.5, 0.25]), Vec3::new(1.5, 0.75, 0.0));
    }

    #[test]
    fn interpolation_examples() {
        let faces = [[0, 1, 2]];
        let field = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 0.0]];
        let sp = SurfacePoint::new(0, [0.0, 1.0, 0.0]).unwrap();
        assert_eq!(
            interpolate_feature(&field, &faces, &sp).unwrap(),
            vec![0.0, 1.0]
        );
        let sp = SurfacePoint::new(0, [0.5, 0.25, 0.25]).unwrap();
        assert_eq!(
            interpolate_feature(&field, &faces, &sp).unwrap(),
            vec![0.5, 0.25]
        );

        let ragged = vec![vec![1.0, 0.0], vec![0.0], vec![0.0, 0.0]];
        assert!(matches!(
            interpolate_feature(&ragged, &faces, &sp),
            Err(GeomError::FeatureDimensionMismatch { .. })
        ));
    }

    #[test]
    fn shared_edge_agrees_through_both_faces() {
        // quad split along the 1-2 diagonal
        let faces = [[0, 1, 2], [2, 1, 3]];
        let field = vec![
            vec![0.3, -1.0],
            vec![2.0, 0.5],
            vec![-0.7, 4.0],
            vec![9.0, 9.0],
        ];
        let t = 0.37;
        let a = SurfacePoint::new(0, [0.0, 1.0 - t, t]).unwrap();
        let b = SurfacePoint::new(1, [t, 1.0 - t, 0.0]).unwrap();
        let fa = interpolate_feature(&field, &faces, &a).unwrap();
        let fb = interpolate_feature(&field, &faces, &b).unwrap();
        for (x, y) in fa.iter().zip(&fb) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_barycentric_rejected() {
        assert!(SurfacePoint::new(0, [0.5, 0.5, 0.5]).is_err());
        assert!(SurfacePoint::new(0, [1.5, -0.5, 0.0]).is_err());
    }
}
