use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::body::{Pose, TemplateBody};
use crate::geom::{interpolate_feature, SurfacePoint};
use crate::model::{uv_baseline_features, ClosetModel, FeatureGrid, ModelError};

/// An edge with a face on each side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SharedEdge {
    pub vertices: [usize; 2],
    pub faces: [usize; 2],
    /// The two faces give the edge different UV coordinates.
    pub seam: bool,
}

/// Every interior edge of the body, in order of first appearance.
pub fn shared_edges(body: &TemplateBody) -> Vec<SharedEdge> {
    let mut first: HashMap<[usize; 2], usize> = HashMap::new();
    let mut out = Vec::new();
    for (f, face) in body.faces().iter().enumerate() {
        for k in 0..3 {
            let (a, b) = (face[k], face[(k + 1) % 3]);
            let key = [a.min(b), a.max(b)];
            match first.get(&key) {
                Some(&g) => {
                    let seam = body.uv.as_ref().is_some_and(|atlas| {
                        key.iter().any(|&v| {
                            let uv_in = |face: usize| {
                                let c = body.faces()[face]
                                    .iter()
                                    .position(|&x| x == v)
                                    .expect("edge vertex in face");
                                atlas.uvs[atlas.face_uvs[face][c]]
                            };
                            uv_in(f) != uv_in(g)
                        })
                    });
                    out.push(SharedEdge {
                        vertices: key,
                        faces: [g, f],
                        seam,
                    });
                }
                None => {
                    first.insert(key, f);
                }
            }
        }
    }
    out
}

/// The same point on `edge` expressed through each adjacent face.
fn edge_points(
    body: &TemplateBody,
    edge: &SharedEdge,
    t: f64,
) -> Result<[SurfacePoint; 2], HarnessError> {
    let [i, j] = edge.vertices;
    let through = |face: usize| {
        let bary = body.faces()[face].map(|v| {
            if v == i {
                1.0 - t
            } else if v == j {
                t
            } else {
                0.0
            }
        });
        SurfacePoint::new(face, bary)
    };
    Ok([through(edge.faces[0])?, through(edge.faces[1])?])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeamReport {
    pub samples: usize,
    pub seam_samples: usize,
    /// Largest disagreement of interpolated vertex features between the two
    /// faces of an edge.
    pub surface_max_gap: f64,
    /// Largest disagreement of UV-grid features off the seams.
    pub uv_interior_max_gap: f64,
    /// Largest and mean disagreement of UV-grid features on seam edges.
    pub uv_seam_max_jump: f64,
    pub uv_seam_mean_jump: f64,
    /// Largest disagreement of a model's local displacement, if one was given.
    pub model_max_gap: Option<f64>,
}

/// Compares feature lookups through the two faces of `samples` random
/// shared-edge points. Surface features are random per-vertex vectors; the
/// UV grid stores each texel's own center coordinates, so a seam jump equals
/// the distance between the two UV images of the point.
pub fn seam_study(
    body: &TemplateBody,
    samples: usize,
    grid_resolution: usize,
    seed: u64,
    model: Option<(&ClosetModel, &str)>,
) -> Result<SeamReport, HarnessError> {
    let edges = shared_edges(body);
    if edges.is_empty() || samples == 0 {
        return Err(HarnessError::Config(
            "seam study needs shared edges and samples".into(),
        ));
    }
    let atlas = body.uv.as_ref().ok_or(ModelError::MissingUv(0))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let features: Vec<[f64; 4]> = (0..body.vertex_count())
        .map(|_| std::array::from_fn(|_| rng.random_range(-1.0..1.0)))
        .collect();
    let res = grid_resolution;
    let mut grid = FeatureGrid::new(res, 2);
    for i in 0..res {
        for j in 0..res {
            grid.texel_mut(i, j)
                .copy_from_slice(&[(i as f64 + 0.5) / res as f64, (j as f64 + 0.5) / res as f64]);
        }
    }

    let gap = |a: &[f64], b: &[f64]| {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    };
    let mut report = SeamReport {
        samples,
        seam_samples: 0,
        surface_max_gap: 0.0,
        uv_interior_max_gap: 0.0,
        uv_seam_max_jump: 0.0,
        uv_seam_mean_jump: 0.0,
        model_max_gap: None,
    };
    let (mut side_a, mut side_b) = (Vec::with_capacity(samples), Vec::with_capacity(samples));
    for _ in 0..samples {
        let edge = &edges[rng.random_range(0..edges.len())];
        let [a, b] = edge_points(body, edge, rng.random_range(0.0..=1.0))?;
        let fa = interpolate_feature(&features, body.faces(), &a)?;
        let fb = interpolate_feature(&features, body.faces(), &b)?;
        report.surface_max_gap = report.surface_max_gap.max(gap(&fa, &fb));
        let d = gap(
            &uv_baseline_features(atlas, &grid, &a)?,
            &uv_baseline_features(atlas, &grid, &b)?,
        );
        if edge.seam {
            report.seam_samples += 1;
            report.uv_seam_max_jump = report.uv_seam_max_jump.max(d);
            report.uv_seam_mean_jump += d;
        } else {
            report.uv_interior_max_gap = report.uv_interior_max_gap.max(d);
        }
        side_a.push(a);
        side_b.push(b);
    }
    if report.seam_samples > 0 {
        report.uv_seam_mean_jump /= report.seam_samples as f64;
    }
    if let Some((model, outfit)) = model {
        let pose = Pose::identity(body.skeleton.joint_count());
        let ra = model.forward(&pose, outfit, &side_a)?;
        let rb = model.forward(&pose, outfit, &side_b)?;
        report.model_max_gap = Some(
            ra.iter()
                .zip(&rb)
                .map(|(x, y)| (x.r() - y.r()).norm())
                .fold(0.0, f64::max),
        );
    }
    Ok(report)
}
