//! Articulated unclothed body: skeleton, poses, linear blend skinning, and
//! the procedural humanoid used in place of a licensed parametric body.

mod humanoid;
mod rigged;

pub use humanoid::{build_humanoid, HumanoidConfig, JOINT_NAMES};
pub use rigged::{load_rigged_mesh, save_rigged_mesh, SkinningFile};

use nalgebra::Rotation3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::io::FormatError;
use crate::geom::{vertex_normals, GeomError, Mat3, TriMesh, Vec3};

#[derive(Debug, Error)]
pub enum BodyError {
    #[error("pose has {got} joints, skeleton has {expected}")]
    JointCountMismatch { expected: usize, got: usize },
    #[error("skinning row {row} sums to {sum}")]
    BadWeightRow { row: usize, sum: f64 },
    #[error("skinning has {got} rows for {expected} vertices")]
    WeightRowCount { expected: usize, got: usize },
    #[error("invalid skeleton: {0}")]
    Skeleton(String),
    #[error("invalid humanoid config: {0}")]
    Config(String),
    #[error("{path}: {message}")]
    Json { path: String, message: String },
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Geom(#[from] GeomError),
}

/// Joint hierarchy. Parents always precede their children.
#[derive(Debug, Clone, PartialEq)]
pub struct Skeleton {
    pub names: Vec<String>,
    pub parents: Vec<Option<usize>>,
    /// Rest-pose offset from the parent joint (absolute position for roots).
    pub offsets: Vec<Vec3>,
}

impl Skeleton {
    pub fn new(
        names: Vec<String>,
        parents: Vec<Option<usize>>,
        offsets: Vec<Vec3>,
    ) -> Result<Self, BodyError> {
        if names.len() != parents.len() || names.len() != offsets.len() {
            return Err(BodyError::Skeleton(
                "names, parents and offsets differ in length".into(),
            ));
        }
        if names.is_empty() {
            return Err(BodyError::Skeleton("no joints".into()));
        }
        for (j, p) in parents.iter().enumerate() {
            if let Some(p) = p {
                if *p >= j {
                    return Err(BodyError::Skeleton(format!(
                        "joint {j} has parent {p} that does not precede it"
                    )));
                }
            }
        }
        Ok(Self {
            names,
            parents,
            offsets,
        })
    }

    pub fn joint_count(&self) -> usize {
        self.names.len()
    }

    pub fn rest_positions(&self) -> Vec<Vec3> {
        let mut out: Vec<Vec3> = Vec::with_capacity(self.offsets.len());
        for (j, off) in self.offsets.iter().enumerate() {
            let p = match self.parents[j] {
                Some(p) => out[p] + off,
                None => *off,
            };
            out.push(p);
        }
        out
    }
}

/// Texture atlas with per-face-corner coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct UvAtlas {
    pub uvs: Vec<[f64; 2]>,
    pub face_uvs: Vec<[usize; 3]>,
}

/// Rest-pose body: the constant domain of every surface feature.
#[derive(Debug, Clone, PartialEq)]
pub struct TemplateBody {
    pub mesh: TriMesh,
    pub normals: Vec<Vec3>,
    pub skeleton: Skeleton,
    /// `N x J` skinning weights, rows sum to one.
    pub skinning: Vec<Vec<f64>>,
    pub uv: Option<UvAtlas>,
}

impl TemplateBody {
    pub fn new(
        mesh: TriMesh,
        skeleton: Skeleton,
        skinning: Vec<Vec<f64>>,
        uv: Option<UvAtlas>,
    ) -> Result<Self, BodyError> {
        if skinning.len() != mesh.vertices.len() {
            return Err(BodyError::WeightRowCount {
                expected: mesh.vertices.len(),
                got: skinning.len(),
            });
        }
        let joints = skeleton.joint_count();
        for (row, w) in skinning.iter().enumerate() {
            let sum: f64 = w.iter().sum();
            if w.len() != joints || w.iter().any(|&x| x < 0.0) || (sum - 1.0).abs() > 1e-9 {
                return Err(BodyError::BadWeightRow { row, sum });
            }
        }
        if let Some(uv) = &uv {
            if uv.face_uvs.len() != mesh.faces.len()
                || uv.face_uvs.iter().flatten().any(|&i| i >= uv.uvs.len())
            {
                return Err(BodyError::Skeleton(
                    "uv atlas does not match the mesh faces".into(),
                ));
            }
        }
        let normals = vertex_normals(&mesh.vertices, &mesh.faces);
        Ok(Self {
            mesh,
            normals,
            skeleton,
            skinning,
            uv,
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.mesh.vertices.len()
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.mesh.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.mesh.faces
    }
}

/// Per-joint local rotations plus a global root translation.
#[derive(Debug, Clone, PartialEq)]
pub struct Pose {
    pub rotations: Vec<Mat3>,
    pub translation: Vec3,
}

impl Pose {
    pub fn identity(joints: usize) -> Self {
        Self {
            rotations: vec![Mat3::identity(); joints],
            translation: Vec3::zeros(),
        }
    }

    pub fn from_axis_angles(axis_angles: &[Vec3], translation: Vec3) -> Self {
        Self {
            rotations: axis_angles
                .iter()
                .map(|a| *Rotation3::from_scaled_axis(*a).matrix())
                .collect(),
            translation,
        }
    }

    pub fn axis_angles(&self) -> Vec<Vec3> {
        self.rotations
            .iter()
            .map(|r| Rotation3::from_matrix_unchecked(*r).scaled_axis())
            .collect()
    }

    /// The pose whose skinned output equals `q * lbs(self) + s`.
    pub fn with_global_motion(&self, q: &Mat3, s: &Vec3, root_rest: &Vec3) -> Self {
        let mut out = self.clone();
        out.rotations[0] = q * self.rotations[0];
        out.translation = q * (self.translation + root_rest) - root_rest + s;
        out
    }
}

/// JSON interchange form of a pose: axis-angle per joint, parent-to-child order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseParams {
    pub joint_rotations: Vec<[f64; 3]>,
    pub root_translation: [f64; 3],
}

impl PoseParams {
    pub fn identity(joints: usize) -> Self {
        Self {
            joint_rotations: vec![[0.0; 3]; joints],
            root_translation: [0.0; 3],
        }
    }

    pub fn to_pose(&self) -> Pose {
        let aa: Vec<Vec3> = self
            .joint_rotations
            .iter()
            .map(|a| Vec3::from(*a))
            .collect();
        Pose::from_axis_angles(&aa, Vec3::from(self.root_translation))
    }
}

/// A skinned body: posed vertices sharing the template's faces.
#[derive(Debug, Clone, PartialEq)]
pub struct PosedBody {
    pub vertices: Vec<Vec3>,
}

/// Linear blend skinning of the template under `pose`.
pub fn lbs_pose(body: &TemplateBody, pose: &Pose) -> Result<PosedBody, BodyError> {
    let skel = &body.skeleton;
    let joints = skel.joint_count();
    if pose.rotations.len() != joints {
        return Err(BodyError::JointCountMismatch {
            expected: joints,
            got: pose.rotations.len(),
        });
    }
    let rest = skel.rest_positions();
    let mut world_r: Vec<Mat3> = Vec::with_capacity(joints);
    let mut world_t: Vec<Vec3> = Vec::with_capacity(joints);
    for j in 0..joints {
        let (r, t) = match skel.parents[j] {
            Some(p) => (
                world_r[p] * pose.rotations[j],
                world_t[p] + world_r[p] * skel.offsets[j],
            ),
            None => (pose.rotations[j], skel.offsets[j]),
        };
        world_r.push(r);
        world_t.push(t);
    }
    let skin_t: Vec<Vec3> = (0..joints)
        .map(|j| world_t[j] - world_r[j] * rest[j])
        .collect();

    // written as v + sum w (A v - v) so the identity pose reproduces v bit for bit
    let vertices = body
        .vertices()
        .iter()
        .zip(&body.skinning)
        .map(|(v, w)| {
            let mut delta = Vec3::zeros();
            for (j, &wj) in w.iter().enumerate() {
                if wj != 0.0 {
                    delta += (world_r[j] * v + skin_t[j] - v) * wj;
                }
            }
            v + delta + pose.translation
        })
        .collect();
    Ok(PosedBody { vertices })
}
