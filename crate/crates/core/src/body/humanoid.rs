use serde::{Deserialize, Serialize};

use super::{BodyError, Skeleton, TemplateBody, UvAtlas};
use crate::geom::{TriMesh, Vec3};

pub const JOINT_NAMES: [&str; 16] = [
    "pelvis",
    "spine",
    "chest",
    "head",
    "l_shoulder",
    "l_elbow",
    "l_wrist",
    "r_shoulder",
    "r_elbow",
    "r_wrist",
    "l_hip",
    "l_knee",
    "l_ankle",
    "r_hip",
    "r_knee",
    "r_ankle",
];

const PARENTS: [Option<usize>; 16] = [
    None,
    Some(0),
    Some(1),
    Some(2),
    Some(2),
    Some(4),
    Some(5),
    Some(2),
    Some(7),
    Some(8),
    Some(0),
    Some(10),
    Some(11),
    Some(0),
    Some(13),
    Some(14),
];

/// Rest joint positions for a 1.7 m figure in T-pose (y up, z forward, +x left).
const JOINTS: [[f64; 3]; 16] = [
    [0.0, 0.95, 0.0],
    [0.0, 1.10, 0.0],
    [0.0, 1.28, 0.0],
    [0.0, 1.48, 0.0],
    [0.18, 1.42, 0.0],
    [0.46, 1.42, 0.0],
    [0.72, 1.42, 0.0],
    [-0.18, 1.42, 0.0],
    [-0.46, 1.42, 0.0],
    [-0.72, 1.42, 0.0],
    [0.09, 0.92, 0.0],
    [0.09, 0.52, 0.0],
    [0.09, 0.10, 0.0],
    [-0.09, 0.92, 0.0],
    [-0.09, 0.52, 0.0],
    [-0.09, 0.10, 0.0],
];

/// One capsule per joint: (start, end, radii at start, radii at end, child joint at the tip).
struct Part {
    start: [f64; 3],
    end: [f64; 3],
    r0: [f64; 2],
    r1: [f64; 2],
    child: Option<usize>,
}

const fn part(
    start: [f64; 3],
    end: [f64; 3],
    r0: [f64; 2],
    r1: [f64; 2],
    child: Option<usize>,
) -> Part {
    Part {
        start,
        end,
        r0,
        r1,
        child,
    }
}

const PARTS: [Part; 16] = [
    part(
        [0.0, 0.84, 0.0],
        [0.0, 1.10, 0.0],
        [0.15, 0.11],
        [0.14, 0.10],
        Some(1),
    ),
    part(
        [0.0, 1.10, 0.0],
        [0.0, 1.28, 0.0],
        [0.14, 0.10],
        [0.16, 0.105],
        Some(2),
    ),
    part(
        [0.0, 1.28, 0.0],
        [0.0, 1.46, 0.0],
        [0.165, 0.105],
        [0.15, 0.10],
        Some(3),
    ),
    part(
        [0.0, 1.48, 0.0],
        [0.0, 1.70, 0.0],
        [0.055, 0.055],
        [0.095, 0.10],
        None,
    ),
    part(
        [0.18, 1.42, 0.0],
        [0.46, 1.42, 0.0],
        [0.055, 0.055],
        [0.045, 0.045],
        Some(5),
    ),
    part(
        [0.46, 1.42, 0.0],
        [0.72, 1.42, 0.0],
        [0.043, 0.043],
        [0.034, 0.034],
        Some(6),
    ),
    part(
        [0.72, 1.42, 0.0],
        [0.88, 1.42, 0.0],
        [0.035, 0.022],
        [0.04, 0.018],
        None,
    ),
    part(
        [-0.18, 1.42, 0.0],
        [-0.46, 1.42, 0.0],
        [0.055, 0.055],
        [0.045, 0.045],
        Some(8),
    ),
    part(
        [-0.46, 1.42, 0.0],
        [-0.72, 1.42, 0.0],
        [0.043, 0.043],
        [0.034, 0.034],
        Some(9),
    ),
    part(
        [-0.72, 1.42, 0.0],
        [-0.88, 1.42, 0.0],
        [0.035, 0.022],
        [0.04, 0.018],
        None,
    ),
    part(
        [0.09, 0.92, 0.0],
        [0.09, 0.52, 0.0],
        [0.08, 0.08],
        [0.055, 0.055],
        Some(11),
    ),
    part(
        [0.09, 0.52, 0.0],
        [0.09, 0.10, 0.0],
        [0.052, 0.052],
        [0.038, 0.038],
        Some(12),
    ),
    part(
        [0.09, 0.08, -0.03],
        [0.09, 0.04, 0.17],
        [0.04, 0.035],
        [0.038, 0.025],
        None,
    ),
    part(
        [-0.09, 0.92, 0.0],
        [-0.09, 0.52, 0.0],
        [0.08, 0.08],
        [0.055, 0.055],
        Some(14),
    ),
    part(
        [-0.09, 0.52, 0.0],
        [-0.09, 0.10, 0.0],
        [0.052, 0.052],
        [0.038, 0.038],
        Some(15),
    ),
    part(
        [-0.09, 0.08, -0.03],
        [-0.09, 0.04, 0.17],
        [0.04, 0.035],
        [0.038, 0.025],
        None,
    ),
];

/// Resolution and proportions of the procedural humanoid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanoidConfig {
    /// Vertices around each limb cross-section, 3..=64.
    pub around: usize,
    /// Body rings along each limb between the end caps, 2..=64.
    pub rings: usize,
    /// Standing height in meters, 0.5..=2.5.
    pub height: f64,
    /// Multiplier on limb and torso radii, 0.5..=2.0.
    pub girth: f64,
    /// Fraction of a limb's length over which skinning blends into the
    /// neighbouring joint, (0, 0.5].
    pub blend: f64,
}

impl Default for HumanoidConfig {
    fn default() -> Self {
        Self {
            around: 12,
            rings: 3,
            height: 1.7,
            girth: 1.0,
            blend: 0.35,
        }
    }
}

impl HumanoidConfig {
    fn validate(&self) -> Result<(), BodyError> {
        let bad = |m: &str| Err(BodyError::Config(m.to_string()));
        if !(3..=64).contains(&self.around) {
            return bad("around must be in 3..=64");
        }
        if !(2..=64).contains(&self.rings) {
            return bad("rings must be in 2..=64");
        }
        if !(0.5..=2.5).contains(&self.height) {
            return bad("height must be in 0.5..=2.5 m");
        }
        if !(0.5..=2.0).contains(&self.girth) {
            return bad("girth must be in 0.5..=2.0");
        }
        if !(self.blend > 0.0 && self.blend <= 0.5) {
            return bad("blend must be in (0, 0.5]");
        }
        Ok(())
    }

    pub fn vertex_count(&self) -> usize {
        PARTS.len() * (self.around * (self.rings + 2) + 2)
    }
}

fn falloff(distance: f64, length: f64) -> f64 {
    let t = (1.0 - distance / length).clamp(0.0, 1.0);
    0.5 * t * t
}

/// Builds a watertight T-pose humanoid made of one closed capsule per joint.
///
/// Each capsule is a closed, outward-oriented manifold; capsules overlap at
/// the joints. A seamed UV atlas packs one chart per capsule into a 4x4 grid,
/// with the cylinder wrap and the cap fans as seams.
pub fn build_humanoid(config: &HumanoidConfig) -> Result<TemplateBody, BodyError> {
    config.validate()?;
    let scale = config.height / 1.7;
    let s3 = |p: [f64; 3]| Vec3::new(p[0], p[1], p[2]) * scale;

    let joints: Vec<Vec3> = JOINTS.iter().map(|&p| s3(p)).collect();
    let offsets = (0..joints.len())
        .map(|j| match PARENTS[j] {
            Some(p) => joints[j] - joints[p],
            None => joints[j],
        })
        .collect();
    let skeleton = Skeleton::new(
        JOINT_NAMES.iter().map(|s| s.to_string()).collect(),
        PARENTS.to_vec(),
        offsets,
    )?;

    let around = config.around;
    let rings = config.rings;
    let joint_count = JOINT_NAMES.len();
    let mut vertices = Vec::with_capacity(config.vertex_count());
    let mut skinning = Vec::with_capacity(config.vertex_count());
    let mut faces = Vec::new();
    let mut uvs: Vec<[f64; 2]> = Vec::new();
    let mut face_uvs = Vec::new();

    for (j, part) in PARTS.iter().enumerate() {
        let a = s3(part.start);
        let b = s3(part.end);
        let len = (b - a).norm();
        let dir = (b - a) / len;
        let seed_axis = if dir.x.abs() > 0.9 {
            Vec3::z()
        } else {
            Vec3::x()
        };
        let e1 = (seed_axis - dir * seed_axis.dot(&dir)).normalize();
        let e2 = dir.cross(&e1);
        let radii = |t: f64| {
            let r = [
                part.r0[0] + (part.r1[0] - part.r0[0]) * t,
                part.r0[1] + (part.r1[1] - part.r0[1]) * t,
            ];
            r.map(|x| x * scale * config.girth)
        };
        let cap0 = 0.6 * radii(0.0).iter().sum::<f64>() / 2.0;
        let cap1 = 0.6 * radii(1.0).iter().sum::<f64>() / 2.0;

        // (axial position, radius factor, interpolation parameter) per ring
        let mut profile: Vec<(f64, f64, f64)> = vec![(-0.7 * cap0, 0.72, 0.0)];
        for k in 0..rings {
            let t = k as f64 / (rings - 1) as f64;
            profile.push((t * len, 1.0, t));
        }
        profile.push((len + 0.7 * cap1, 0.72, 1.0));
        let rows = profile.len();

        let parent = PARENTS[j];
        let blend_len = config.blend * len;
        let weights_at = |s: f64| {
            let mut w = vec![0.0; joint_count];
            let wp = if parent.is_some() {
                falloff(s.max(0.0), blend_len)
            } else {
                0.0
            };
            let wc = if part.child.is_some() {
                falloff((len - s).max(0.0), blend_len)
            } else {
                0.0
            };
            if let Some(p) = parent {
                w[p] += wp;
            }
            if let Some(c) = part.child {
                w[c] += wc;
            }
            w[j] += 1.0 - wp - wc;
            w
        };

        let base = vertices.len();
        for &(s, rho, t) in &profile {
            let [rx, ry] = radii(t);
            for i in 0..around {
                let theta = std::f64::consts::TAU * i as f64 / around as f64;
                let p = a + dir * s + e1 * (theta.cos() * rx * rho) + e2 * (theta.sin() * ry * rho);
                vertices.push(p);
                skinning.push(weights_at(s));
            }
        }
        let pole0 = vertices.len();
        vertices.push(a - dir * cap0);
        skinning.push(weights_at(-cap0));
        let pole1 = vertices.len();
        vertices.push(b + dir * cap1);
        skinning.push(weights_at(len + cap1));

        // chart for this capsule
        let tile = (j % 4, j / 4);
        let margin = 0.01;
        let width = 0.25 - 2.0 * margin;
        let chart = |u: f64, v: f64| {
            [
                tile.0 as f64 * 0.25 + margin + u * width,
                tile.1 as f64 * 0.25 + margin + v * width,
            ]
        };
        let uv_base = uvs.len();
        let v_of = |row: usize| (row + 1) as f64 / (rows + 1) as f64;
        for row in 0..rows {
            for i in 0..=around {
                uvs.push(chart(i as f64 / around as f64, v_of(row)));
            }
        }
        let uv_pole0 = uvs.len();
        for i in 0..around {
            uvs.push(chart((i as f64 + 0.5) / around as f64, 0.0));
        }
        let uv_pole1 = uvs.len();
        for i in 0..around {
            uvs.push(chart((i as f64 + 0.5) / around as f64, 1.0));
        }

        let vid = |row: usize, i: usize| base + row * around + (i % around);
        let tid = |row: usize, i: usize| uv_base + row * (around + 1) + i;
        for row in 0..rows - 1 {
            for i in 0..around {
                faces.push([vid(row, i), vid(row, i + 1), vid(row + 1, i + 1)]);
                face_uvs.push([tid(row, i), tid(row, i + 1), tid(row + 1, i + 1)]);
                faces.push([vid(row, i), vid(row + 1, i + 1), vid(row + 1, i)]);
                face_uvs.push([tid(row, i), tid(row + 1, i + 1), tid(row + 1, i)]);
            }
        }
        for i in 0..around {
            faces.push([pole0, vid(0, i + 1), vid(0, i)]);
            face_uvs.push([uv_pole0 + i, tid(0, i + 1), tid(0, i)]);
            faces.push([pole1, vid(rows - 1, i), vid(rows - 1, i + 1)]);
            face_uvs.push([uv_pole1 + i, tid(rows - 1, i), tid(rows - 1, i + 1)]);
        }
    }

    let mesh = TriMesh::new(vertices, faces)?;
    TemplateBody::new(mesh, skeleton, skinning, Some(UvAtlas { uvs, face_uvs }))
}
