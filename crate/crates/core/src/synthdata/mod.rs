//! Procedural clothed scans with a known split into a pose-invariant garment
//! layer and pose-dependent wrinkles.
//!
//! A scan point is the posed body surface point pushed along its normal by
//! `base(p_t) + wrinkle(p_t, pose)`, where `p_t` is the same point on the
//! rest-pose template. Wrinkles are linear in the joint angles and poses are
//! drawn in sign-flipped pairs, so wrinkles average to exactly zero over
//! the pose set.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::body::{
    lbs_pose, load_rigged_mesh, save_rigged_mesh, BodyError, Pose, PoseParams, TemplateBody,
};
use crate::geom::io::{read_ply, write_file, write_ply, FormatError};
use crate::geom::{
    position_at, sample_surface, vertex_normals, FrameField, GeomError, PointCloud, SurfacePoint,
    Vec3,
};
use crate::net::fnv1a;

const SPLIT_SALT: u64 = 0x5bd1_e995_5bd1_e995;
const JITTER_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("invalid generator settings: {0}")]
    Config(String),
    #[error("json error in {path}: {message}")]
    Json { path: String, message: String },
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error(transparent)]
    Body(#[from] BodyError),
}

/// Gaussian bump of the base offset, centered in template coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Blob {
    pub center: [f64; 3],
    pub radius: f64,
    pub amplitude: f64,
}

/// One joint-angle component driving a ridge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    pub joint: usize,
    pub axis: usize,
    pub gain: f64,
}

/// Sinusoidal ridge pattern confined to a Gaussian envelope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ridge {
    pub direction: [f64; 3],
    /// Cycles per meter along `direction`.
    pub frequency: f64,
    pub phase: f64,
    pub amplitude: f64,
    pub center: [f64; 3],
    pub radius: f64,
    pub couplings: Vec<Coupling>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutfitSpec {
    pub id: String,
    /// Offset everywhere on the body.
    pub floor: f64,
    pub blobs: Vec<Blob>,
    pub ridges: Vec<Ridge>,
    pub seed: u64,
}

fn gauss(p: &Vec3, center: &[f64; 3], radius: f64) -> f64 {
    (-(p - Vec3::from(*center)).norm_squared() / (2.0 * radius * radius)).exp()
}

impl OutfitSpec {
    /// Loose torso-and-thigh garment with pose-driven ridges on the torso,
    /// skirt and sleeves, sized for the built-in 1.7 m humanoid.
    pub fn loose(id: &str, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a(id.as_bytes()));
        let mut jitter = |x: f64| x * rng.random_range(0.9..1.1);
        let c = |j: usize, a: usize, g: f64| Coupling {
            joint: j,
            axis: a,
            gain: g,
        };
        Self {
            id: id.to_string(),
            floor: 0.008,
            blobs: vec![
                Blob {
                    center: [0.0, 1.15, 0.0],
                    radius: jitter(0.16),
                    amplitude: jitter(0.035),
                },
                Blob {
                    center: [0.0, 0.8, 0.0],
                    radius: jitter(0.18),
                    amplitude: jitter(0.045),
                },
                Blob {
                    center: [0.0, 0.55, 0.0],
                    radius: jitter(0.15),
                    amplitude: jitter(0.03),
                },
            ],
            ridges: vec![
                Ridge {
                    direction: [0.0, 1.0, 0.0],
                    frequency: jitter(2.7),
                    phase: 0.3,
                    amplitude: 0.018,
                    center: [0.0, 1.05, 0.0],
                    radius: 0.2,
                    couplings: vec![c(1, 0, 1.0), c(2, 2, 0.8), c(4, 2, 0.5), c(5, 2, -0.5)],
                },
                Ridge {
                    direction: [1.0, 0.0, 0.3],
                    frequency: jitter(2.1),
                    phase: 1.1,
                    amplitude: 0.02,
                    center: [0.0, 0.7, 0.0],
                    radius: 0.2,
                    couplings: vec![c(10, 0, 1.0), c(13, 0, -1.0), c(11, 0, 0.5), c(14, 0, -0.5)],
                },
                Ridge {
                    direction: [1.0, 0.0, 0.0],
                    frequency: jitter(3.6),
                    phase: 2.0,
                    amplitude: 0.012,
                    center: [0.0, 1.3, 0.0],
                    radius: 0.3,
                    couplings: vec![c(4, 2, 1.0), c(7, 2, -1.0), c(5, 1, 0.6), c(8, 1, 0.6)],
                },
            ],
            seed,
        }
    }

    /// Garment with no offset at all.
    pub fn bare(id: &str) -> Self {
        Self {
            id: id.to_string(),
            floor: 0.0,
            blobs: Vec::new(),
            ridges: Vec::new(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let amps = std::iter::once(self.floor)
            .chain(self.blobs.iter().map(|b| b.amplitude))
            .chain(self.ridges.iter().map(|r| r.amplitude));
        if amps.into_iter().any(|a| !(a.is_finite() && a >= 0.0)) {
            return Err(SynthError::Config(format!(
                "outfit '{}' has a negative amplitude",
                self.id
            )));
        }
        if self
            .blobs
            .iter()
            .map(|b| b.radius)
            .chain(self.ridges.iter().map(|r| r.radius))
            .any(|r| r <= 0.0)
        {
            return Err(SynthError::Config(format!(
                "outfit '{}' has a non-positive radius",
                self.id
            )));
        }
        Ok(())
    }

    /// Pose-invariant offset at template point `p`.
    pub fn base_offset(&self, p: &Vec3) -> f64 {
        self.floor
            + self
                .blobs
                .iter()
                .map(|b| b.amplitude * gauss(p, &b.center, b.radius))
                .sum::<f64>()
    }

    /// Pose-dependent offset at template point `p` for joint axis-angles
    /// `angles`. Odd in `angles`.
    pub fn wrinkle(&self, p: &Vec3, angles: &[Vec3]) -> f64 {
        self.ridges
            .iter()
            .map(|r| {
                let drive: f64 = r
                    .couplings
                    .iter()
                    .filter_map(|c| angles.get(c.joint).map(|a| c.gain * a[c.axis]))
                    .sum();
                if drive == 0.0 {
                    return 0.0;
                }
                let d = Vec3::from(r.direction).normalize();
                let wave = (std::f64::consts::TAU * r.frequency * d.dot(p) + r.phase).sin();
                r.amplitude * drive * gauss(p, &r.center, r.radius) * wave
            })
            .sum()
    }
}

/// A generated or loaded scan with its ground-truth decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanCloud {
    pub cloud: PointCloud,
    pub pose: PoseParams,
    pub outfit: String,
    /// Where each point sits on the body.
    pub surface_points: Vec<SurfacePoint>,
    pub gt_base_offset: Option<Vec<f64>>,
    pub gt_wrinkle: Option<Vec<f64>>,
}

/// Scan of `spec` on `body` in `pose` with `count` points, optionally
/// jittered by isotropic Gaussian noise of standard deviation `jitter`.
pub fn generate_scan(
    body: &TemplateBody,
    spec: &OutfitSpec,
    pose: &PoseParams,
    count: usize,
    jitter: f64,
    seed: u64,
) -> Result<ScanCloud, SynthError> {
    spec.validate()?;
    if count == 0 {
        return Err(SynthError::Config("scan needs at least one point".into()));
    }
    let angles: Vec<Vec3> = pose
        .joint_rotations
        .iter()
        .map(|a| Vec3::from(*a))
        .collect();
    let posed = lbs_pose(body, &pose.to_pose())?.vertices;
    let faces = body.faces();
    let field = FrameField::new(&posed, faces);

    // normals of the displaced posed mesh
    let displaced: Vec<Vec3> = posed
        .iter()
        .zip(field.normals())
        .zip(body.vertices())
        .map(|((u, n), t)| u + n * (spec.base_offset(t) + spec.wrinkle(t, &angles)))
        .collect();
    let displaced_normals = vertex_normals(&displaced, faces);

    let points = sample_surface(&body.mesh, count, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ JITTER_SALT);
    let noise = Normal::new(0.0, jitter.max(0.0)).map_err(|e| SynthError::Config(e.to_string()))?;
    let mut positions = Vec::with_capacity(count);
    let mut normals = Vec::with_capacity(count);
    let mut base = Vec::with_capacity(count);
    let mut wrinkle = Vec::with_capacity(count);
    for sp in &points {
        let p_t = position_at(body.vertices(), faces, sp)?;
        let frame = field.frame(sp)?;
        let (b, w) = (spec.base_offset(&p_t), spec.wrinkle(&p_t, &angles));
        let mut x = frame.origin + frame.rotation.column(2) * (b + w);
        if jitter > 0.0 {
            x += Vec3::new(
                noise.sample(&mut rng),
                noise.sample(&mut rng),
                noise.sample(&mut rng),
            );
        }
        positions.push(x);
        let n = crate::geom::interpolate_feature(
            &displaced_normals
                .iter()
                .map(|v| [v.x, v.y, v.z])
                .collect::<Vec<_>>(),
            faces,
            sp,
        )?;
        let n = Vec3::new(n[0], n[1], n[2]);
        normals.push(n / n.norm());
        base.push(b);
        wrinkle.push(w);
    }
    Ok(ScanCloud {
        cloud: PointCloud::new(positions, Some(normals))?,
        pose: pose.clone(),
        outfit: spec.id.clone(),
        surface_points: points,
        gt_base_offset: Some(base),
        gt_wrinkle: Some(wrinkle),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub pose_count: usize,
    pub train_fraction: f64,
    pub points_per_scan: usize,
    /// Bound on each axis-angle component of every non-root joint.
    pub max_angle: f64,
    pub jitter: f64,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            pose_count: 100,
            train_fraction: 0.8,
            points_per_scan: 4096,
            max_angle: 0.5,
            jitter: 0.0,
            seed: 0,
        }
    }
}

/// `count` poses in sign-flipped pairs: pose `2k + 1` negates every joint
/// angle of pose `2k`. The root stays at rest.
pub fn sample_poses(joints: usize, count: usize, max_angle: f64, seed: u64) -> Vec<PoseParams> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let mut p = PoseParams::identity(joints);
        for r in p.joint_rotations.iter_mut().skip(1) {
            for c in r.iter_mut() {
                *c = rng.random_range(-max_angle..=max_angle);
            }
        }
        let mut q = p.clone();
        for r in &mut q.joint_rotations {
            for c in r.iter_mut() {
                *c = -*c;
            }
        }
        out.push(p);
        if out.len() < count {
            out.push(q);
        }
    }
    out
}

/// Disjoint train/test pose indices. Sign-flipped pairs are kept together
/// where the split size allows.
pub fn split_poses(count: usize, train_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let train_n = ((count as f64) * train_fraction)
        .round()
        .clamp(0.0, count as f64) as usize;
    let mut pairs: Vec<usize> = (0..count.div_ceil(2)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ SPLIT_SALT);
    for i in (1..pairs.len()).rev() {
        pairs.swap(i, rng.random_range(0..=i));
    }
    let order: Vec<usize> = pairs
        .iter()
        .flat_map(|&k| [2 * k, 2 * k + 1])
        .filter(|&i| i < count)
        .collect();
    let mut train = order[..train_n].to_vec();
    let mut test = order[train_n..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanEntry {
    pub outfit: String,
    pub pose_index: usize,
    pub split: Split,
    /// Point cloud, relative to the manifest directory.
    pub ply: String,
    /// Pose, outfit and ground-truth offsets, relative to the manifest directory.
    pub sidecar: String,
}

/// Index of a generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: DatasetConfig,
    pub body_mesh: String,
    pub body_skinning: String,
    pub outfits: Vec<OutfitSpec>,
    pub poses: Vec<PoseParams>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub scans: Vec<ScanEntry>,
    /// Directory the relative paths resolve against; not serialized.
    #[serde(skip)]
    pub root: PathBuf,
}

/// JSON sidecar written next to each scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanSidecar {
    pub outfit: String,
    pub pose: PoseParams,
    pub surface_points: Vec<SurfacePoint>,
    pub gt_base_offset: Option<Vec<f64>>,
    pub gt_wrinkle: Option<Vec<f64>>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

fn json_err(path: &Path, e: impl std::fmt::Display) -> SynthError {
    SynthError::Json {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

fn scan_seed(seed: u64, outfit: &str, pose: usize) -> u64 {
    seed ^ fnv1a(outfit.as_bytes()).rotate_left(17)
        ^ (pose as u64).wrapping_mul(0x2545_f491_4f6c_dd1d)
}

/// Poses, split and one scan per (outfit, pose), all deterministic in
/// `config.seed`. Nothing is written.
pub fn generate_scans(
    body: &TemplateBody,
    specs: &[OutfitSpec],
    config: &DatasetConfig,
) -> Result<(Vec<PoseParams>, Vec<usize>, Vec<usize>, Vec<ScanCloud>), SynthError> {
    if config.pose_count < 2 {
        return Err(SynthError::Config(
            "dataset needs at least two poses".into(),
        ));
    }
    if !(0.0..=1.0).contains(&config.train_fraction) {
        return Err(SynthError::Config(
            "train fraction must lie in [0, 1]".into(),
        ));
    }
    let mut seen = std::collections::HashSet::new();
    if let Some(dup) = specs.iter().find(|s| !seen.insert(s.id.as_str())) {
        return Err(SynthError::Config(format!(
            "duplicate outfit id '{}'",
            dup.id
        )));
    }
    let poses = sample_poses(
        body.skeleton.joint_count(),
        config.pose_count,
        config.max_angle,
        config.seed,
    );
    let (train, test) = split_poses(config.pose_count, config.train_fraction, config.seed);
    let mut scans = Vec::with_capacity(specs.len() * poses.len());
    for spec in specs {
        for (k, pose) in poses.iter().enumerate() {
            let seed = scan_seed(config.seed, &spec.id, k);
            scans.push(generate_scan(
                body,
                spec,
                pose,
                config.points_per_scan,
                config.jitter,
                seed,
            )?);
        }
    }
    Ok((poses, train, test, scans))
}

/// Writes the body, every scan (PLY plus JSON sidecar) and `manifest.json`
/// under `out_dir`.
pub fn generate_dataset(
    body: &TemplateBody,
    specs: &[OutfitSpec],
    config: &DatasetConfig,
    out_dir: &Path,
) -> Result<Manifest, SynthError> {
    let (poses, train, test, scans) = generate_scans(body, specs, config)?;
    save_rigged_mesh(
        body,
        &out_dir.join("body.obj"),
        &out_dir.join("body_skin.json"),
    )?;
    let mut entries = Vec::with_capacity(scans.len());
    for (i, scan) in scans.iter().enumerate() {
        let k = i % poses.len();
        let stem = format!("scans/{}_{k:04}", scan.outfit);
        let (ply, sidecar) = (format!("{stem}.ply"), format!("{stem}.json"));
        write_ply(&scan.cloud, &out_dir.join(&ply))?;
        let side = ScanSidecar {
            outfit: scan.outfit.clone(),
            pose: scan.pose.clone(),
            surface_points: scan.surface_points.clone(),
            gt_base_offset: scan.gt_base_offset.clone(),
            gt_wrinkle: scan.gt_wrinkle.clone(),
        };
        let path = out_dir.join(&sidecar);
        let text = serde_json::to_string(&side).map_err(|e| json_err(&path, e))?;
        write_file(&path, text.as_bytes())?;
        entries.push(ScanEntry {
            outfit: scan.outfit.clone(),
            pose_index: k,
            split: if train.binary_search(&k).is_ok() {
                Split::Train
            } else {
                Split::Test
            },
            ply,
            sidecar,
        });
    }
    let manifest = Manifest {
        config: config.clone(),
        body_mesh: "body.obj".into(),
        body_skinning: "body_skin.json".into(),
        outfits: specs.to_vec(),
        poses,
        train,
        test,
        scans: entries,
        root: out_dir.to_path_buf(),
    };
    let path = out_dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| json_err(&path, e))?;
    write_file(&path, text.as_bytes())?;
    Ok(manifest)
}

impl Manifest {
    /// Reads a manifest; relative paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, SynthError> {
        let text = std::fs::read_to_string(path).map_err(|e| FormatError::io(path, e))?;
        let mut m: Manifest = serde_json::from_str(&text).map_err(|e| json_err(path, e))?;
        m.root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(m)
    }

    pub fn load_body(&self) -> Result<TemplateBody, SynthError> {
        Ok(load_rigged_mesh(
            &self.root.join(&self.body_mesh),
            &self.root.join(&self.body_skinning),
        )?)
    }

    pub fn entries(&self, split: Split) -> impl Iterator<Item = &ScanEntry> {
        self.scans.iter().filter(move |e| e.split == split)
    }

    pub fn outfit(&self, id: &str) -> Option<&OutfitSpec> {
        self.outfits.iter().find(|o| o.id == id)
    }

    pub fn load_scan(&self, entry: &ScanEntry) -> Result<ScanCloud, SynthError> {
        let cloud = read_ply(&self.root.join(&entry.ply))?;
        let path = self.root.join(&entry.sidecar);
        let text = std::fs::read_to_string(&path).map_err(|e| FormatError::io(&path, e))?;
        let side: ScanSidecar = serde_json::from_str(&text).map_err(|e| json_err(&path, e))?;
        Ok(ScanCloud {
            cloud,
            pose: side.pose,
            outfit: side.outfit,
            surface_points: side.surface_points,
            gt_base_offset: side.gt_base_offset,
            gt_wrinkle: side.gt_wrinkle,
        })
    }

    pub fn load_split(&self, split: Split) -> Result<Vec<ScanCloud>, SynthError> {
        self.entries(split).map(|e| self.load_scan(e)).collect()
    }
}

impl ScanCloud {
    pub fn pose(&self) -> Pose {
        self.pose.to_pose()
    }
}
