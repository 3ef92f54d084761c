use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::geom::{chamfer, directed_nearest, sample_surface, PointCloud, Vec3};
use crate::loss::LossError;
use crate::model::ClosetModel;
use crate::synthdata::{OutfitSpec, ScanCloud};

/// Reported Chamfer values are in multiples of this many square meters.
pub const CHAMFER_UNIT: f64 = 1e-4;
/// Reported normal discrepancies are in multiples of this.
pub const NORMAL_UNIT: f64 = 1e-1;

/// Chamfer distance and mean L1 normal discrepancy from `pred` to `target`,
/// in raw units. Both clouds need normals.
pub fn cloud_metrics(pred: &PointCloud, target: &PointCloud) -> Result<(f64, f64), HarnessError> {
    let (Some(pn), Some(tn)) = (&pred.normals, &target.normals) else {
        return Err(LossError::MissingNormals.into());
    };
    let cd = chamfer(pred, target)?;
    let nearest = directed_nearest(&pred.positions, &target.positions);
    let l1 = |a: &Vec3, b: &Vec3| (a - b).abs().sum();
    let nml = pn
        .iter()
        .zip(&nearest)
        .map(|(n, &(j, _))| l1(n, &tn[j]))
        .sum::<f64>()
        / pred.len() as f64;
    Ok((cd, nml))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutfitMetrics {
    pub outfit: String,
    pub scans: usize,
    /// Mean over the outfit's scans, in [`CHAMFER_UNIT`].
    pub chamfer: f64,
    /// Mean over the outfit's scans, in [`NORMAL_UNIT`].
    pub normal: f64,
}

/// Metrics per outfit plus the mean and max across outfits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub points: usize,
    pub outfits: Vec<OutfitMetrics>,
    pub mean_chamfer: f64,
    pub max_chamfer: f64,
    pub mean_normal: f64,
    pub max_normal: f64,
}

/// Decodes `points` fixed surface points per scan and scores them against
/// the full scan.
pub fn evaluate(
    model: &ClosetModel,
    scans: &[ScanCloud],
    points: usize,
    seed: u64,
) -> Result<EvalReport, HarnessError> {
    if scans.is_empty() {
        return Err(HarnessError::MissingScans("evaluate"));
    }
    let surface = sample_surface(&model.body().mesh, points, seed)?;
    let mut sums: Vec<(String, usize, f64, f64)> = Vec::new();
    for scan in scans {
        let samples = model.forward(&scan.pose(), &scan.outfit, &surface)?;
        let pred = PointCloud::new(
            samples.iter().map(|s| s.x_world).collect(),
            Some(samples.iter().map(|s| s.n_world).collect()),
        )?;
        let (cd, nml) = cloud_metrics(&pred, &scan.cloud)?;
        match sums.iter_mut().find(|s| s.0 == scan.outfit) {
            Some(s) => {
                s.1 += 1;
                s.2 += cd;
                s.3 += nml;
            }
            None => sums.push((scan.outfit.clone(), 1, cd, nml)),
        }
    }
    let outfits: Vec<OutfitMetrics> = sums
        .into_iter()
        .map(|(outfit, n, cd, nml)| OutfitMetrics {
            outfit,
            scans: n,
            chamfer: cd / n as f64 / CHAMFER_UNIT,
            normal: nml / n as f64 / NORMAL_UNIT,
        })
        .collect();
    let k = outfits.len() as f64;
    Ok(EvalReport {
        points,
        mean_chamfer: outfits.iter().map(|o| o.chamfer).sum::<f64>() / k,
        max_chamfer: outfits.iter().map(|o| o.chamfer).fold(0.0, f64::max),
        mean_normal: outfits.iter().map(|o| o.normal).sum::<f64>() / k,
        max_normal: outfits.iter().map(|o| o.normal).fold(0.0, f64::max),
        outfits,
    })
}

/// How well a trained model separates the garment template from wrinkles,
/// against a generator outfit with known base offset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecompositionReport {
    /// Cosine similarity between the learned template displacements and the
    /// generator's base offset along the normal, both in local frames and
    /// stacked over the sample points.
    pub template_cosine: f64,
    /// Mean |r_g| over the sample points.
    pub mean_template: f64,
    /// Mean |r_p| over the sample points and poses.
    pub mean_pose: f64,
}

pub fn decomposition_study(
    model: &ClosetModel,
    spec: &OutfitSpec,
    scans: &[ScanCloud],
    points: usize,
    seed: u64,
) -> Result<DecompositionReport, HarnessError> {
    let scans: Vec<&ScanCloud> = scans.iter().filter(|s| s.outfit == spec.id).collect();
    if scans.is_empty() {
        return Err(HarnessError::MissingScans("study"));
    }
    let surface = sample_surface(&model.body().mesh, points, seed)?;
    let (mut dot, mut rg_sq, mut base_sq, mut rg_norm, mut rp_norm) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (k, scan) in scans.iter().enumerate() {
        for s in model.forward(&scan.pose(), &spec.id, &surface)? {
            rp_norm += s.r_p.norm();
            if k == 0 {
                let base = spec.base_offset(&s.p_t);
                dot += s.r_g.z * base;
                rg_sq += s.r_g.norm_squared();
                base_sq += base * base;
                rg_norm += s.r_g.norm();
            }
        }
    }
    let denom = (rg_sq * base_sq).sqrt();
    Ok(DecompositionReport {
        template_cosine: if denom > 0.0 { dot / denom } else { 0.0 },
        mean_template: rg_norm / points as f64,
        mean_pose: rp_norm / (points * scans.len()) as f64,
    })
}
