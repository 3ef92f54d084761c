//! Training objective: Chamfer and normal data terms plus displacement and
//! garment-code regularizers.

use serde::{Deserialize, Serialize};

use crate::geom::{directed_nearest, GeomError, PointCloud, Vec3};
use crate::model::{DeformationSample, RecordedBatch};
use crate::net::{Tape, Tensor, Var};

#[derive(Debug, thiserror::Error)]
pub enum LossError {
    #[error("scan has no normals")]
    MissingNormals,
    #[error("empty point set")]
    Empty,
    #[error("invalid loss weights: {0}")]
    Weights(String),
    #[error(transparent)]
    Geom(#[from] GeomError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub point: f64,
    pub normal: f64,
    pub regularization: f64,
    pub pose_displacement: f64,
    pub code: f64,
    /// Fraction of the epochs after which the normal term is switched on.
    pub normal_start_fraction: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            point: 2e4,
            normal: 0.1,
            regularization: 2e3,
            pose_displacement: 1.0,
            code: 5e-4,
            normal_start_fraction: 0.625,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<(), LossError> {
        let all = [
            self.point,
            self.normal,
            self.regularization,
            self.pose_displacement,
            self.code,
        ];
        if all.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(LossError::Weights(
                "weights must be finite and non-negative".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.normal_start_fraction) {
            return Err(LossError::Weights(
                "normal start fraction must lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }

    pub fn normal_active(&self, epoch: usize, total_epochs: usize) -> bool {
        epoch as f64 >= self.normal_start_fraction * total_epochs as f64
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub total: f64,
    pub chamfer: f64,
    pub normal: f64,
    pub rgl_total: f64,
    pub rgl_pose: f64,
    pub rgl_code: f64,
    /// Chamfer of the garment template alone; zero unless that term is on.
    pub template_chamfer: f64,
}

/// `point * (chamfer + template_chamfer) + normal * normal_term
/// + regularization * (rgl_total + pose_displacement * rgl_pose + code * rgl_code)`,
/// with the normal term dropped before its start epoch.
pub fn total_loss(
    report: &LossReport,
    weights: &LossWeights,
    epoch: usize,
    total_epochs: usize,
) -> f64 {
    let normal = if weights.normal_active(epoch, total_epochs) {
        weights.normal * report.normal
    } else {
        0.0
    };
    weights.point * (report.chamfer + report.template_chamfer)
        + normal
        + weights.regularization
            * (report.rgl_total
                + weights.pose_displacement * report.rgl_pose
                + weights.code * report.rgl_code)
}

fn nearest_terms(
    pred: &[Vec3],
    scan: &[Vec3],
) -> Result<(Vec<(usize, f64)>, Vec<(usize, f64)>), LossError> {
    if pred.is_empty() || scan.is_empty() {
        return Err(LossError::Empty);
    }
    Ok((directed_nearest(pred, scan), directed_nearest(scan, pred)))
}

fn l1(a: &Vec3, b: &Vec3) -> f64 {
    (a.x - b.x).abs() + (a.y - b.y).abs() + (a.z - b.z).abs()
}

/// Chamfer distance between predicted world points and the scan, and the
/// mean L1 distance from each predicted normal to the normal of its
/// nearest scan point.
pub fn data_loss(pred: &[DeformationSample], scan: &PointCloud) -> Result<(f64, f64), LossError> {
    let normals = scan.normals.as_ref().ok_or(LossError::MissingNormals)?;
    let x: Vec<Vec3> = pred.iter().map(|s| s.x_world).collect();
    let (fwd, bwd) = nearest_terms(&x, &scan.positions)?;
    let chamfer = fwd.iter().map(|e| e.1).sum::<f64>() / x.len() as f64
        + bwd.iter().map(|e| e.1).sum::<f64>() / scan.len() as f64;
    let normal = pred
        .iter()
        .zip(&fwd)
        .map(|(s, &(j, _))| l1(&s.n_world, &normals[j]))
        .sum::<f64>()
        / pred.len() as f64;
    Ok((chamfer, normal))
}

/// Mean squared total displacement, mean squared pose displacement and mean
/// squared garment-code row norm.
pub fn regularization(pred: &[DeformationSample], code: &Tensor) -> (f64, f64, f64) {
    let m = pred.len().max(1) as f64;
    let total = pred.iter().map(|s| s.r().norm_squared()).sum::<f64>() / m;
    let pose = pred.iter().map(|s| s.r_p.norm_squared()).sum::<f64>() / m;
    let code = if code.rows() == 0 {
        0.0
    } else {
        code.sum_sq() / code.rows() as f64
    };
    (total, pose, code)
}

fn rows3(t: &Tensor) -> Vec<Vec3> {
    (0..t.rows())
        .map(|r| Vec3::from_row_slice(t.row(r)))
        .collect()
}

/// Records the Chamfer distance between the rows of `points` and `scan`.
/// Nearest-neighbour assignments are held fixed when differentiating.
pub fn record_chamfer(
    tape: &mut Tape,
    points: Var,
    scan: &[Vec3],
) -> Result<(Var, Vec<(usize, f64)>), LossError> {
    let x = rows3(tape.value(points));
    if x.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
        // no meaningful nearest neighbours; let the non-finite value surface
        let nearest = vec![(0, f64::NAN); x.len()];
        return Ok((
            tape.scalar_with_grad(points, f64::NAN, Tensor::zeros(x.len(), 3)),
            nearest,
        ));
    }
    let (fwd, bwd) = nearest_terms(&x, scan)?;
    let (m, s) = (x.len() as f64, scan.len() as f64);
    let mut grad = Tensor::zeros(x.len(), 3);
    let mut value_f = 0.0;
    for (i, &(j, d2)) in fwd.iter().enumerate() {
        value_f += d2;
        let g = (x[i] - scan[j]) * (2.0 / m);
        grad.row_mut(i)
            .iter_mut()
            .zip(g.iter())
            .for_each(|(o, v)| *o += v);
    }
    let mut value_b = 0.0;
    for (j, &(i, d2)) in bwd.iter().enumerate() {
        value_b += d2;
        let g = (x[i] - scan[j]) * (2.0 / s);
        grad.row_mut(i)
            .iter_mut()
            .zip(g.iter())
            .for_each(|(o, v)| *o += v);
    }
    let value = value_f / m + value_b / s;
    Ok((tape.scalar_with_grad(points, value, grad), fwd))
}

/// Records the mean L1 normal discrepancy for fixed nearest-scan indices.
pub fn record_normal(
    tape: &mut Tape,
    normals: Var,
    targets: &[Vec3],
    nearest: &[(usize, f64)],
) -> Var {
    let n = rows3(tape.value(normals));
    let m = n.len().max(1) as f64;
    let mut grad = Tensor::zeros(n.len(), 3);
    let mut value = 0.0;
    for (i, &(j, _)) in nearest.iter().enumerate() {
        let d = n[i] - targets[j];
        value += d.x.abs() + d.y.abs() + d.z.abs();
        for c in 0..3 {
            let s = if d[c] > 0.0 {
                1.0
            } else if d[c] < 0.0 {
                -1.0
            } else {
                0.0
            };
            grad.row_mut(i)[c] = s / m;
        }
    }
    tape.scalar_with_grad(normals, value / m, grad)
}

/// Records the full objective for one posed scan and returns it together
/// with its breakdown.
pub fn record_loss(
    tape: &mut Tape,
    rec: &RecordedBatch,
    code: Var,
    scan: &PointCloud,
    weights: &LossWeights,
    normal_on: bool,
) -> Result<(Var, LossReport), LossError> {
    let normals = scan.normals.as_ref().ok_or(LossError::MissingNormals)?;
    let (chamfer, nearest) = record_chamfer(tape, rec.x_world, &scan.positions)?;
    let normal = record_normal(tape, rec.n_world, normals, &nearest);
    let rgl_total = tape.mean_sq_norm(rec.r);
    // with a single head there is no separate wrinkle displacement to penalize
    let rgl_pose = rec.r_g.map(|_| tape.mean_sq_norm(rec.r_p));
    let rgl_code = tape.mean_sq_norm(code);
    let template = match rec.template_world {
        Some(t) => Some(record_chamfer(tape, t, &scan.positions)?.0),
        None => None,
    };

    let w = weights;
    let mut terms = vec![
        (chamfer, w.point),
        (rgl_total, w.regularization),
        (rgl_code, w.regularization * w.code),
    ];
    if normal_on {
        terms.push((normal, w.normal));
    }
    if let Some(p) = rgl_pose {
        terms.push((p, w.regularization * w.pose_displacement));
    }
    if let Some(t) = template {
        terms.push((t, w.point));
    }
    let total = tape.weighted_sum(&terms);
    let item = |v: Option<Var>| v.map_or(0.0, |v| tape.value(v).item());
    let report = LossReport {
        total: tape.value(total).item(),
        chamfer: tape.value(chamfer).item(),
        normal: tape.value(normal).item(),
        rgl_total: tape.value(rgl_total).item(),
        rgl_pose: item(rgl_pose),
        rgl_code: tape.value(rgl_code).item(),
        template_chamfer: item(template),
    };
    Ok((total, report))
}

#[cfg(test)]
mod tests;
