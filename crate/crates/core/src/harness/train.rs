use std::path::{Path, PathBuf};

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{derive_seed, output_err, HarnessError};
use crate::body::TemplateBody;
use crate::geom::io::write_file;
use crate::geom::{sample_surface, PointCloud};
use crate::loss::{record_loss, LossReport, LossWeights};
use crate::model::{Ablations, ClosetModel, ModelConfig};
use crate::net::{Adam, AdamConfig, Tape, Var};
use crate::synthdata::ScanCloud;

pub const CHECKPOINT_FILE: &str = "checkpoint.ck";
pub const LOSS_LOG_FILE: &str = "loss.csv";
const NAN_SNAPSHOT_FILE: &str = "nan_snapshot.ck";
const NAN_REPORT_FILE: &str = "nan_report.json";

const SHUFFLE: u64 = 1;
const POINTS: u64 = 2;
const SUBSET: u64 = 3;
const VALIDATION: u64 = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Scans per optimizer step.
    pub batch_size: usize,
    pub optimizer: AdamConfig,
    pub loss: LossWeights,
    /// Body-surface points decoded per scan per step, resampled every epoch.
    pub points_per_step: usize,
    /// Scan points kept per step; larger scans are subsampled.
    pub scan_budget: usize,
    pub seed: u64,
    pub ablations: Ablations,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 60,
            batch_size: 4,
            optimizer: AdamConfig::default(),
            loss: LossWeights::default(),
            points_per_step: 4096,
            scan_budget: 4096,
            seed: 0,
            ablations: Ablations::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::Config(m.into()));
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch size must be positive");
        }
        if self.points_per_step == 0 || self.scan_budget == 0 {
            return bad("point counts must be positive");
        }
        let o = &self.optimizer;
        // zero is allowed: it turns training into a pure evaluation pass
        if !(o.lr.is_finite() && o.lr >= 0.0) {
            return bad("learning rate must be finite and non-negative");
        }
        if !((0.0..1.0).contains(&o.beta1) && (0.0..1.0).contains(&o.beta2) && o.eps > 0.0) {
            return bad("Adam betas must lie in [0, 1) and eps must be positive");
        }
        self.loss.validate()?;
        Ok(())
    }
}

/// Builds an untrained model whose ablations and seed follow `train`.
pub fn build_model(
    body: TemplateBody,
    mut config: ModelConfig,
    train: &TrainConfig,
) -> Result<ClosetModel, HarnessError> {
    config.ablations = train.ablations;
    config.seed = train.seed;
    Ok(ClosetModel::new(body, config)?)
}

/// One row of the loss log. Training columns average the steps of the
/// epoch; validation columns are measured after the epoch on a fixed batch
/// and exclude the normal term so they compare across the schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub normal_on: bool,
    pub loss: f64,
    pub chamfer: f64,
    pub normal: f64,
    pub rgl_total: f64,
    pub rgl_pose: f64,
    pub rgl_code: f64,
    pub template_chamfer: f64,
    pub val_loss: f64,
    pub val_chamfer: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub log: Vec<EpochRecord>,
    /// Fixed validation batch before the first step.
    pub initial_validation: LossReport,
    pub final_validation: LossReport,
    pub steps: u64,
}

impl TrainOutcome {
    /// Relative drop of the validation Chamfer from before training to the end.
    pub fn chamfer_reduction(&self) -> f64 {
        1.0 - self.final_validation.chamfer / self.initial_validation.chamfer
    }
}

struct Job<'a> {
    scan: &'a ScanCloud,
    points_seed: u64,
    subset_seed: u64,
}

fn subsample(cloud: &PointCloud, budget: usize, seed: u64) -> Result<PointCloud, HarnessError> {
    if cloud.len() <= budget {
        return Ok(cloud.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = index::sample(&mut rng, cloud.len(), budget).into_vec();
    keep.sort_unstable();
    let positions = keep.iter().map(|&i| cloud.positions[i]).collect();
    let normals = cloud
        .normals
        .as_ref()
        .map(|n| keep.iter().map(|&i| n[i]).collect());
    Ok(PointCloud::new(positions, normals)?)
}

/// Records the mean loss over `jobs` on one tape. Garment features are
/// computed once per outfit.
fn record_batch(
    tape: &mut Tape,
    model: &ClosetModel,
    jobs: &[Job],
    config: &TrainConfig,
    normal_on: bool,
) -> Result<(Var, Vec<LossReport>), HarnessError> {
    let mut garments: Vec<(&str, Var)> = Vec::new();
    let mut terms = Vec::with_capacity(jobs.len());
    let mut reports = Vec::with_capacity(jobs.len());
    for job in jobs {
        let outfit = job.scan.outfit.as_str();
        let garment = match garments.iter().find(|(o, _)| *o == outfit) {
            Some(&(_, g)) => g,
            None => {
                let g = model.garment_features(tape, outfit)?;
                garments.push((outfit, g));
                g
            }
        };
        let code = tape.param(model.store(), model.code_id(outfit)?);
        let points = sample_surface(&model.body().mesh, config.points_per_step, job.points_seed)?;
        let target = subsample(&job.scan.cloud, config.scan_budget, job.subset_seed)?;
        let rec = model.record(tape, garment, &job.scan.pose(), &points)?;
        let (loss, report) = record_loss(tape, &rec, code, &target, &config.loss, normal_on)?;
        terms.push((loss, 1.0 / jobs.len() as f64));
        reports.push(report);
    }
    Ok((tape.weighted_sum(&terms), reports))
}

fn mean_report(reports: &[LossReport]) -> LossReport {
    let n = reports.len().max(1) as f64;
    let mut m = LossReport::default();
    for r in reports {
        m.total += r.total / n;
        m.chamfer += r.chamfer / n;
        m.normal += r.normal / n;
        m.rgl_total += r.rgl_total / n;
        m.rgl_pose += r.rgl_pose / n;
        m.rgl_code += r.rgl_code / n;
        m.template_chamfer += r.template_chamfer / n;
    }
    m
}

fn validation_jobs<'a>(scans: &'a [ScanCloud], config: &TrainConfig) -> Vec<Job<'a>> {
    scans
        .iter()
        .take(config.batch_size)
        .enumerate()
        .map(|(i, scan)| Job {
            scan,
            points_seed: derive_seed(config.seed, &[VALIDATION, POINTS, i as u64]),
            subset_seed: derive_seed(config.seed, &[VALIDATION, SUBSET, i as u64]),
        })
        .collect()
}

fn validate_on(
    model: &ClosetModel,
    jobs: &[Job],
    config: &TrainConfig,
) -> Result<LossReport, HarnessError> {
    let mut tape = Tape::new();
    let (_, reports) = record_batch(&mut tape, model, jobs, config, false)?;
    Ok(mean_report(&reports))
}

/// Trains `model` on `scans` in place. Deterministic in `config.seed`.
pub fn train(
    model: &mut ClosetModel,
    scans: &[ScanCloud],
    config: &TrainConfig,
) -> Result<TrainOutcome, HarnessError> {
    run(model, scans, config, None)
}

/// Like [`train`], and writes `checkpoint.ck` and `loss.csv` into `out_dir`.
/// A non-finite loss leaves a parameter snapshot and a JSON report there.
pub fn train_to_dir(
    model: &mut ClosetModel,
    scans: &[ScanCloud],
    config: &TrainConfig,
    out_dir: &Path,
) -> Result<TrainOutcome, HarnessError> {
    let outcome = run(model, scans, config, Some(out_dir))?;
    let mut csv = csv::Writer::from_writer(Vec::new());
    let log_path = out_dir.join(LOSS_LOG_FILE);
    for row in &outcome.log {
        csv.serialize(row).map_err(|e| output_err(&log_path, e))?;
    }
    let bytes = csv.into_inner().map_err(|e| output_err(&log_path, e))?;
    write_file(&log_path, &bytes)?;
    write_file(&out_dir.join(CHECKPOINT_FILE), &model.checkpoint_bytes())?;
    Ok(outcome)
}

fn run(
    model: &mut ClosetModel,
    scans: &[ScanCloud],
    config: &TrainConfig,
    out_dir: Option<&Path>,
) -> Result<TrainOutcome, HarnessError> {
    config.validate()?;
    if scans.is_empty() {
        return Err(HarnessError::MissingScans("train on"));
    }
    if model.config().ablations != config.ablations {
        return Err(HarnessError::Config(
            "model ablations differ from the training configuration".into(),
        ));
    }
    for scan in scans {
        model.ensure_outfit(&scan.outfit)?;
    }

    let val_jobs = validation_jobs(scans, config);
    let initial_validation = validate_on(model, &val_jobs, config)?;
    let mut adam = Adam::new(config.optimizer);
    let mut log = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..scans.len()).collect();
    for epoch in 0..config.epochs {
        let normal_on = config.loss.normal_active(epoch, config.epochs);
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &[SHUFFLE, epoch as u64]));
        order.sort_unstable();
        order.shuffle(&mut rng);
        let mut reports = Vec::with_capacity(scans.len());
        for (step, batch) in order.chunks(config.batch_size).enumerate() {
            let jobs: Vec<Job> = batch
                .iter()
                .map(|&i| Job {
                    scan: &scans[i],
                    points_seed: derive_seed(config.seed, &[POINTS, epoch as u64, i as u64]),
                    subset_seed: derive_seed(config.seed, &[SUBSET, epoch as u64, i as u64]),
                })
                .collect();
            let mut tape = Tape::new();
            let (loss, batch_reports) = record_batch(&mut tape, model, &jobs, config, normal_on)?;
            let value = tape.value(loss).item();
            if !value.is_finite() {
                let snapshot = match out_dir {
                    Some(dir) => Some(write_snapshot(model, dir, epoch, step, &batch_reports)?),
                    None => None,
                };
                return Err(HarnessError::NonFinite {
                    epoch,
                    step,
                    value,
                    snapshot,
                });
            }
            let grads = tape.backward(loss)?;
            let store = model.store_mut();
            store.zero_grads();
            store.accumulate(&grads);
            adam.step(store);
            reports.extend(batch_reports);
        }
        let train = mean_report(&reports);
        let val = validate_on(model, &val_jobs, config)?;
        log.push(EpochRecord {
            epoch,
            normal_on,
            loss: train.total,
            chamfer: train.chamfer,
            normal: train.normal,
            rgl_total: train.rgl_total,
            rgl_pose: train.rgl_pose,
            rgl_code: train.rgl_code,
            template_chamfer: train.template_chamfer,
            val_loss: val.total,
            val_chamfer: val.chamfer,
        });
    }
    let final_validation = validate_on(model, &val_jobs, config)?;
    Ok(TrainOutcome {
        log,
        initial_validation,
        final_validation,
        steps: adam.steps_taken(),
    })
}

fn write_snapshot(
    model: &ClosetModel,
    dir: &Path,
    epoch: usize,
    step: usize,
    reports: &[LossReport],
) -> Result<PathBuf, HarnessError> {
    let path = dir.join(NAN_SNAPSHOT_FILE);
    write_file(&path, &model.checkpoint_bytes())?;
    let report_path = dir.join(NAN_REPORT_FILE);
    // serde_json writes non-finite floats as null
    let text = serde_json::to_string_pretty(&serde_json::json!({
        "epoch": epoch,
        "step": step,
        "reports": reports,
    }))
    .map_err(|e| output_err(&report_path, e))?;
    write_file(&report_path, text.as_bytes())?;
    Ok(path)
}
