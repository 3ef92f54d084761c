//! Training loop, evaluation metrics, exports and the seam study.

mod eval;
mod export;
mod seam;
mod train;

use std::path::PathBuf;

pub use crate::model::uv_baseline_features;
pub use eval::{
    cloud_metrics, decomposition_study, evaluate, DecompositionReport, EvalReport, OutfitMetrics,
    CHAMFER_UNIT, NORMAL_UNIT,
};
pub use export::{body_obj, export_cloud, export_mesh, export_template, load_model, save_model};
pub use seam::{seam_study, shared_edges, SeamReport, SharedEdge};
pub use train::{
    build_model, train, train_to_dir, EpochRecord, TrainConfig, TrainOutcome, CHECKPOINT_FILE,
    LOSS_LOG_FILE,
};

use crate::body::BodyError;
use crate::geom::io::FormatError;
use crate::geom::GeomError;
use crate::loss::LossError;
use crate::model::ModelError;
use crate::net::NetError;
use crate::synthdata::SynthError;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid training settings: {0}")]
    Config(String),
    #[error("no scans to {0}")]
    MissingScans(&'static str),
    #[error("loss became {value} at epoch {epoch}, step {step}{}", snapshot_note(.snapshot))]
    NonFinite {
        epoch: usize,
        step: usize,
        value: f64,
        snapshot: Option<PathBuf>,
    },
    #[error("{path}: {message}")]
    Output { path: PathBuf, message: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error(transparent)]
    Body(#[from] BodyError),
}

fn snapshot_note(snapshot: &Option<PathBuf>) -> String {
    snapshot
        .as_ref()
        .map(|p| format!(" (snapshot in {})", p.display()))
        .unwrap_or_default()
}

fn output_err(path: &std::path::Path, e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Output {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Seed for one stream of a run, derived from the run seed and a few labels.
fn derive_seed(seed: u64, parts: &[u64]) -> u64 {
    let mut bytes = seed.to_le_bytes().to_vec();
    for p in parts {
        bytes.extend_from_slice(&p.to_le_bytes());
    }
    crate::net::fnv1a(&bytes)
}
