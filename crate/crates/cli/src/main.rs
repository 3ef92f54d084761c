use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use closet_core::body::{build_humanoid, lbs_pose, HumanoidConfig, PoseParams, TemplateBody};
use closet_core::harness::{
    body_obj, build_model, evaluate, export_cloud, export_mesh, export_template, load_model,
    seam_study, train_to_dir, TrainConfig, CHECKPOINT_FILE,
};
use closet_core::model::{ClosetModel, ModelConfig};
use closet_core::synthdata::{generate_dataset, DatasetConfig, Manifest, OutfitSpec, Split};
use serde::{Deserialize, Serialize};

#[derive(Parser)]
#[command(
    name = "closet",
    version,
    about = "Point-based clothed body deformation at desk scale"
)]
struct Cli {
    /// Seed for data generation, initialization and sampling.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for every output file.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// JSON run configuration; command-line flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scan dataset.
    GenData(GenDataArgs),
    /// Train a model on a dataset's training split.
    Train(TrainArgs),
    /// Score a checkpoint on a dataset split.
    Eval(EvalArgs),
    /// Decode a checkpoint over a sequence of poses.
    Animate(AnimateArgs),
    /// Write an outfit's garment template and the body mesh.
    ExportTemplate(ExportArgs),
    /// Compare surface and UV feature lookups across mesh edges.
    SeamStudy(SeamArgs),
}

#[derive(Args)]
struct GenDataArgs {
    /// Outfit ids; each gets a loose garment.
    #[arg(long, value_delimiter = ',', default_value = "jacket")]
    outfits: Vec<String>,
    /// Number of poses to sample.
    #[arg(long)]
    poses: Option<usize>,
    /// Points per scan.
    #[arg(long)]
    points: Option<usize>,
    /// Fraction of poses in the training split.
    #[arg(long)]
    train_fraction: Option<f64>,
    /// Largest joint angle in radians.
    #[arg(long)]
    max_angle: Option<f64>,
    /// Standard deviation of scan noise in metres.
    #[arg(long)]
    jitter: Option<f64>,
}

#[derive(Args)]
struct DataArg {
    /// Dataset manifest.
    #[arg(long)]
    data: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArg,
    /// Training epochs.
    #[arg(long)]
    epochs: Option<usize>,
    /// Scans per optimizer step.
    #[arg(long)]
    batch_size: Option<usize>,
    /// Adam learning rate.
    #[arg(long)]
    lr: Option<f64>,
    /// Body-surface points decoded per scan.
    #[arg(long)]
    points_per_step: Option<usize>,
    /// Scan points used per step for the Chamfer term.
    #[arg(long)]
    scan_budget: Option<usize>,
    /// Single decoder predicting the full displacement.
    #[arg(long)]
    no_etd: bool,
    /// Look garment features up in a UV grid instead of on the surface.
    #[arg(long)]
    no_csf_uv_baseline: bool,
    /// Do not feed garment features to the pose decoder.
    #[arg(long)]
    no_garment_to_pose_decoder: bool,
    /// Add a Chamfer term on the garment template alone.
    #[arg(long)]
    template_data_term: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    data: DataArg,
    /// Checkpoint written by train.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Surface points decoded per scan.
    #[arg(long, default_value_t = 8192)]
    points: usize,
    /// Dataset split to score.
    #[arg(long, value_enum, default_value = "test")]
    split: SplitArg,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum SplitArg {
    Train,
    Test,
}

#[derive(Args)]
struct AnimateArgs {
    #[command(flatten)]
    data: DataArg,
    /// Checkpoint written by train.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Outfit to animate.
    #[arg(long)]
    outfit: String,
    /// JSON list of poses; defaults to the dataset's test poses.
    #[arg(long)]
    poses: Option<PathBuf>,
    /// Surface points decoded per frame.
    #[arg(long, default_value_t = 8192)]
    points: usize,
}

#[derive(Args)]
struct ExportArgs {
    #[command(flatten)]
    data: DataArg,
    /// Checkpoint written by train.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Outfit whose template to export.
    #[arg(long)]
    outfit: String,
    /// Surface points in the exported template.
    #[arg(long, default_value_t = 8192)]
    points: usize,
}

#[derive(Args)]
struct SeamArgs {
    /// Dataset whose body to study; the built-in humanoid otherwise.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Also measure a trained model's displacement across edges.
    #[arg(long, requires = "outfit")]
    checkpoint: Option<PathBuf>,
    /// Outfit decoded for the model measurement.
    #[arg(long)]
    outfit: Option<String>,
    /// Shared-edge points to sample.
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    /// Texels per side of the UV feature grid.
    #[arg(long, default_value_t = 64)]
    resolution: usize,
}

/// Everything a run can be configured with from a JSON file.
#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default)]
struct RunConfig {
    body: HumanoidConfig,
    dataset: DatasetConfig,
    train: TrainConfig,
    /// Sized from the body when absent.
    model: Option<ModelConfig>,
}

fn read_config(path: Option<&Path>) -> Result<RunConfig> {
    let Some(path) = path else {
        return Ok(RunConfig::default());
    };
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, serde_json::to_string_pretty(value)?)
        .with_context(|| format!("writing {}", path.display()))
}

fn load_manifest(path: &Path) -> Result<Manifest> {
    Manifest::load(path).with_context(|| format!("loading dataset {}", path.display()))
}

fn load_trained(manifest: &Manifest, checkpoint: &Path) -> Result<(TemplateBody, ClosetModel)> {
    let body = manifest.load_body()?;
    let model = load_model(body.clone(), checkpoint)
        .with_context(|| format!("loading {}", checkpoint.display()))?;
    Ok((body, model))
}

fn gen_data(cli: &Cli, run: RunConfig, args: &GenDataArgs) -> Result<()> {
    let mut config = run.dataset;
    if let Some(s) = cli.seed {
        config.seed = s;
    }
    config.pose_count = args.poses.unwrap_or(config.pose_count);
    config.points_per_scan = args.points.unwrap_or(config.points_per_scan);
    config.train_fraction = args.train_fraction.unwrap_or(config.train_fraction);
    config.max_angle = args.max_angle.unwrap_or(config.max_angle);
    config.jitter = args.jitter.unwrap_or(config.jitter);
    let body = build_humanoid(&run.body)?;
    let specs: Vec<OutfitSpec> = args
        .outfits
        .iter()
        .enumerate()
        .map(|(i, id)| OutfitSpec::loose(id, config.seed.wrapping_add(i as u64)))
        .collect();
    let manifest = generate_dataset(&body, &specs, &config, &cli.out_dir)?;
    println!(
        "wrote {} scans ({} train poses, {} test poses) to {}",
        manifest.scans.len(),
        manifest.train.len(),
        manifest.test.len(),
        cli.out_dir.display()
    );
    Ok(())
}

fn train_cmd(cli: &Cli, run: RunConfig, args: &TrainArgs) -> Result<()> {
    let mut config = run.train;
    if let Some(s) = cli.seed {
        config.seed = s;
    }
    config.epochs = args.epochs.unwrap_or(config.epochs);
    config.batch_size = args.batch_size.unwrap_or(config.batch_size);
    config.optimizer.lr = args.lr.unwrap_or(config.optimizer.lr);
    config.points_per_step = args.points_per_step.unwrap_or(config.points_per_step);
    config.scan_budget = args.scan_budget.unwrap_or(config.scan_budget);
    let a = &mut config.ablations;
    a.no_etd |= args.no_etd;
    a.no_csf_uv_baseline |= args.no_csf_uv_baseline;
    a.no_garment_to_pose_decoder |= args.no_garment_to_pose_decoder;
    a.template_data_term |= args.template_data_term;

    let manifest = load_manifest(&args.data.data)?;
    let body = manifest.load_body()?;
    let model_config = run
        .model
        .unwrap_or_else(|| ModelConfig::for_vertices(body.vertex_count()));
    let mut model = build_model(body, model_config, &config)?;
    let scans = manifest.load_split(Split::Train)?;
    let outcome = train_to_dir(&mut model, &scans, &config, &cli.out_dir)?;
    write_json(&cli.out_dir.join("train_config.json"), &config)?;
    write_json(&cli.out_dir.join("train_summary.json"), &outcome)?;
    println!(
        "{} steps; validation chamfer {:.4e} -> {:.4e} ({:.1}% lower); checkpoint in {}",
        outcome.steps,
        outcome.initial_validation.chamfer,
        outcome.final_validation.chamfer,
        100.0 * outcome.chamfer_reduction(),
        cli.out_dir.join(CHECKPOINT_FILE).display()
    );
    Ok(())
}

fn eval_cmd(cli: &Cli, args: &EvalArgs) -> Result<()> {
    let manifest = load_manifest(&args.data.data)?;
    let (_, model) = load_trained(&manifest, &args.checkpoint)?;
    let split = match args.split {
        SplitArg::Train => Split::Train,
        SplitArg::Test => Split::Test,
    };
    let scans = manifest.load_split(split)?;
    let report = evaluate(&model, &scans, args.points, cli.seed.unwrap_or(0))?;
    write_json(&cli.out_dir.join("eval.json"), &report)?;
    for o in &report.outfits {
        println!(
            "{:<16} scans {:>4}  CD {:>9.4} x1e-4 m^2  NML {:>7.4} x1e-1",
            o.outfit, o.scans, o.chamfer, o.normal
        );
    }
    println!(
        "mean/max CD {:.4} / {:.4}  NML {:.4} / {:.4}",
        report.mean_chamfer, report.max_chamfer, report.mean_normal, report.max_normal
    );
    Ok(())
}

fn animate_cmd(cli: &Cli, args: &AnimateArgs) -> Result<()> {
    let manifest = load_manifest(&args.data.data)?;
    let (body, model) = load_trained(&manifest, &args.checkpoint)?;
    let params: Vec<PoseParams> = match &args.poses {
        Some(path) => {
            let text =
                fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => manifest
            .test
            .iter()
            .map(|&i| manifest.poses[i].clone())
            .collect(),
    };
    if params.is_empty() {
        bail!("no poses to animate");
    }
    let poses: Vec<_> = params.iter().map(PoseParams::to_pose).collect();
    let clouds = model.animate(&poses, &args.outfit, args.points, cli.seed.unwrap_or(0))?;
    for (k, (cloud, pose)) in clouds.iter().zip(&poses).enumerate() {
        export_cloud(cloud, &cli.out_dir.join(format!("frame_{k:04}.ply")))?;
        let posed = lbs_pose(&body, pose)?.vertices;
        export_mesh(
            &body_obj(&body, &posed),
            &cli.out_dir.join(format!("body_{k:04}.obj")),
        )?;
    }
    println!("wrote {} frames to {}", clouds.len(), cli.out_dir.display());
    Ok(())
}

fn export_cmd(cli: &Cli, args: &ExportArgs) -> Result<()> {
    let manifest = load_manifest(&args.data.data)?;
    let (body, model) = load_trained(&manifest, &args.checkpoint)?;
    let path = cli.out_dir.join(format!("template_{}.ply", args.outfit));
    export_template(
        &model,
        &args.outfit,
        args.points,
        cli.seed.unwrap_or(0),
        &path,
    )?;
    export_mesh(
        &body_obj(&body, body.vertices()),
        &cli.out_dir.join("body.obj"),
    )?;
    println!("wrote {}", path.display());
    Ok(())
}

fn seam_cmd(cli: &Cli, run: RunConfig, args: &SeamArgs) -> Result<()> {
    let (body, model) = match (&args.data, &args.checkpoint) {
        (Some(data), Some(ck)) => {
            let (body, model) = load_trained(&load_manifest(data)?, ck)?;
            (body, Some(model))
        }
        (Some(data), None) => (load_manifest(data)?.load_body()?, None),
        (None, Some(_)) => bail!("--checkpoint needs --data for the body it was trained on"),
        (None, None) => (build_humanoid(&run.body)?, None),
    };
    let with_model = model.as_ref().zip(args.outfit.as_deref());
    let report = seam_study(
        &body,
        args.samples,
        args.resolution,
        cli.seed.unwrap_or(0),
        with_model,
    )?;
    write_json(&cli.out_dir.join("seam_report.json"), &report)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let run = read_config(cli.config.as_deref())?;
    match &cli.command {
        Command::GenData(a) => gen_data(&cli, run, a),
        Command::Train(a) => train_cmd(&cli, run, a),
        Command::Eval(a) => eval_cmd(&cli, a),
        Command::Animate(a) => animate_cmd(&cli, a),
        Command::ExportTemplate(a) => export_cmd(&cli, a),
        Command::SeamStudy(a) => seam_cmd(&cli, run, a),
    }
}
