use std::path::Path;
use std::process::Command;

use closet_core::body::HumanoidConfig;
use closet_core::model::ModelConfig;
use closet_core::net::EncoderConfig;

fn closet(args: &[&str]) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_closet"))
        .args(args)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "closet {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn tiny_config(dir: &Path) -> String {
    let body = HumanoidConfig {
        around: 6,
        rings: 2,
        ..Default::default()
    };
    let counts: Vec<usize> = EncoderConfig::counts_for(body.vertex_count())
        .into_iter()
        .take(3)
        .collect();
    let enc = EncoderConfig {
        abstraction_counts: counts.clone(),
        neighbors: 8,
        widths: vec![8; counts.len()],
        output: 8,
    };
    let model = ModelConfig {
        pose_encoder: enc.clone(),
        garment_encoder: enc,
        code_width: 4,
        decoder_hidden: vec![16; 4],
        ..ModelConfig::for_vertices(body.vertex_count())
    };
    let json = serde_json::json!({
        "body": body,
        "dataset": { "pose_count": 4, "points_per_scan": 200 },
        "train": { "epochs": 2, "batch_size": 2, "points_per_step": 64, "scan_budget": 64 },
        "model": model,
    });
    let path = dir.join("run.json");
    std::fs::write(&path, json.to_string()).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn full_pipeline_runs_from_the_command_line() {
    let dir = tempfile::tempdir().unwrap();
    let d = |p: &str| dir.path().join(p).to_str().unwrap().to_string();
    let config = tiny_config(dir.path());
    let c = config.as_str();

    closet(&[
        "gen-data",
        "--config",
        c,
        "--seed",
        "3",
        "--out-dir",
        &d("data"),
        "--outfits",
        "jacket,skirt",
    ]);
    let manifest = d("data/manifest.json");
    assert!(Path::new(&manifest).exists());

    closet(&[
        "train",
        "--config",
        c,
        "--seed",
        "4",
        "--out-dir",
        &d("run"),
        "--data",
        &manifest,
        "--lr",
        "1e-3",
    ]);
    let checkpoint = d("run/checkpoint.ck");
    let log = std::fs::read_to_string(d("run/loss.csv")).unwrap();
    assert_eq!(log.lines().count(), 3);
    assert!(log.starts_with("epoch,normal_on,loss,chamfer"));

    // same seed, same checkpoint
    closet(&[
        "train",
        "--config",
        c,
        "--seed",
        "4",
        "--out-dir",
        &d("again"),
        "--data",
        &manifest,
        "--lr",
        "1e-3",
    ]);
    assert_eq!(
        std::fs::read(&checkpoint).unwrap(),
        std::fs::read(d("again/checkpoint.ck")).unwrap()
    );

    let out = closet(&[
        "eval",
        "--out-dir",
        &d("eval"),
        "--data",
        &manifest,
        "--checkpoint",
        &checkpoint,
        "--points",
        "300",
    ]);
    assert!(out.contains("jacket") && out.contains("skirt"));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d("eval/eval.json")).unwrap()).unwrap();
    assert!(report["mean_chamfer"].as_f64().unwrap() > 0.0);

    closet(&[
        "animate",
        "--out-dir",
        &d("anim"),
        "--data",
        &manifest,
        "--checkpoint",
        &checkpoint,
        "--outfit",
        "skirt",
        "--points",
        "100",
    ]);
    assert!(Path::new(&d("anim/frame_0000.ply")).exists());
    assert!(Path::new(&d("anim/body_0000.obj")).exists());

    closet(&[
        "export-template",
        "--out-dir",
        &d("tmpl"),
        "--data",
        &manifest,
        "--checkpoint",
        &checkpoint,
        "--outfit",
        "jacket",
        "--points",
        "100",
    ]);
    assert!(Path::new(&d("tmpl/template_jacket.ply")).exists());

    let out = closet(&[
        "seam-study",
        "--out-dir",
        &d("seam"),
        "--data",
        &manifest,
        "--checkpoint",
        &checkpoint,
        "--outfit",
        "jacket",
        "--samples",
        "200",
    ]);
    assert!(out.contains("uv_seam_max_jump"));
}

#[test]
fn bad_input_fails_with_a_message() {
    let out = Command::new(env!("CARGO_BIN_EXE_closet"))
        .args([
            "eval",
            "--data",
            "/nonexistent/manifest.json",
            "--checkpoint",
            "x.ck",
        ])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/manifest.json"));
}
