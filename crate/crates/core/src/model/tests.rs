use super::*;
use crate::body::{build_humanoid, HumanoidConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tiny_config(vertices: usize) -> ModelConfig {
    let counts: Vec<usize> = EncoderConfig::counts_for(vertices)
        .into_iter()
        .take(3)
        .collect();
    ModelConfig {
        pose_encoder: EncoderConfig {
            abstraction_counts: counts.clone(),
            neighbors: 8,
            widths: vec![8; counts.len()],
            output: 8,
        },
        garment_encoder: EncoderConfig {
            abstraction_counts: counts.clone(),
            neighbors: 8,
            widths: vec![6; counts.len()],
            output: 6,
        },
        code_width: 4,
        code_std: 0.01,
        decoder_hidden: vec![16; 4],
        pose_residual: true,
        uv_resolution: 64,
        ablations: Ablations::default(),
        seed: 21,
    }
}

fn model_with(ablations: Ablations) -> ClosetModel {
    let body = build_humanoid(&HumanoidConfig {
        around: 6,
        rings: 2,
        ..Default::default()
    })
    .unwrap();
    let mut config = tiny_config(body.vertex_count());
    config.ablations = ablations;
    let mut m = ClosetModel::new(body, config).unwrap();
    m.ensure_outfit("jacket").unwrap();
    m
}

fn model() -> ClosetModel {
    model_with(Ablations::default())
}

fn random_pose(joints: usize, seed: u64, scale: f64) -> Pose {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let aa: Vec<Vec3> = (0..joints)
        .map(|_| {
            Vec3::new(
                rng.random_range(-scale..scale),
                rng.random_range(-scale..scale),
                rng.random_range(-scale..scale),
            )
        })
        .collect();
    Pose::from_axis_angles(&aa, Vec3::new(0.1, -0.05, 0.2))
}

fn zero_decoders(m: &mut ClosetModel) {
    let mut layers: Vec<_> = m.pose_decoder().layers().to_vec();
    if let Some(d) = m.garment_decoder() {
        layers.extend_from_slice(d.layers());
    }
    for l in layers {
        m.store_mut().value_mut(l.weight).fill(0.0);
        m.store_mut().value_mut(l.bias).fill(0.0);
    }
}

fn points(m: &ClosetModel, n: usize, seed: u64) -> Vec<SurfacePoint> {
    sample_surface(&m.body().mesh, n, seed).unwrap()
}

#[test]
fn zero_decoders_put_clothing_on_the_body() {
    let mut m = model();
    zero_decoders(&mut m);
    let pose = random_pose(m.body().skeleton.joint_count(), 1, 0.4);
    let pts = points(&m, 64, 2);
    for s in m.forward(&pose, "jacket", &pts).unwrap() {
        assert_eq!(s.x_world, s.p_u);
        assert!((s.n_world - s.frame.rotation.column(2)).norm() < 1e-12);
    }
}

#[test]
fn forward_is_deterministic() {
    let m = model();
    let pose = random_pose(m.body().skeleton.joint_count(), 3, 0.4);
    let pts = points(&m, 40, 4);
    assert_eq!(
        m.forward(&pose, "jacket", &pts).unwrap(),
        m.forward(&pose, "jacket", &pts).unwrap()
    );
}

#[test]
fn decomposition_identity_is_exact() {
    let m = model();
    let pose = random_pose(m.body().skeleton.joint_count(), 5, 0.5);
    for s in m.forward(&pose, "jacket", &points(&m, 80, 6)).unwrap() {
        let r = s.r_g + s.r_p;
        assert_eq!(r, s.r());
        assert_eq!(s.x_world, s.frame.rotation * r + s.p_u);
        let n = s.frame.rotation * s.normal_local;
        assert!((s.n_world - n / n.norm()).norm() < 1e-15);
    }
}

#[test]
fn garment_displacement_ignores_pose() {
    let m = model();
    let pts = points(&m, 50, 7);
    let joints = m.body().skeleton.joint_count();
    let reference: Vec<Vec3> = m
        .forward(&Pose::identity(joints), "jacket", &pts)
        .unwrap()
        .iter()
        .map(|s| s.r_g)
        .collect();
    for seed in 0..4 {
        let got: Vec<Vec3> = m
            .forward(&random_pose(joints, 100 + seed, 0.6), "jacket", &pts)
            .unwrap()
            .iter()
            .map(|s| s.r_g)
            .collect();
        assert_eq!(got, reference);
    }
}

#[test]
fn displacement_agrees_across_shared_edges() {
    let m = model();
    let faces = m.body().faces();
    let pose = random_pose(m.body().skeleton.joint_count(), 8, 0.4);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut a = Vec::new();
    let mut b = Vec::new();
    for f in (0..faces.len()).step_by(7) {
        let [i, j, _] = faces[f];
        let Some(g) =
            (0..faces.len()).find(|&g| g != f && faces[g].contains(&i) && faces[g].contains(&j))
        else {
            continue;
        };
        let t: f64 = rng.random_range(0.05..0.95);
        let bary = |face: [usize; 3]| {
            face.map(|v| {
                if v == i {
                    1.0 - t
                } else if v == j {
                    t
                } else {
                    0.0
                }
            })
        };
        a.push(SurfacePoint::new(f, bary(faces[f])).unwrap());
        b.push(SurfacePoint::new(g, bary(faces[g])).unwrap());
    }
    let sa = m.forward(&pose, "jacket", &a).unwrap();
    let sb = m.forward(&pose, "jacket", &b).unwrap();
    for (x, y) in sa.iter().zip(&sb) {
        assert!((x.r() - y.r()).norm() < 1e-9);
        assert!((x.p_u - y.p_u).norm() < 1e-12);
    }
}

#[test]
fn rigid_motion_of_the_body_moves_outputs_rigidly() {
    let m = model();
    let joints = m.body().skeleton.joint_count();
    let pose = random_pose(joints, 10, 0.4);
    let q = *nalgebra::Rotation3::from_scaled_axis(Vec3::new(0.3, -1.1, 0.6)).matrix();
    let s = Vec3::new(0.5, -0.2, 1.3);
    let moved = pose.with_global_motion(&q, &s, &m.body().skeleton.offsets[0]);
    let pts = points(&m, 60, 11);
    let a = m.forward(&pose, "jacket", &pts).unwrap();
    let b = m.forward(&moved, "jacket", &pts).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert!((q * x.x_world + s - y.x_world).norm() < 1e-6);
        assert!((q * x.n_world - y.n_world).norm() < 1e-6);
    }
}

#[test]
fn unknown_outfit_is_an_error() {
    let m = model();
    let pts = points(&m, 3, 1);
    let pose = Pose::identity(m.body().skeleton.joint_count());
    assert!(matches!(
        m.forward(&pose, "kilt", &pts),
        Err(ModelError::UnknownOutfit(_))
    ));
    assert!(matches!(
        m.template_preview("kilt", &pts),
        Err(ModelError::UnknownOutfit(_))
    ));
}

#[test]
fn template_preview_with_zero_garment_decoder_is_the_body() {
    let mut m = model();
    let a = m.template_preview("jacket", &points(&m, 30, 12)).unwrap();
    assert_eq!(
        a,
        m.template_preview("jacket", &points(&m, 30, 12)).unwrap()
    );
    zero_decoders(&mut m);
    let pts = points(&m, 30, 12);
    let cloud = m.template_preview("jacket", &pts).unwrap();
    for (p, sp) in cloud.positions.iter().zip(&pts) {
        assert_eq!(
            *p,
            crate::geom::position_at(m.body().vertices(), m.body().faces(), sp).unwrap()
        );
    }
}

#[test]
fn animate_keeps_correspondence() {
    let mut m = model();
    zero_decoders(&mut m);
    let joints = m.body().skeleton.joint_count();
    let pose = random_pose(joints, 13, 0.3);
    let clouds = m
        .animate(
            &[Pose::identity(joints), pose.clone(), pose],
            "jacket",
            100,
            3,
        )
        .unwrap();
    assert_eq!(clouds[1], clouds[2]);
    let pts = points(&m, 100, 3);
    for (p, sp) in clouds[0].positions.iter().zip(&pts) {
        assert_eq!(
            *p,
            crate::geom::position_at(m.body().vertices(), m.body().faces(), sp).unwrap()
        );
    }
}

#[test]
fn checkpoint_restores_identical_outputs() {
    let m = model();
    let bytes = m.checkpoint_bytes();
    let back = ClosetModel::from_checkpoint_bytes(m.body().clone(), &bytes).unwrap();
    assert_eq!(back.store(), m.store());
    assert_eq!(back.checkpoint_bytes(), bytes);
    let pose = random_pose(m.body().skeleton.joint_count(), 14, 0.3);
    let pts = points(&m, 20, 15);
    assert_eq!(
        back.forward(&pose, "jacket", &pts).unwrap(),
        m.forward(&pose, "jacket", &pts).unwrap()
    );
}

#[test]
fn single_head_ablation_has_no_template_displacement() {
    let m = model_with(Ablations {
        no_etd: true,
        ..Default::default()
    });
    assert!(m.garment_decoder().is_none());
    let pose = random_pose(m.body().skeleton.joint_count(), 16, 0.3);
    for s in m.forward(&pose, "jacket", &points(&m, 20, 17)).unwrap() {
        assert_eq!(s.r_g, Vec3::zeros());
        assert_ne!(s.r_p, Vec3::zeros());
    }
}

#[test]
fn uv_ablation_changes_only_feature_lookup() {
    let full = model();
    let uv = model_with(Ablations {
        no_csf_uv_baseline: true,
        ..Default::default()
    });
    assert_eq!(full.store(), uv.store());
    let pose = random_pose(full.body().skeleton.joint_count(), 18, 0.3);
    let pts = points(&full, 30, 19);
    let a = full.forward(&pose, "jacket", &pts).unwrap();
    let b = uv.forward(&pose, "jacket", &pts).unwrap();
    assert_ne!(a, b);
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.p_u, y.p_u);
        assert_eq!(x.frame, y.frame);
    }
}
