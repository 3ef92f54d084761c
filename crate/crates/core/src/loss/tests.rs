use super::*;
use crate::body::{build_humanoid, HumanoidConfig, Pose};
use crate::geom::{LocalFrame, Mat3, SurfacePoint};
use crate::model::{Ablations, ClosetModel, ModelConfig};
use crate::net::EncoderConfig;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sample(x: Vec3, n: Vec3, r_g: Vec3, r_p: Vec3) -> DeformationSample {
    DeformationSample {
        sp: SurfacePoint::new(0, [1.0, 0.0, 0.0]).unwrap(),
        p_t: Vec3::zeros(),
        p_u: Vec3::zeros(),
        frame: LocalFrame {
            rotation: Mat3::identity(),
            origin: Vec3::zeros(),
        },
        r_g,
        r_p,
        normal_local: n,
        x_world: x,
        n_world: n,
    }
}

fn unit(rng: &mut ChaCha8Rng) -> Vec3 {
    let v = Vec3::new(
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
    );
    v / v.norm()
}

fn point(rng: &mut ChaCha8Rng) -> Vec3 {
    Vec3::new(
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
    )
}

#[test]
fn coincident_points_and_normals_give_zero() {
    let z = Vec3::z();
    let pts = [Vec3::zeros(), Vec3::x(), Vec3::y()];
    let pred: Vec<_> = pts
        .iter()
        .map(|&p| sample(p, z, Vec3::zeros(), Vec3::zeros()))
        .collect();
    let scan = PointCloud::new(pts.to_vec(), Some(vec![z; 3])).unwrap();
    assert_eq!(data_loss(&pred, &scan).unwrap(), (0.0, 0.0));
}

#[test]
fn flipped_normal_costs_two() {
    let pred = [sample(
        Vec3::zeros(),
        Vec3::z(),
        Vec3::zeros(),
        Vec3::zeros(),
    )];
    let scan = PointCloud::new(vec![Vec3::zeros()], Some(vec![-Vec3::z()])).unwrap();
    assert_eq!(data_loss(&pred, &scan).unwrap(), (0.0, 2.0));
}

#[test]
fn missing_normals_is_an_error() {
    let pred = [sample(
        Vec3::zeros(),
        Vec3::z(),
        Vec3::zeros(),
        Vec3::zeros(),
    )];
    let scan = PointCloud::from_positions(vec![Vec3::zeros()]);
    assert!(matches!(
        data_loss(&pred, &scan),
        Err(LossError::MissingNormals)
    ));
}

#[test]
fn data_loss_matches_double_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let pred: Vec<_> = (0..200)
        .map(|_| {
            sample(
                point(&mut rng),
                unit(&mut rng),
                Vec3::zeros(),
                Vec3::zeros(),
            )
        })
        .collect();
    let sp: Vec<Vec3> = (0..170).map(|_| point(&mut rng)).collect();
    let sn: Vec<Vec3> = (0..170).map(|_| unit(&mut rng)).collect();
    let scan = PointCloud::new(sp.clone(), Some(sn.clone())).unwrap();

    let mut fwd = 0.0;
    let mut nml = 0.0;
    for s in &pred {
        let mut best = (f64::INFINITY, 0);
        for (j, q) in sp.iter().enumerate() {
            let d = (s.x_world - q).norm_squared();
            if d < best.0 {
                best = (d, j);
            }
        }
        fwd += best.0;
        let d = s.n_world - sn[best.1];
        nml += d.x.abs() + d.y.abs() + d.z.abs();
    }
    let mut bwd = 0.0;
    for q in &sp {
        bwd += pred
            .iter()
            .map(|s| (s.x_world - q).norm_squared())
            .fold(f64::INFINITY, f64::min);
    }
    let want = (fwd / 200.0 + bwd / 170.0, nml / 200.0);
    let got = data_loss(&pred, &scan).unwrap();
    assert!((got.0 - want.0).abs() < 1e-9 && (got.1 - want.1).abs() < 1e-9);
}

#[test]
fn regularization_examples() {
    let zero = [sample(
        Vec3::zeros(),
        Vec3::z(),
        Vec3::zeros(),
        Vec3::zeros(),
    )];
    assert_eq!(regularization(&zero, &Tensor::zeros(4, 2)), (0.0, 0.0, 0.0));
    let one = [sample(Vec3::zeros(), Vec3::z(), Vec3::x(), Vec3::y())];
    let (t, p, _) = regularization(&one, &Tensor::zeros(1, 1));
    assert_eq!((t, p), (2.0, 1.0));
}

#[test]
fn regularization_matches_direct_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let pred: Vec<_> = (0..37)
        .map(|_| sample(Vec3::zeros(), Vec3::z(), point(&mut rng), point(&mut rng)))
        .collect();
    let code = Tensor::from_vec(
        11,
        3,
        (0..33).map(|_| rng.random_range(-1.0..1.0)).collect(),
    );
    let (t, p, c) = regularization(&pred, &code);
    let mut st = 0.0;
    let mut sp = 0.0;
    for s in &pred {
        let r = s.r_g + s.r_p;
        st += r.x * r.x + r.y * r.y + r.z * r.z;
        sp += s.r_p.x * s.r_p.x + s.r_p.y * s.r_p.y + s.r_p.z * s.r_p.z;
    }
    let mut sc = 0.0;
    for r in 0..11 {
        sc += code.row(r).iter().map(|x| x * x).sum::<f64>();
    }
    assert!(
        (t - st / 37.0).abs() < 1e-12
            && (p - sp / 37.0).abs() < 1e-12
            && (c - sc / 11.0).abs() < 1e-12
    );
}

#[test]
fn schedule_switches_normal_term_on_at_epoch_250_of_400() {
    let w = LossWeights::default();
    let report = LossReport {
        normal: 1.0,
        ..Default::default()
    };
    assert_eq!(total_loss(&report, &w, 0, 400), 0.0);
    assert_eq!(total_loss(&report, &w, 249, 400), 0.0);
    assert_eq!(total_loss(&report, &w, 250, 400), 0.1);
    assert_eq!(total_loss(&LossReport::default(), &w, 300, 400), 0.0);
}

#[test]
fn default_weights() {
    let w = LossWeights::default();
    assert_eq!(
        (
            w.point,
            w.normal,
            w.regularization,
            w.pose_displacement,
            w.code,
            w.normal_start_fraction
        ),
        (2e4, 0.1, 2e3, 1.0, 5e-4, 0.625)
    );
    assert!(w.validate().is_ok());
    assert!(LossWeights { normal: -1.0, ..w }.validate().is_err());
}

#[test]
fn recorded_chamfer_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x: Vec<f64> = (0..30).map(|_| rng.random_range(-1.0..1.0)).collect();
    let scan: Vec<Vec3> = (0..13).map(|_| point(&mut rng)).collect();
    let eval = |x: &[f64]| {
        let mut tape = Tape::new();
        let v = tape.constant(Tensor::from_vec(10, 3, x.to_vec()));
        let (c, _) = record_chamfer(&mut tape, v, &scan).unwrap();
        (tape.value(c).item(), tape.value(v).clone())
    };
    // gradient of the scalar wrt a constant leaf via a parameter store
    let mut store = crate::net::ParameterStore::new(0);
    let id = store.add_zeros("x", 10, 3).unwrap();
    store.value_mut(id).data_mut().copy_from_slice(&x);
    let mut tape = Tape::new();
    let v = tape.param(&store, id);
    let (c, _) = record_chamfer(&mut tape, v, &scan).unwrap();
    let g = tape.backward(c).unwrap();
    let h = 1e-6;
    for k in 0..30 {
        let mut up = x.clone();
        up[k] += h;
        let mut dn = x.clone();
        dn[k] -= h;
        let fd = (eval(&up).0 - eval(&dn).0) / (2.0 * h);
        assert!((fd - g.get(id).unwrap().data()[k]).abs() < 1e-6);
    }
}

proptest! {
    #[test]
    fn loss_terms_are_nonnegative_and_order_free(seed in 0u64..1000, m in 1usize..40, s in 1usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pred: Vec<_> = (0..m).map(|_| sample(point(&mut rng), unit(&mut rng), point(&mut rng), point(&mut rng))).collect();
        let sp: Vec<Vec3> = (0..s).map(|_| point(&mut rng)).collect();
        let sn: Vec<Vec3> = (0..s).map(|_| unit(&mut rng)).collect();
        let scan = PointCloud::new(sp.clone(), Some(sn.clone())).unwrap();
        let (c, n) = data_loss(&pred, &scan).unwrap();
        prop_assert!(c >= 0.0 && n >= 0.0);
        let (a, b, d) = regularization(&pred, &Tensor::zeros(2, 2));
        prop_assert!(a >= 0.0 && b >= 0.0 && d >= 0.0);

        let mut rp = pred.clone();
        rp.reverse();
        let rscan = PointCloud::new(sp.iter().rev().copied().collect(), Some(sn.iter().rev().copied().collect())).unwrap();
        let (c2, n2) = data_loss(&rp, &rscan).unwrap();
        prop_assert!((c - c2).abs() < 1e-12);
        prop_assert!((n - n2).abs() < 1e-12);
    }
}

fn tiny_model() -> ClosetModel {
    let body = build_humanoid(&HumanoidConfig {
        around: 6,
        rings: 2,
        ..Default::default()
    })
    .unwrap();
    let counts: Vec<usize> = EncoderConfig::counts_for(body.vertex_count())
        .into_iter()
        .take(2)
        .collect();
    let enc = EncoderConfig {
        abstraction_counts: counts,
        neighbors: 8,
        widths: vec![6, 6],
        output: 6,
    };
    let config = ModelConfig {
        pose_encoder: enc.clone(),
        garment_encoder: enc,
        code_width: 4,
        decoder_hidden: vec![8; 4],
        ablations: Ablations::default(),
        ..ModelConfig::for_vertices(body.vertex_count())
    };
    let mut m = ClosetModel::new(body, config).unwrap();
    m.ensure_outfit("a").unwrap();
    m
}

#[test]
fn pose_penalty_does_not_reach_the_garment_decoder() {
    let m = tiny_model();
    let pts = crate::geom::sample_surface(&m.body().mesh, 40, 1).unwrap();
    let mut tape = Tape::new();
    let g = m.garment_features(&mut tape, "a").unwrap();
    let rec = m
        .record(
            &mut tape,
            g,
            &Pose::identity(m.body().skeleton.joint_count()),
            &pts,
        )
        .unwrap();
    let loss = tape.mean_sq_norm(rec.r_p);
    let grads = tape.backward(loss).unwrap();
    for l in m.garment_decoder().unwrap().layers() {
        for id in [l.weight, l.bias] {
            assert!(grads
                .get(id)
                .map_or(true, |t| t.data().iter().all(|&x| x == 0.0)));
        }
    }
    let pose_grad: f64 = m
        .pose_decoder()
        .layers()
        .iter()
        .map(|l| grads.get(l.weight).unwrap().sum_sq())
        .sum();
    assert!(pose_grad > 0.0);
}

#[test]
fn recorded_report_matches_sample_functions() {
    let m = tiny_model();
    let pts = crate::geom::sample_surface(&m.body().mesh, 60, 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let scan = PointCloud::new(
        (0..50).map(|_| point(&mut rng)).collect(),
        Some((0..50).map(|_| unit(&mut rng)).collect()),
    )
    .unwrap();
    let pose = Pose::identity(m.body().skeleton.joint_count());
    let mut tape = Tape::new();
    let g = m.garment_features(&mut tape, "a").unwrap();
    let rec = m.record(&mut tape, g, &pose, &pts).unwrap();
    let code = tape.param(m.store(), m.code_id("a").unwrap());
    let w = LossWeights::default();
    let (total, report) = record_loss(&mut tape, &rec, code, &scan, &w, true).unwrap();
    let samples = crate::model::samples_from(&tape, &rec);
    let (c, n) = data_loss(&samples, &scan).unwrap();
    let (rt, rp, rc) = regularization(&samples, m.store().value(m.code_id("a").unwrap()));
    assert!((report.chamfer - c).abs() < 1e-12 && (report.normal - n).abs() < 1e-12);
    assert!((report.rgl_total - rt).abs() < 1e-12 && (report.rgl_pose - rp).abs() < 1e-12);
    assert!((report.rgl_code - rc).abs() < 1e-15);
    let expect = total_loss(&report, &w, 399, 400);
    assert!((tape.value(total).item() - expect).abs() < 1e-9 * expect.max(1.0));
}
