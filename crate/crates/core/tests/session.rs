//! Session lifecycle: determinism, lag and drain, export round trips.

use relief_core::base::Axis;
use relief_core::{
    height_span, load_mesh, prepare_session, save_mesh, synth, BaseSurface, MeshFormat, PointCloud,
    ReliefParams, Session, SessionConfig, Vector3,
};

fn session(cloud: &PointCloud, controls: usize, reference_mode: bool) -> Session {
    let cfg = SessionConfig {
        controls,
        reference_mode,
        ..Default::default()
    };
    prepare_session(cloud, Vector3::z(), &cfg).unwrap()
}

fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

fn mesh_bytes(s: &mut Session, format: MeshFormat) -> Vec<u8> {
    let mut out = Vec::new();
    save_mesh(&s.export_mesh().unwrap(), &mut out, format).unwrap();
    out
}

#[test]
fn unchanged_params_repeat_geometry() {
    let mut s = session(&synth::bumpy(80, 1.0), 800, false);
    let p = ReliefParams {
        alpha: 2.0,
        ..Default::default()
    };
    s.adjust(&p).unwrap();
    let a = s.adjust(&p).unwrap();
    let b = s.adjust(&p).unwrap();
    assert_eq!(bits(&a.z), bits(&b.z));
    assert_eq!(a.normals, b.normals);
    assert!(b.seq > a.seq);
}

#[test]
fn doubling_alpha_lowers_spans() {
    let mut s = session(&synth::hemisphere(20_000, 1.0), 2000, false);
    let mut spans = vec![s.last_frame().span];
    for alpha in [8.0, 16.0] {
        let f = s
            .adjust(&ReliefParams {
                alpha,
                ..Default::default()
            })
            .unwrap();
        spans.push(f.span);
    }
    assert!(spans.windows(2).all(|w| w[1] <= w[0]), "{spans:?}");
}

#[test]
fn gamma_step_adds_exact_detail() {
    let mut s = session(&synth::bumpy(100, 1.0), 1000, true);
    let flat = ReliefParams {
        gamma: 0.0,
        ..Default::default()
    };
    let z0 = s.adjust(&flat).unwrap().z.to_vec();
    let z1 = s
        .adjust(&ReliefParams { gamma: 0.1, ..flat })
        .unwrap()
        .z
        .to_vec();
    let curv = &s.prepared().curvature;
    let h = height_span(&z0, &s.reference().z_base);
    assert!(h > 0.0);
    for i in 0..z0.len() {
        let inc = if curv.degenerate[i] {
            0.0
        } else {
            0.1 * h * curv.k_norm[i]
        };
        assert_eq!(z1[i].to_bits(), (z0[i] + inc).to_bits());
    }
}

#[test]
fn export_reflects_latest_params() {
    let cloud = synth::hemisphere(8000, 1.0);
    let mut piped = session(&cloud, 800, false);
    let mut direct = session(&cloud, 800, true);
    let p = ReliefParams {
        alpha: 9.0,
        beta: 0.2,
        gamma: 0.05,
        base: BaseSurface::Wave {
            amp: 0.02,
            freq: 2.0,
            axis: Axis::Y,
        },
    };
    let lagged = piped.adjust(&p).unwrap();
    let current = direct.adjust(&p).unwrap();
    assert_ne!(bits(&lagged.z), bits(&current.z));
    let mesh = piped.export_mesh().unwrap();
    let z: Vec<f64> = mesh.vertices().iter().map(|v| v.z).collect();
    assert_eq!(bits(&z), bits(&current.z));
    assert_eq!(mesh.normals(), &current.normals[..]);
}

#[test]
fn export_round_trip_is_stable() {
    let cloud = synth::bumpy(90, 1.0);
    let p = ReliefParams {
        alpha: 3.0,
        ..Default::default()
    };
    for format in [MeshFormat::Ply, MeshFormat::Obj] {
        let mut a = session(&cloud, 900, false);
        a.adjust(&p).unwrap();
        let first = mesh_bytes(&mut a, format);
        let again = mesh_bytes(&mut a, format);
        assert_eq!(first, again);

        let reloaded = load_mesh(&first[..], format).unwrap();
        let mut resaved = Vec::new();
        save_mesh(&reloaded, &mut resaved, format).unwrap();
        assert_eq!(first, resaved);

        let mut b = session(&cloud, 900, false);
        b.adjust(&p).unwrap();
        assert_eq!(first, mesh_bytes(&mut b, format));
    }
}

#[test]
fn prepared_state_survives_many_adjusts() {
    let mut s = session(&synth::hemisphere(3000, 1.0), 300, false);
    let fp = s.prepared_fingerprint();
    let order = s.prepared().system.ordering();
    let mut seq = s.last_frame().seq;
    for i in 0..1000 {
        let f = s
            .adjust(&ReliefParams {
                alpha: 0.5 + (i % 17) as f64,
                beta: (i % 5) as f64 * 0.1,
                gamma: (i % 3) as f64 * 0.02,
                ..Default::default()
            })
            .unwrap();
        assert!(f.seq > seq);
        seq = f.seq;
        let t = f.timings;
        assert!(t.solve_ms >= 0.0 && t.map_ms >= 0.0 && t.normals_ms >= 0.0);
    }
    assert_eq!(s.prepared_fingerprint(), fp);
    assert_eq!(s.prepared().system.ordering(), order);
}

#[test]
fn large_hemisphere_smoke() {
    let s = session(&synth::hemisphere(50_000, 1.0), 8000, false);
    let sol = s.solution();
    let oracle = sol
        .z_hat
        .iter()
        .zip(&sol.z_base)
        .map(|(z, b)| z - b)
        .fold(0.0f64, f64::max);
    assert!(s.last_frame().span > 0.0);
    assert_eq!(s.last_frame().span, oracle);
    assert!(s.last_frame().normals.iter().all(|n| n.z > 0.0));
}

#[test]
fn prepare_is_deterministic() {
    let cloud = synth::bumpy(70, 1.0);
    let a = session(&cloud, 700, false);
    let b = session(&cloud, 700, false);
    assert_eq!(a.prepared_fingerprint(), b.prepared_fingerprint());
    assert_eq!(a.prepared().controls.indices, b.prepared().controls.indices);
    assert_eq!(bits(&a.last_frame().z), bits(&b.last_frame().z));
}

#[test]
fn base_change_moves_the_floor() {
    let mut s = session(&synth::hemisphere(6000, 1.0), 600, true);
    let base = BaseSurface::Plane { z0: 0.5 };
    let f = s
        .adjust(&ReliefParams {
            gamma: 0.0,
            base: base.clone(),
            ..Default::default()
        })
        .unwrap();
    let prep = s.prepared();
    for (i, &b) in prep.boundary.is_boundary.iter().enumerate() {
        if b {
            assert!((f.z[i] - 0.5).abs() <= 0.01 * f.span.max(1e-9));
        }
    }
    assert_eq!(s.reference().base, base);
}
