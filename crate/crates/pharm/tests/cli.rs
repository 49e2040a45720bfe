use std::f64::consts::TAU;
use std::path::Path;
use std::process::Command;
use std::sync::Arc;

use pharm::cli::*;
use pharm::geometry::{Circle, CircularDomain, Pt};
use pharm::mesh::{mesh_circular_domain, DiscreteMap, TriMesh};
use pharm::Error;

fn unit_disk() -> CircularDomain {
    CircularDomain::disk(Circle::unit())
}

fn disk_mesh(h: f64) -> Arc<TriMesh> {
    Arc::new(mesh_circular_domain(&unit_disk(), h).unwrap())
}

fn vertex_at(mesh: &TriMesh, z: Pt) -> usize {
    let (i, d) = mesh
        .vertices
        .iter()
        .enumerate()
        .map(|(i, w)| (i, (w - z).norm()))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    assert!(d < 1e-12, "no vertex at {z}");
    i
}

fn cfg(scenario: &str, dir: &Path) -> RunConfig {
    RunConfig { scenario: scenario.into(), out_dir: dir.to_path_buf(), ..Default::default() }
}

#[test]
fn mobius_sequence_examples() {
    let mesh = disk_mesh(0.05);
    let first = mobius_sequence(1, mesh.clone()).unwrap();
    assert_eq!(first.values, mesh.vertices);

    let origin = vertex_at(&mesh, Pt::new(0.0, 0.0));
    let minus = vertex_at(&mesh, Pt::new(-1.0, 0.0));
    let plus = vertex_at(&mesh, Pt::new(1.0, 0.0));
    let h4 = mobius_sequence(4, mesh.clone()).unwrap();
    assert!((h4.values[origin] - Pt::new(0.75, 0.0)).norm() < 1e-15);
    for k in 1..=8 {
        let h = mobius_sequence(k, mesh.clone()).unwrap();
        assert_eq!(h.values[minus], Pt::new(-1.0, 0.0), "k = {k}");
        assert_eq!(h.values[plus], Pt::new(1.0, 0.0), "k = {k}");
    }
    assert!(matches!(mobius_sequence(0, mesh), Err(Error::Config(_))));
}

#[test]
fn mobius_collapse_keeps_energy() {
    let rep = mobius_collapse_demo(5, 0.05).unwrap();
    assert_eq!(rep.rows.len(), 5);
    for r in &rep.rows {
        assert!((r.energy - TAU).abs() < 0.01 * TAU, "k = {}: energy {}", r.k, r.energy);
        // the gradient of a constant vanishes, so the gap equals the energy
        assert!((r.strong_gap - r.energy).abs() < 1e-12 * r.energy);
        assert!((r.sup_dist - 2.0).abs() < 1e-6);
    }
    assert!(rep.sup_dist_nonincreasing);
    assert!(rep.energy_rel_err < 0.01 && rep.strong_gap_rel_err < 0.01 && rep.sup_dist_err < 1e-6);
    let csv = rep.to_csv();
    assert_eq!(csv.lines().count(), 6);
    assert!(matches!(mobius_collapse_demo(2, 0.05), Err(Error::Config(_))));
}

#[test]
fn puncture_examples() {
    let mesh = disk_mesh(0.05);
    let id = DiscreteMap::identity(mesh.clone(), 2.0, unit_disk()).unwrap();
    let rot = Pt::from_polar(1.0, 0.7);
    let turned = DiscreteMap::from_fn(mesh.clone(), 2.0, unit_disk(), |z| z * rot).unwrap();
    let rep = puncture_normalization_check(&[id.clone(), turned], 3.0).unwrap();
    let (a, b) = (&rep.maps[0], &rep.maps[1]);
    assert!(a.fitted_c.is_finite() && a.fitted_c > 0.0);
    assert!((a.energy - b.energy).abs() < 1e-12 * a.energy);
    assert!((a.fitted_c - b.fitted_c).abs() < 1e-9 * a.fitted_c);
    assert_eq!(a.violations, 0);
    assert!(a.predicted > 0);

    for z in [Pt::new(1.0, 0.0), Pt::new(0.0, 1.5), Pt::new(-2.0, 1.0), Pt::from_polar(2.9, 4.0)] {
        let w = inversion_extension(&id, z).unwrap();
        assert!((w - z).norm() < 1e-12 * z.norm(), "{z} -> {w}");
    }
    assert!(inversion_extension(&id, Pt::new(0.5, 0.0)).is_none());

    let moved = mobius_sequence(3, mesh).unwrap();
    assert!(matches!(puncture_normalization_check(&[moved], 3.0), Err(Error::Precondition(_))));
    assert!(matches!(puncture_normalization_check(&[id], 1.0), Err(Error::Config(_))));
}

#[test]
fn config_merging() {
    let base = RunConfig::default();
    let merged = base.merge_json(r#"{"p": 3.0, "rho": [0.3], "k": 7}"#).unwrap();
    assert_eq!(merged.p, 3.0);
    assert_eq!(merged.rho, vec![0.3]);
    assert_eq!(merged.k, 7);
    assert_eq!(merged.mesh_edge, base.mesh_edge);
    assert!(matches!(base.merge_json(r#"{"colour": 1}"#), Err(Error::Config(_))));
    assert!(matches!(base.merge_json("[1, 2]"), Err(Error::Config(_))));
    assert!(base.merge_json("{").is_err());
}

#[test]
fn run_rejects_bad_configs() {
    let dir = tempfile::tempdir().unwrap();
    let bad = [
        cfg("bogus", dir.path()),
        RunConfig { p: 1.5, ..cfg("solve", dir.path()) },
        RunConfig { mesh_edge: 0.0, ..cfg("mesh", dir.path()) },
        RunConfig { k: 2, ..cfg("mobius", dir.path()) },
    ];
    for c in &bad {
        let err = run(c).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
        assert_eq!(err.exit_code(), 2);
    }
}

#[test]
fn mobius_run_writes_rows_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let summary = run(&RunConfig { k: 5, ..cfg("mobius", dir.path()) }).unwrap();
    assert_eq!(summary.schema, 1);
    let csv = std::fs::read_to_string(dir.path().join("mobius.csv")).unwrap();
    let mut rd = csv::Reader::from_reader(csv.as_bytes());
    assert_eq!(rd.records().count(), 5);
    let on_disk: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(on_disk["schema"], 1);
    assert_eq!(on_disk["sha256"]["mobius.csv"], serde_json::Value::String(file_digest(&dir.path().join("mobius.csv")).unwrap()));
}

#[test]
fn same_seed_same_bytes() {
    for scenario in ["replace", "sweep"] {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let c = RunConfig { mesh_edge: 0.08, seed: 11, rho: vec![0.4], ..cfg(scenario, a.path()) };
        let first = run(&c).unwrap();
        let second = run(&RunConfig { out_dir: b.path().to_path_buf(), ..c.clone() }).unwrap();
        assert!(!first.sha256.is_empty());
        assert_eq!(first.sha256, second.sha256, "{scenario}");
        let third = run(&RunConfig { seed: 12, out_dir: b.path().to_path_buf(), ..c }).unwrap();
        assert_ne!(first.sha256, third.sha256, "{scenario}");
    }
}

#[test]
fn binary_flags_env_and_exit_codes() {
    let exe = env!("CARGO_BIN_EXE_pharm");
    let flagged = tempfile::tempdir().unwrap();
    let env_dir = tempfile::tempdir().unwrap();

    let st = Command::new(exe)
        .args(["demo", "mobius", "--K", "5", "--mesh-edge", "0.1", "--out"])
        .arg(flagged.path())
        .env_remove(OUT_DIR_ENV)
        .output()
        .unwrap();
    assert_eq!(st.status.code(), Some(0), "{}", String::from_utf8_lossy(&st.stderr));
    let csv = std::fs::read_to_string(flagged.path().join("mobius.csv")).unwrap();
    assert_eq!(csv.lines().count(), 6);

    // the environment override wins over --out
    let st = Command::new(exe)
        .args(["run", "mobius", "--K", "3", "--mesh-edge", "0.1", "--out"])
        .arg(flagged.path().join("unused"))
        .env(OUT_DIR_ENV, env_dir.path())
        .output()
        .unwrap();
    assert_eq!(st.status.code(), Some(0), "{}", String::from_utf8_lossy(&st.stderr));
    assert!(env_dir.path().join("summary.json").exists());
    assert!(!flagged.path().join("unused").exists());

    // the config file overrides flags
    let conf = flagged.path().join("conf.json");
    std::fs::write(&conf, r#"{"k": 4}"#).unwrap();
    let again = flagged.path().join("again");
    let st = Command::new(exe)
        .args(["demo", "mobius", "--K", "9", "--mesh-edge", "0.1", "--config"])
        .arg(&conf)
        .arg("--out")
        .arg(&again)
        .env_remove(OUT_DIR_ENV)
        .output()
        .unwrap();
    assert_eq!(st.status.code(), Some(0), "{}", String::from_utf8_lossy(&st.stderr));
    assert_eq!(std::fs::read_to_string(again.join("mobius.csv")).unwrap().lines().count(), 5);

    let out = Command::new(exe).args(["run", "nonsense"]).env_remove(OUT_DIR_ENV).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown scenario"));

    let out = Command::new(exe)
        .args(["demo", "mobius", "--config"])
        .arg(flagged.path().join("missing.json"))
        .env_remove(OUT_DIR_ENV)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
