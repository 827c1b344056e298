//! End-to-end behaviour of the `visfield` binary: artifacts, exit codes, determinism.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sha2::{Digest, Sha256};
use tempfile::TempDir;
use visfield::field::decode_model;
use visfield::geom::io::save_mesh;
use visfield::geom::shapes;
use visfield::image::{load_image, save_image, Image};
use visfield::Vec3;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_visfield"));
    c.env_remove("VISFIELD_THREADS").env("RUST_LOG", "error");
    c
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn sha(path: impl AsRef<Path>) -> String {
    let bytes = std::fs::read(path).unwrap();
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn scene() -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    save_mesh(&shapes::icosphere(3, 0.5), dir.path().join("sphere.ply")).unwrap();
    save_mesh(&shapes::two_box_scene(), dir.path().join("boxes.obj")).unwrap();
    std::fs::write(
        dir.path().join("light.json"),
        r#"{"sh": [[1,0,0,0.6,0,0,0,0,0],[1,0,0,0.6,0,0,0,0,0],[1,0,0,0.6,0,0,0,0,0]]}"#,
    )
    .unwrap();
    dir
}

/// Small bake + short training run shared by several tests.
fn small_model(dir: &Path, epochs: &str) -> PathBuf {
    ok(dir, &["bake", "--mesh", "sphere.ply", "--out", "s.vfld", "--near", "600", "--uniform", "200", "--surface", "200", "--directions", "32", "--seed", "3"]);
    ok(dir, &["train", "--data", "s.vfld", "--mesh", "sphere.ply", "--epochs", epochs, "--hidden", "32", "--view-size", "32", "--out", "s.vfmd", "--curve", "s.csv", "--seed", "3"]);
    dir.join("s.vfmd")
}

#[test]
fn bake_defaults_and_seeded_repeat() {
    let d = scene();
    let p = d.path();
    let stdout = ok(p, &["bake", "--mesh", "sphere.ply", "--out", "a.vfld", "--seed", "5"]);
    assert!(stdout.contains("6000 samples"), "{stdout}");
    ok(p, &["bake", "--mesh", "sphere.ply", "--out", "b.vfld", "--seed", "5"]);
    assert_eq!(sha(p.join("a.vfld")), sha(p.join("b.vfld")));
    let manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(p.join("a.vfld.json")).unwrap()).unwrap();
    assert_eq!(manifest["samples"], 6000);
    assert_eq!(manifest["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 16);
}

#[test]
fn missing_mesh_is_a_usage_error_naming_the_path() {
    let d = scene();
    let out = run(d.path(), &["bake", "--mesh", "nowhere.ply", "--out", "x.vfld"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("nowhere.ply"));
}

#[test]
fn train_smoke_run_writes_model_and_curve() {
    let d = scene();
    let p = d.path();
    let model = small_model(p, "2");
    let csv = std::fs::read_to_string(p.join("s.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert!(lines[0].starts_with("# visfield"));
    assert_eq!(lines[1], "epoch,lr,total,visibility,transfer,occupancy,albedo,near_surface_accuracy");
    assert_eq!(lines.len(), 4);
    let m = decode_model(&std::fs::read(&model).unwrap()).unwrap();
    assert_eq!(m.arch.directions, 32);
    assert_eq!(m.loss_weights.transfer, 1.0);

    ok(p, &["train", "--data", "s.vfld", "--mesh", "sphere.ply", "--epochs", "1", "--hidden", "32", "--view-size", "32", "--no-transfer-loss", "--out", "nt.vfmd", "--curve", "nt.csv"]);
    let m = decode_model(&std::fs::read(p.join("nt.vfmd")).unwrap()).unwrap();
    assert_eq!(m.loss_weights.transfer, 0.0);
}

#[test]
fn diverging_training_exits_with_numeric_failure() {
    let d = scene();
    let p = d.path();
    ok(p, &["bake", "--mesh", "sphere.ply", "--out", "s.vfld", "--near", "100", "--uniform", "50", "--surface", "50", "--directions", "16"]);
    let out = run(p, &["train", "--data", "s.vfld", "--mesh", "sphere.ply", "--epochs", "5", "--hidden", "8", "--view-size", "16", "--base-lr", "1e299", "--max-lr", "1e300", "--out", "m.vfmd", "--curve", "m.csv"]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!p.join("m.vfmd").exists());
}

#[test]
fn reconstruct_validates_resolution_and_is_deterministic() {
    let d = scene();
    let p = d.path();
    small_model(p, "3");
    for res in ["4", "4096"] {
        let out = run(p, &["reconstruct", "--model", "s.vfmd", "--mesh", "sphere.ply", "--res", res, "--out", "r.ply"]);
        assert_eq!(code(&out), 2);
    }
    let a = ok(p, &["--threads", "1", "reconstruct", "--model", "s.vfmd", "--mesh", "sphere.ply", "--res", "24", "--out", "a.ply"]);
    ok(p, &["--threads", "1", "reconstruct", "--model", "s.vfmd", "--mesh", "sphere.ply", "--res", "24", "--out", "b.ply"]);
    assert!(a.contains("faces"));
    assert_eq!(sha(p.join("a.ply")), sha(p.join("b.ply")));
}

#[test]
fn relight_needs_a_light_and_flat_plane_renders_flat() {
    let d = scene();
    let p = d.path();
    // open plane facing the first rig camera, which sits on +x
    let plane = shapes::grid_plane(8, 1.0).transformed(|v| Vec3::new(0.0, v.x, v.y), |n| Vec3::new(n.z, n.x, n.y));
    save_mesh(&plane, p.join("plane.obj")).unwrap();
    let out = run(p, &["relight", "--mesh", "plane.obj", "--oracle", "--out-dir", "r"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("--light"));

    // constant light: only the DC term
    std::fs::write(p.join("const.json"), r#"{"sh": [[1,0,0,0,0,0,0,0,0],[1,0,0,0,0,0,0,0,0],[1,0,0,0,0,0,0,0,0]]}"#).unwrap();
    ok(p, &["relight", "--mesh", "plane.obj", "--oracle", "--light", "const.json", "--out-dir", "r", "--num-views", "1", "--view-size", "32"]);
    let img = load_image(p.join("r/relight_0.pfm")).unwrap();
    let mask = load_image(p.join("r/mask_0.pfm")).unwrap();
    let lit: Vec<f64> = (0..img.height)
        .flat_map(|y| (0..img.width).map(move |x| (x, y)))
        .filter(|&(x, y)| mask.get(x, y, 0) > 0.0)
        .map(|(x, y)| img.get(x, y, 0))
        .collect();
    assert!(!lit.is_empty());
    let spread = lit.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - lit.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(spread < 1e-9, "spread {spread}");
}

#[test]
fn eval_identities_and_mismatch() {
    let d = scene();
    let p = d.path();
    ok(p, &["eval", "geometry", "--pred", "sphere.ply", "--gt", "sphere.ply", "--samples", "20000", "--out", "g.json"]);
    let g: serde_json::Value = serde_json::from_slice(&std::fs::read(p.join("g.json")).unwrap()).unwrap();
    assert_eq!(g["nc"], 1.0);
    assert_eq!(g["f_score"], 1.0);
    assert!(g["cd_l1"].as_f64().unwrap() < 1e-6);
    assert!(g["config_hash"].is_string());

    let mut img = Image::new(8, 6, 3);
    for (i, v) in img.data.iter_mut().enumerate() {
        *v = (i % 7) as f64 / 7.0;
    }
    save_image(&img, p.join("a.pfm")).unwrap();
    save_image(&Image::new(6, 8, 3), p.join("b.pfm")).unwrap();
    let s = ok(p, &["eval", "image", "--pred", "a.pfm", "--gt", "a.pfm"]);
    let r: serde_json::Value = serde_json::from_str(&s).unwrap();
    assert_eq!(r["psnr"], 99.0);
    assert_eq!(r["ssim"], 1.0);
    let out = run(p, &["eval", "image", "--pred", "a.pfm", "--gt", "b.pfm"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn interp_acc_list_handling_and_determinism() {
    let d = scene();
    let p = d.path();
    for empty in [&["--n"][..], &["--n", ""][..]] {
        let out = run(p, &[&["interp-acc", "--mesh", "boxes.obj", "--out", "x.csv"][..], empty].concat());
        assert_eq!(code(&out), 2);
    }
    let args = ["interp-acc", "--mesh", "boxes.obj", "--n", "8,64", "--points", "200", "--test-dirs", "64", "--seed", "9"];
    ok(p, &[&args[..], &["--out", "a.csv"]].concat());
    ok(p, &[&args[..], &["--out", "b.csv"]].concat());
    let a = std::fs::read_to_string(p.join("a.csv")).unwrap();
    assert_eq!(a, std::fs::read_to_string(p.join("b.csv")).unwrap());
    let acc: Vec<f64> = a.lines().skip(2).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(acc.len(), 2);
    assert!(acc[1] >= acc[0], "{acc:?}");
}

#[test]
fn thread_count_comes_from_the_environment() {
    let d = scene();
    let out = bin()
        .current_dir(d.path())
        .env("VISFIELD_THREADS", "0")
        .args(["bake", "--mesh", "sphere.ply", "--out", "x.vfld"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);
    let out = bin()
        .current_dir(d.path())
        .env("VISFIELD_THREADS", "1")
        .args(["bake", "--mesh", "sphere.ply", "--out", "x.vfld", "--near", "10", "--uniform", "10", "--surface", "10"])
        .output()
        .unwrap();
    assert!(out.status.success());
}

#[test]
fn overfit_sphere_reconstructs_closed_and_relights_like_the_oracle() {
    let d = scene();
    let p = d.path();
    // Painted so both relights shade with the mesh albedo and differ only in visibility.
    let sphere = shapes::icosphere(3, 0.5);
    let n = sphere.vertices.len();
    save_mesh(&sphere.with_albedo(vec![[0.8, 0.6, 0.4]; n]).unwrap(), p.join("painted.ply")).unwrap();
    ok(p, &["bake", "--mesh", "painted.ply", "--out", "o.vfld", "--near", "1500", "--uniform", "500", "--surface", "500", "--seed", "2"]);
    ok(p, &["train", "--data", "o.vfld", "--mesh", "painted.ply", "--epochs", "80", "--batch-size", "256", "--view-size", "64", "--out", "o.vfmd", "--curve", "o.csv", "--seed", "2"]);

    ok(p, &["reconstruct", "--model", "o.vfmd", "--mesh", "painted.ply", "--res", "64", "--out", "o.ply"]);
    let mesh = visfield::geom::io::load_mesh(p.join("o.ply")).unwrap();
    assert!(mesh.is_watertight(), "{} open edges", mesh.open_edge_count());

    for (dir, source) in [("model", &["--model", "o.vfmd"][..]), ("oracle", &["--oracle"][..])] {
        let args = [&["relight", "--mesh", "painted.ply", "--light", "light.json", "--view-size", "64", "--out-dir", dir][..], source].concat();
        ok(p, &args);
    }
    for i in 0..4 {
        let a = load_image(p.join(format!("model/relight_{i}.pfm"))).unwrap();
        let b = load_image(p.join(format!("oracle/relight_{i}.pfm"))).unwrap();
        let diff = a.mean_abs_diff(&b).unwrap();
        assert!(diff < 0.05, "view {i}: mean absolute difference {diff}");
    }
}
