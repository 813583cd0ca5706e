use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use alr_core::image::GrayImage;
use serde_json::json;

fn alr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_alr")).args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, value: &serde_json::Value) -> String {
    let p = dir.join(name);
    fs::write(&p, serde_json::to_string_pretty(value).unwrap()).unwrap();
    p.to_string_lossy().into_owned()
}

fn base() -> serde_json::Value {
    json!({
        "scene": {"preset": "bumpy", "resolution": 64, "seed": 1},
        "source": {"kind": "npl"},
        "ref_pose": [360, -40, 50],
        "init_pose": [310, 0, 35]
    })
}

#[test]
fn malformed_config_exits_two_with_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.json");
    fs::write(&p, "{\n  \"base\": {\n    \"scene\": 3\n  }\n}\n").unwrap();
    let out = alr(&["run", "--config", p.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3"), "{err}");
}

#[test]
fn unknown_preset_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let mut b = base();
    b["scene"]["preset"] = json!("marble");
    let p = write(dir.path(), "c.json", &json!({ "base": b }));
    let out = alr(&["run", "--config", &p, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("marble"));
}

#[test]
fn invalid_sweep_value_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "c.json", &json!({ "base": base(), "sweep": {"mu": [1.2, -1.0]} }));
    let out = alr(&["run", "--config", &p, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sweep run 1"));
}

#[test]
fn empty_sweep_writes_only_a_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("empty");
    let p = write(dir.path(), "c.json", &json!({ "base": base(), "sweep": {"seeds": []} }));
    let out = alr(&["run", "--config", &p, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("planned 0 runs"));
    let csv = fs::read_to_string(out_dir.join("summary.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1);
    assert!(!out_dir.join("runs").exists());
}

#[test]
fn sweep_writes_artifacts_and_report_reproduces_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("exp");
    let mut b = base();
    b["max_iter"] = json!(120);
    let p = write(dir.path(), "c.json", &json!({ "base": b, "sweep": {"mu": [1.0, 1.2, 2.5], "seeds": [1, 2]}, "parallel": 2 }));
    let out = alr(&["run", "--config", &p, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let run0 = out_dir.join("runs/0000");
    for f in ["config.json", "run.json", "report.json", "trajectory.csv", "reference.png", "best.png", "best.pgm", "ball.png"] {
        assert!(run0.join(f).exists(), "missing {f}");
    }
    let traj = alr_core::controller::trajectory_from_csv(&fs::read_to_string(run0.join("trajectory.csv")).unwrap()).unwrap();
    assert!(!traj.is_empty());
    let best = GrayImage::read_pgm16(fs::File::open(run0.join("best.pgm")).unwrap(), 1.0).unwrap();
    assert_eq!((best.width(), best.height()), (64, 64));

    let summary = fs::read_to_string(out_dir.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 4);
    assert!(summary.lines().nth(1).unwrap().starts_with("bumpy,1,0,0,2,0,2,"));
    assert!(summary.lines().nth(3).unwrap().starts_with("bumpy,2.5,0,0,2,0,0,"));
    fs::remove_file(out_dir.join("summary.csv")).unwrap();
    let again = alr(&["sweep-report", "--out", out_dir.to_str().unwrap()]);
    assert_eq!(again.status.code(), Some(0));
    assert_eq!(fs::read_to_string(out_dir.join("summary.csv")).unwrap(), summary);

    // The output directory is never overwritten.
    let clash = alr(&["run", "--config", &p, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(clash.status.code(), Some(1));
}

fn render(dir: &Path, name: &str, cfg: &serde_json::Value) -> String {
    let p = write(dir, &format!("{name}.json"), cfg);
    let out = dir.join(name);
    let o = alr(&["render", "--config", &p, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    out.to_string_lossy().into_owned()
}

#[test]
fn top_light_on_flat_scene_is_uniform() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({"scene": {"preset": "flat", "resolution": 32, "seed": 0}, "source": {"kind": "apl"}, "pose": [300, 0, 0]});
    let out = render(dir.path(), "flat.pgm", &cfg);
    let img = GrayImage::read_pgm16(fs::File::open(&out).unwrap(), 1.0).unwrap();
    let first = img.data()[0];
    assert!(first > 0.9);
    assert!(img.data().iter().all(|v| *v == first));
    let side: serde_json::Value = serde_json::from_str(&fs::read_to_string(format!("{out}.json")).unwrap()).unwrap();
    assert_eq!(side["format"], "pgm16");
    assert_eq!(side["width"], 32);
}

#[test]
fn small_surface_source_renders_like_a_point() {
    let dir = tempfile::tempdir().unwrap();
    let scene = json!({"preset": "bumpy", "resolution": 48, "seed": 2});
    let npl = json!({"scene": scene, "source": {"kind": "npl", "power": 90000.0}, "pose": [400, 30, 40], "peak": 2.0});
    let snsl = json!({"scene": scene, "source": {"kind": "snsl", "power": 3600.0, "snsl_extent": 0.4, "snsl_count": 25}, "pose": [400, 30, 40], "peak": 2.0});
    let a = GrayImage::read_pgm16(fs::File::open(render(dir.path(), "npl.pgm", &npl)).unwrap(), 2.0).unwrap();
    let b = GrayImage::read_pgm16(fs::File::open(render(dir.path(), "snsl.pgm", &snsl)).unwrap(), 2.0).unwrap();
    let peak = a.max_valid();
    let dev = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / peak;
    assert!(dev < 1e-3, "relative deviation {dev}");
}

#[test]
fn render_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({"scene": {"preset": "relief", "resolution": 40, "seed": 0}, "source": {"kind": "npl"}, "pose": [350, 10, 30],
                     "noise": {"pixel_sigma": 0.01}, "seed": 5});
    let a = fs::read(render(dir.path(), "a.png", &cfg)).unwrap();
    let b = fs::read(render(dir.path(), "b.png", &cfg)).unwrap();
    assert_eq!(a, b);
    let bad = alr(&["render", "--config", &write(dir.path(), "x.json", &cfg), "--out", dir.path().join("x.bmp").to_str().unwrap()]);
    assert_eq!(bad.status.code(), Some(1));
}
