use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bayesdepth"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn boxed(min: [f64; 3], max: [f64; 3]) -> Value {
    json!({"type": "box", "min": min, "max": max, "peak_density": 400.0, "softness": 0.02})
}

/// Small box-in-room experiment at 48×36.
fn room_config() -> Value {
    json!({
        "scene": {"primitives": [
            boxed([-2.0, -1.6, -1.0], [2.0, 1.2, 5.0]),
            boxed([-0.9, 0.3, 2.9], [-0.2, 1.2, 3.5]),
            boxed([0.3, -1.6, 3.5], [0.5, 1.2, 3.7]),
        ]},
        "camera": {"intrinsics": {"fx": 31.3, "fy": 31.3, "cx": 23.5, "cy": 17.5, "width": 48, "height": 36}},
        "perturbation": {"max_rotation_deg": 1.0, "max_translation_m": 0.02, "views": 3},
        "sampling": {"near": 2.35, "far": 5.65, "samples": 48},
        "corruption": {"blur_sigma_px": 1.5, "noise_sigma_m": 0.02, "scale": 1.1, "shift": 0.2},
        "output_dir": "out",
        "seed": 3
    })
}

fn write_config(dir: &Path, value: &Value) -> PathBuf {
    let path = dir.join("exp.json");
    fs::write(&path, serde_json::to_string_pretty(value).unwrap()).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn simulate_and_refine(dir: &Path, extra: &[&str]) -> PathBuf {
    let cfg = write_config(dir, &room_config());
    let out = run(&["simulate", "-c", s(&cfg)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let mut args = vec!["refine", "-c", s(&cfg)];
    args.extend_from_slice(extra);
    let out = run(&args);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    dir.join("out")
}

fn diagnostics(out_dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(out_dir.join("diagnostics.json")).unwrap()).unwrap()
}

#[test]
fn simulate_refine_eval_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = simulate_and_refine(tmp.path(), &[]);
    for name in [
        "gt_depth.pfm",
        "mono_depth.pfm",
        "refined_depth.pfm",
        "refined_variance.pfm",
    ] {
        assert!(out_dir.join(name).is_file(), "{name}");
    }
    let diag = diagnostics(&out_dir);
    assert_eq!(diag["iterations"].as_array().unwrap().len(), 2);
    assert_eq!(diag["seed"], 3);

    let out = run(&[
        "eval",
        "--pred",
        s(&out_dir.join("refined_depth.pfm")),
        "--var",
        s(&out_dir.join("refined_variance.pfm")),
        "--gt",
        s(&out_dir.join("gt_depth.pfm")),
        "--baseline",
        s(&out_dir.join("mono_depth.pfm")),
        "--out-dir",
        s(&out_dir),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let printed: Value = serde_json::from_slice(&out.stdout).unwrap();
    let saved: Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(printed, saved);
    assert!(printed["mse"].as_f64().unwrap().is_finite());
    assert_eq!(printed["mse_pixels"], 48 * 36);
    let curve = fs::read_to_string(out_dir.join("curve.csv")).unwrap();
    assert!(curve.starts_with("percentile,mean_abs_error\n"));
}

#[test]
fn iteration_override_sets_diagnostic_count() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = simulate_and_refine(
        tmp.path(),
        &["--iterations", "1", "--ablate", "skip_calibration"],
    );
    let diag = diagnostics(&out_dir);
    assert_eq!(diag["iterations"].as_array().unwrap().len(), 1);
    assert_eq!(diag["ablations"]["skip_calibration"], true);
    assert_eq!(diag["iterations"][0]["a"], 1.0);
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = simulate_and_refine(tmp.path(), &[]);
    let first: Vec<Vec<u8>> = [
        "refined_depth.pfm",
        "refined_variance.pfm",
        "diagnostics.json",
    ]
    .iter()
    .map(|n| fs::read(out_dir.join(n)).unwrap())
    .collect();
    let cfg = tmp.path().join("exp.json");
    assert_eq!(code(&run(&["refine", "-c", s(&cfg)])), 0);
    for (i, n) in [
        "refined_depth.pfm",
        "refined_variance.pfm",
        "diagnostics.json",
    ]
    .iter()
    .enumerate()
    {
        assert_eq!(fs::read(out_dir.join(n)).unwrap(), first[i], "{n}");
    }
}

#[test]
fn eval_of_ground_truth_against_itself() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = simulate_and_refine(tmp.path(), &["--iterations", "1"]);
    let gt = out_dir.join("gt_depth.pfm");
    let out = run(&[
        "eval",
        "--pred",
        s(&gt),
        "--var",
        s(&gt),
        "--gt",
        s(&gt),
        "--baseline",
        s(&gt),
        "--out-dir",
        s(tmp.path()),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let m: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(m["mse"], 0.0);
    assert_eq!(m["edge_sharpness_ratio"], 1.0);
    assert_eq!(m["edge_f1"], 1.0);
    assert!(m["uncertainty_error_spearman"].is_null());
}

#[test]
fn config_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("exp.json");
    fs::write(&path, "{\n  \"seed\": 1,,\n}").unwrap();
    let out = run(&["simulate", "-c", s(&path)]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));

    let cfg = write_config(tmp.path(), &room_config());
    assert_eq!(
        code(&run(&["refine", "-c", s(&cfg), "--ablate", "nonsense"])),
        2
    );
    assert_eq!(
        code(&run(&["refine", "-c", s(&cfg), "--iterations", "0"])),
        2
    );
    assert_eq!(code(&run(&["refine"])), 2);

    let mut bad = room_config();
    bad["sampling"]["far"] = json!(1.0);
    let cfg = write_config(tmp.path(), &bad);
    let out = run(&["simulate", "-c", s(&cfg)]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("sampling"));
}

#[test]
fn malformed_pfm_exits_3_without_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &room_config());
    let mono = tmp.path().join("broken.pfm");
    fs::write(&mono, b"Pf\n48 36\n-1.0\n\x00\x00").unwrap();
    let out = run(&["refine", "-c", s(&cfg), "--mono", s(&mono)]);
    assert_eq!(code(&out), 3);
    assert!(!tmp.path().join("out").exists());

    let missing = tmp.path().join("missing.pfm");
    assert_eq!(
        code(&run(&["refine", "-c", s(&cfg), "--mono", s(&missing)])),
        3
    );
}

/// Little-endian grayscale PFM filled with `value`.
fn constant_pfm(path: &Path, value: f32) {
    let mut bytes = b"Pf\n48 36\n-1.0\n".to_vec();
    for _ in 0..48 * 36 {
        bytes.extend_from_slice(&value.to_le_bytes());
    }
    fs::write(path, bytes).unwrap();
}

#[test]
fn degenerate_calibration_everywhere_exits_4() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = write_config(tmp.path(), &room_config());
    assert_eq!(code(&run(&["simulate", "-c", s(&cfg_path)])), 0);

    // Constant rendered depth leaves the affine fit without spread.
    let views = tmp.path().join("flat");
    fs::create_dir_all(&views).unwrap();
    constant_pfm(&views.join("view_0_depth.pfm"), 4.0);
    constant_pfm(&views.join("view_0_var.pfm"), 0.01);
    let identity = json!({"rotation": [[1, 0, 0], [0, 1, 0], [0, 0, 1]], "translation": [0, 0, 0]});
    fs::write(views.join("view_0_pose.json"), identity.to_string()).unwrap();

    let mut cfg = room_config();
    cfg["injected_views"] = json!("flat");
    let path = write_config(tmp.path(), &cfg);
    let out = run(&["refine", "-c", s(&path)]);
    assert_eq!(code(&out), 4, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!tmp.path().join("out/refined_depth.pfm").exists());
}

#[test]
fn injected_views_replace_the_density_field() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = write_config(tmp.path(), &room_config());
    assert_eq!(code(&run(&["simulate", "-c", s(&cfg_path)])), 0);

    let views = tmp.path().join("views");
    fs::create_dir_all(&views).unwrap();
    for (i, angle) in [0.01f64, -0.01].iter().enumerate() {
        let (c, sn) = (angle.cos(), angle.sin());
        let pose = json!({
            "rotation": [[c, 0.0, sn], [0.0, 1.0, 0.0], [-sn, 0.0, c]],
            "translation": [0.01, 0.0, 0.0]
        });
        let pose_path = views.join(format!("view_{i}_pose.json"));
        fs::write(&pose_path, pose.to_string()).unwrap();
        let render_dir = tmp.path().join(format!("render{i}"));
        let out = run(&[
            "render",
            "-c",
            s(&cfg_path),
            "--pose",
            s(&pose_path),
            "--out-dir",
            s(&render_dir),
        ]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        fs::rename(
            render_dir.join("render_depth.pfm"),
            views.join(format!("view_{i}_depth.pfm")),
        )
        .unwrap();
        fs::rename(
            render_dir.join("render_variance.pfm"),
            views.join(format!("view_{i}_var.pfm")),
        )
        .unwrap();
    }

    let mut cfg = room_config();
    cfg.as_object_mut().unwrap().remove("scene");
    cfg["injected_views"] = json!("views");
    let injected_cfg = tmp.path().join("injected.json");
    fs::write(&injected_cfg, cfg.to_string()).unwrap();
    let out = run(&["refine", "-c", s(&injected_cfg)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let diag = diagnostics(&tmp.path().join("out"));
    let iters = diag["iterations"].as_array().unwrap();
    assert_eq!(iters.len(), 2);
    assert!(iters.iter().all(|d| d["calibrated"] == true));

    // Rendering needs a density field.
    assert_eq!(code(&run(&["render", "-c", s(&injected_cfg)])), 2);
}
