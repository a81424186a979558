use std::path::Path;
use std::process::{Command, Output, Stdio};
use std::time::Duration;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_acoustic-tire"));
    c.env("RUST_LOG", "warn").env("RUST_BACKTRACE", "0").env_remove("ACOUSTIC_TIRE_DATA");
    c
}

fn ok(out: Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

#[test]
fn design_reports_prototype_numbers() {
    let text = ok(bin().arg("design").output().unwrap());
    assert!(text.contains("query time") && text.contains("5.820"), "{text}");
    let json: serde_json::Value = serde_json::from_str(&ok(bin().args(["design", "--json"]).output().unwrap())).unwrap();
    assert!((json["cycles_per_rotation"].as_f64().unwrap() - 1718.0).abs() < 9.0);
    assert!((json["min_separation_m"].as_f64().unwrap() - 0.004083).abs() < 5e-6);
}

#[test]
fn simulate_then_process_and_estimate_height() {
    let dir = tempfile::tempdir().unwrap();
    write(
        &dir.path().join("scene.json"),
        r#"{"trial_length": 0.9, "initial_wheel_angle": 1.0,
            "terrain": {"material": "Wood"},
            "obstacles": [{"shape": "Rectangle", "height": 0.025, "ground_position": 0.5, "surmountable": true}]}"#,
    );
    let text = ok(bin()
        .current_dir(dir.path())
        .args(["simulate", "--scene", "scene.json", "--seed", "4", "--duration-ms", "18000", "-o", "t.awt"])
        .output()
        .unwrap());
    assert!(text.starts_with("360 cycles, 1 flags"), "{text}");

    let text = ok(bin().current_dir(dir.path()).args(["process", "t.awt", "--task", "terrain", "-o", "w.jsonl"]).output().unwrap());
    assert!(text.starts_with("72 windows"), "{text}");
    let first: serde_json::Value =
        serde_json::from_str(std::fs::read_to_string(dir.path().join("w.jsonl")).unwrap().lines().next().unwrap()).unwrap();
    assert_eq!(first["label"], "Wood");
    assert_eq!(first["traces"].as_array().unwrap().len(), 5);

    let est: serde_json::Value =
        serde_json::from_str(&ok(bin().current_dir(dir.path()).args(["height", "t.awt", "--peaks", "p.csv"]).output().unwrap())).unwrap();
    let h = est["height_m"].as_f64().unwrap();
    assert!(h > 0.0 && h < 0.27, "{h}");
    assert!(std::fs::read_to_string(dir.path().join("p.csv")).unwrap().starts_with("cycle,t_ex_ms,t_r_ms,amplitude\n"));
}

#[test]
fn data_dir_anchors_relative_outputs() {
    let dir = tempfile::tempdir().unwrap();
    ok(bin()
        .env("ACOUSTIC_TIRE_DATA", dir.path())
        .args(["simulate", "--clean", "--duration-ms", "10000", "-o", "sub/flat.jsonl"])
        .output()
        .unwrap());
    assert!(dir.path().join("sub/flat.jsonl").is_file());
}

#[test]
fn bad_config_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    write(&cfg, r#"{"protocol": {"height": {"short_trials": -1}}, "seed": 1}"#);
    let out = bin().arg("run").arg(&cfg).output().unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("short_trials"), "{err}");
}

#[test]
fn run_small_height_experiment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    write(&cfg, r#"{"protocol": {"height": {"short_trials": 3, "tall_trials": 2}}, "seed": 5}"#);
    let text = ok(bin().current_dir(dir.path()).arg("run").arg(&cfg).output().unwrap());
    assert!(text.contains("short") && text.contains("tall"), "{text}");
    assert_eq!(std::fs::read_dir(dir.path().join("height-5/trials")).unwrap().count(), 5);
}

#[test]
fn serve_and_replay_over_tcp() {
    let dir = tempfile::tempdir().unwrap();
    ok(bin().current_dir(dir.path()).args(["simulate", "--duration-ms", "10500", "-o", "src.awt"]).output().unwrap());
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let addr = format!("127.0.0.1:{port}");
    let server = bin().current_dir(dir.path()).args(["serve", "src.awt", "--addr", &addr]).stdout(Stdio::piped()).spawn().unwrap();
    let mut replay = None;
    for _ in 0..50 {
        let out = bin().current_dir(dir.path()).args(["replay", "--addr", &addr, "-o", "dst.awt"]).output().unwrap();
        if out.status.success() {
            replay = Some(out);
            break;
        }
        std::thread::sleep(Duration::from_millis(100));
    }
    let server = server.wait_with_output().unwrap();
    assert!(server.status.success());
    assert!(replay.is_some(), "replay never connected");
    assert_eq!(std::fs::read(dir.path().join("src.awt")).unwrap(), std::fs::read(dir.path().join("dst.awt")).unwrap());
}
