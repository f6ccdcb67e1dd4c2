use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"{
  "train": { "epochs": 40, "dataset_size": 64 },
  "test": {
    "snr_near_db": { "start": 0, "stop": 20 },
    "snr_far_db": { "start": -8, "stop": 6 },
    "step_db": 14,
    "vectors_per_point": 2,
    "vector_len": 32
  }
}
"#;

fn semnoma(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_semnoma"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("cfg.json");
    fs::write(&p, text).unwrap();
    p.display().to_string()
}

fn ok(out: &Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn full_pipeline_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("run").display().to_string();
    for cmd in [&["train-modem"][..], &["sweep"], &["macs"], &["regions"]] {
        let mut args = vec!["--config", cfg.as_str(), "--out", out.as_str()];
        args.extend_from_slice(cmd);
        ok(&semnoma(&args, dir.path()));
    }
    let run = dir.path().join("run");
    for f in ["model_near.json", "model_far.json", "loss_trace.csv", "sweep.csv", "macs.csv", "regions.csv", "regions.json"] {
        assert!(run.join(f).is_file(), "{f} missing");
    }
    let trace = fs::read_to_string(run.join("loss_trace.csv")).unwrap();
    assert!(trace.lines().any(|l| l == "epoch,loss_near,loss_far"));
    assert_eq!(trace.lines().filter(|l| !l.starts_with('#')).count(), 41);
    let sweep = fs::read_to_string(run.join("sweep.csv")).unwrap();
    let rows: Vec<_> = sweep.lines().filter(|l| !l.starts_with('#')).collect();
    // header + 2 near x 2 far cells x 2 detectors
    assert_eq!(rows.len(), 1 + 2 * 2 * 2);
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(run.join("regions.json")).unwrap()).unwrap();
    assert!(json.is_object());
}

#[test]
fn seeded_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    for name in ["a", "b"] {
        let out = dir.path().join(name).display().to_string();
        for cmd in ["train-modem", "sweep"] {
            ok(&semnoma(&["--config", &cfg, "--out", &out, "--seed", "7", cmd], dir.path()));
        }
    }
    for f in ["model_near.json", "model_far.json", "loss_trace.csv", "sweep.csv"] {
        let a = fs::read(dir.path().join("a").join(f)).unwrap();
        let b = fs::read(dir.path().join("b").join(f)).unwrap();
        assert!(a == b, "{f} differs");
    }
    let out_c = dir.path().join("c").display().to_string();
    ok(&semnoma(&["--config", &cfg, "--out", &out_c, "--seed", "8", "train-modem"], dir.path()));
    let a = fs::read(dir.path().join("a/loss_trace.csv")).unwrap();
    let c = fs::read(dir.path().join("c/loss_trace.csv")).unwrap();
    assert!(a != c, "different seeds gave the same trace");
}

#[test]
fn unknown_config_field_exits_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "{\n  \"seed\": 1,\n  \"sed\": 2\n}\n");
    let out = semnoma(&["--config", &cfg, "regions"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3"), "{err}");
    assert!(err.contains("sed"), "{err}");
}

#[test]
fn invalid_value_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{ "rho_near": 0.6, "rho_far": 0.6 }"#);
    let out = semnoma(&["--config", &cfg, "train-modem"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("rho"));
}

#[test]
fn sweep_without_models_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let out = semnoma(&["--out", "nowhere", "sweep"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("model"));
}

#[test]
fn all_infeasible_regions_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{ "regions": {
            "xi_req_text": 0.999, "xi_req_image": 0.999,
            "power_cases": [ { "name": "x", "xi_req_far": 0.999, "rate_req_near": 0.1, "rate_req_far": 0.1 } ],
            "xi_text_sweep": { "start": 0.999, "stop": 0.999, "points": 1 }
        } }"#,
    );
    let out = semnoma(&["--config", &cfg, "--out", "r", "regions"], dir.path());
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("r/regions.csv").is_file());
}
