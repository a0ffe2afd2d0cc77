use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn perclab(args: &[&str], envs: &[(&str, &Path)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_perclab"));
    cmd.args(args).env_remove("PERCLAB_OUTPUT_DIR").env_remove("PERCLAB_WORKERS");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

const MINIMAL: &str = r#"
replicas = 2
tasks = ["mu"]
directions = [[1, 0]]

[box]
dim = 2
side = 32

[sampler]
model = "bernoulli-bond"
p = 1.0
seed = 7
"#;

#[test]
fn run_writes_outputs_and_honours_output_override() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.toml");
    fs::write(&spec, MINIMAL).unwrap();
    let out = dir.path().join("out");
    let o = perclab(&["run", spec.to_str().unwrap()], &[("PERCLAB_OUTPUT_DIR", &out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("mu.csv")).unwrap();
    assert_eq!(csv.lines().last(), Some("1;0,8,1,0,2"));
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["schema_version"], 1);
    assert_eq!(summary["seed"], 7);
}

#[test]
fn validate_reports_every_violation_with_exit_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("bad.toml");
    fs::write(&spec, MINIMAL.replace("replicas = 2", "replicas = 0").replace("p = 1.0", "p = 2.0")).unwrap();
    let o = perclab(&["validate", spec.to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("replicas") && err.contains("sampler.p"), "{err}");

    fs::write(&spec, MINIMAL.replace("seed = 7", "seed = 7\nsweep = 3")).unwrap();
    assert_eq!(perclab(&["validate", spec.to_str().unwrap()], &[]).status.code(), Some(2));

    fs::write(&spec, MINIMAL).unwrap();
    assert_eq!(perclab(&["validate", spec.to_str().unwrap()], &[]).status.code(), Some(0));
}

#[test]
fn partial_failure_and_io_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.toml");
    // blocks at scale 30 do not fit in a box of side 32
    fs::write(&spec, MINIMAL.replace("[\"mu\"]", "[\"mu\", \"r-event\"]") + "\n[r_event]\nsizes = [30]\n").unwrap();
    let out = dir.path().join("out");
    let o = perclab(&["run", spec.to_str().unwrap(), "--output-dir", out.to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stdout));
    assert!(out.join("mu.csv").exists());

    let missing = dir.path().join("missing.toml");
    assert_eq!(perclab(&["run", missing.to_str().unwrap()], &[]).status.code(), Some(4));

    fs::write(&spec, MINIMAL).unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let o = perclab(&["run", spec.to_str().unwrap()], &[("PERCLAB_OUTPUT_DIR", &blocker.join("sub"))]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn worker_override_keeps_csv_bodies() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.toml");
    fs::write(
        &spec,
        MINIMAL
            .replace("p = 1.0", "p = 0.7")
            .replace("[\"mu\"]", "[\"mu\", \"tail\"]")
            .replace("side = 32", "side = 48"),
    )
    .unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let one = Path::new("1");
    let three = Path::new("3");
    assert_eq!(perclab(&["run", spec.to_str().unwrap()], &[("PERCLAB_OUTPUT_DIR", &a), ("PERCLAB_WORKERS", one)]).status.code(), Some(0));
    assert_eq!(perclab(&["run", spec.to_str().unwrap()], &[("PERCLAB_OUTPUT_DIR", &b), ("PERCLAB_WORKERS", three)]).status.code(), Some(0));
    for f in ["mu.csv", "tail.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn presets_list_and_show() {
    let o = perclab(&["presets"], &[]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("bond-2d") && text.contains("p_c"), "{text}");

    let o = perclab(&["presets", "--show", "regularity-2d"], &[]);
    assert_eq!(o.status.code(), Some(0));
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("preset.toml");
    fs::write(&spec, &o.stdout).unwrap();
    assert_eq!(perclab(&["validate", spec.to_str().unwrap()], &[]).status.code(), Some(0));

    assert_eq!(perclab(&["presets", "--show", "nope"], &[]).status.code(), Some(2));
}

#[test]
fn autocorr_reports_a_time() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("fk.toml");
    fs::write(
        &spec,
        MINIMAL
            .replace("model = \"bernoulli-bond\"", "model = \"random-cluster\"\nq = 2.0")
            .replace("p = 1.0", "p = 0.7")
            .replace("side = 32", "side = 16"),
    )
    .unwrap();
    let o = perclab(&["autocorr", spec.to_str().unwrap(), "--sweeps", "200"], &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("integrated autocorrelation time"));
}
