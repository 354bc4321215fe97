use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_parlang");

fn run(dir: &Path, config: &str, extra: &[&str]) -> Output {
    let path = dir.join("run.toml");
    fs::write(&path, config).unwrap();
    Command::new(BIN)
        .arg("--config")
        .arg(&path)
        .args(extra)
        .output()
        .expect("binary runs")
}

fn metrics(dir: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(dir.join("metrics.csv"))
        .unwrap()
        .records()
        .collect::<Result<_, _>>()
        .unwrap()
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

const BENCH: &str = r#"
mode = "bench"
seed = 3
epsilon = 0.3
replicas = 50
residuals = true

[target]
kind = "gaussian"
mean = [0.5, -1.0]
precision = [1.0, 4.0]

[schedule]
max_substeps = 16
max_outer_steps = 6
acknowledge = true
"#;

#[test]
fn unknown_key_is_a_schema_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), "mode = \"verify\"\nreplicaz = 3\n", &[]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("replicaz") && err.contains("line 2"), "{err}");
}

#[test]
fn unacknowledged_override_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let config = BENCH.replace("acknowledge = true", "");
    let out = run(dir.path(), &config, &["--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn verify_mode_covers_every_module() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("o");
    let out = run(dir.path(), "mode = \"verify\"\nseed = 1\n", &["--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = metrics(&out_dir);
    for module in ["score", "noise", "lmc", "ulmc", "discrete", "diagnostics"] {
        assert!(rows.iter().any(|r| &r[0] == module), "no rows for {module}");
    }
    assert!(rows.iter().all(|r| &r[5] == "true"));
}

#[test]
fn bench_rounds_match_schedule() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("o");
    let out = run(dir.path(), BENCH, &["--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let m = manifest(&out_dir);
    assert_eq!(m["desk_override"], serde_json::json!(true));
    let rows = metrics(&out_dir);
    for module in ["lmc", "ulmc"] {
        let s = &m["run"]["schedules"][module];
        let want = s["N"].as_u64().unwrap() * s["K"].as_u64().unwrap();
        let got: f64 = rows.iter().find(|r| &r[0] == module && &r[2] == "rounds").unwrap()[3].parse().unwrap();
        assert_eq!(got, want as f64, "{module}");
    }
    assert!(out_dir.join("residuals.csv").exists());
}

#[test]
fn reruns_are_byte_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for (i, threads) in ["1", "8", "1"].iter().enumerate() {
        let out_dir = dir.path().join(format!("o{i}"));
        let out = run(dir.path(), BENCH, &["--out", out_dir.to_str().unwrap(), "--threads", threads]);
        assert_eq!(out.status.code(), Some(0));
        outputs.push((
            fs::read(out_dir.join("metrics.csv")).unwrap(),
            fs::read(out_dir.join("residuals.csv")).unwrap(),
        ));
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("o");
    let out = run(dir.path(), BENCH, &["--out", out_dir.to_str().unwrap(), "--seed", "77"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(manifest(&out_dir)["seed"], serde_json::json!(77));
}

#[test]
fn discrete_product_run_meets_tv_bound() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("o");
    let config = r#"
mode = "discrete"
seed = 9
epsilon = 0.1

[distribution]
kind = "product"
p = [0.8, 0.3]

[localization]
runs = 4000

[schedule]
max_substeps = 2
max_depth = 2
max_outer_steps = 40
acknowledge = true

[assert]
tv_max = 0.1
"#;
    let out = run(dir.path(), config, &["--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = metrics(&out_dir);
    let tv = rows.iter().find(|r| &r[2] == "empirical_tv").unwrap();
    assert_eq!(&tv[5], "true");
    assert!(tv[3].parse::<f64>().unwrap() <= 0.1);
}

#[test]
fn failed_assertion_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("o");
    let config = BENCH.replace("mode = \"bench\"", "mode = \"continuous-lmc\"") + "\n[assert]\nkl_max = 0.0\n";
    let out = run(dir.path(), &config, &["--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}
