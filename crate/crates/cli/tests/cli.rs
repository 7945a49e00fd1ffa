use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use serde_json::Value;
use tempfile::TempDir;

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn recipe(name: &str) -> PathBuf {
    root().join("docs/configs").join(format!("{name}.json"))
}

fn run(config: &Path, out: &Path, envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_patchtooth"));
    cmd.arg("--config").arg(config).arg("--out").arg(out);
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("spawn patchtooth")
}

fn run_ok(config: &Path, out: &Path) {
    let o = run(config, out, &[]);
    assert!(
        o.status.success(),
        "exit {:?}: {}",
        o.status.code(),
        String::from_utf8_lossy(&o.stderr)
    );
}

fn write_config(dir: &TempDir, text: &str) -> PathBuf {
    let path = dir.path().join("config.json");
    fs::write(&path, text).unwrap();
    path
}

fn csv_rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines
        .next()
        .unwrap()
        .split(',')
        .map(str::to_owned)
        .collect();
    let rows = lines
        .map(|l| l.split(',').map(str::to_owned).collect())
        .collect();
    (header, rows)
}

fn column(header: &[String], name: &str) -> usize {
    header
        .iter()
        .position(|h| h == name)
        .unwrap_or_else(|| panic!("no column {name}"))
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn nine_patch_eigenvalues_match_table() {
    let tmp = TempDir::new().unwrap();
    run_ok(&recipe("nine_patch_eigen"), tmp.path());
    let (header, rows) = csv_rows(&tmp.path().join("eigenvalues.csv"));
    let col = column(&header, "eigenvalue");
    let values: Vec<f64> = rows.iter().map(|r| r[col].parse().unwrap()).collect();

    assert!(values[0].abs() < 1e-9);
    // macroscale pairs are degenerate
    let expected = [-0.9987, -3.9788, -8.8918, -15.654];
    for (i, e) in expected.iter().enumerate() {
        for v in &values[1 + 2 * i..3 + 2 * i] {
            assert!(((v - e) / e).abs() < 0.01, "{v} vs {e}");
        }
    }
    assert!(
        ((values[9] + 672.93) / 672.93).abs() < 0.01,
        "{}",
        values[9]
    );
}

#[test]
fn order_sweep_converges_to_spectral() {
    let tmp = TempDir::new().unwrap();
    run_ok(&recipe("order_sweep"), tmp.path());
    let (header, rows) = csv_rows(&tmp.path().join("sweep.csv"));
    let (mode, err) = (column(&header, "mode"), column(&header, "relative_error"));
    let errors: Vec<f64> = rows
        .iter()
        .filter(|r| r[mode] == "1")
        .map(|r| r[err].parse().unwrap())
        .collect();
    assert_eq!(errors.len(), 8);
    for w in errors.windows(2) {
        if w[0] > 1e-10 {
            assert!(w[1] <= w[0], "{errors:?}");
        }
    }
    assert!(*errors.last().unwrap() <= 1e-10, "{errors:?}");
}

#[test]
fn homogenize_reports_harmonic_mean() {
    let tmp = TempDir::new().unwrap();
    run_ok(&recipe("homogenize_three"), tmp.path());
    let h = json(&tmp.path().join("homogenized.json"));
    let k2 = h["K2"].as_f64().unwrap();
    assert!((k2 - 18.0 / 11.0).abs() < 1e-9, "{k2}");
    assert!(h["K4"].as_f64().unwrap().is_finite());
    assert!(tmp.path().join("slow_branch.csv").exists());
}

#[test]
fn consistency_check_matches_lattice() {
    let tmp = TempDir::new().unwrap();
    run_ok(&recipe("consistency_2d_check"), tmp.path());
    let c = json(&tmp.path().join("check.json"));
    let worst = c["consistency"]["worst_relative_difference"]
        .as_f64()
        .unwrap();
    assert!(worst <= 1e-8, "{worst}");
    assert!(c["symmetry"]["relative"].as_f64().unwrap() <= 1e-12);
    assert_eq!(c["macro_count"], 25);
}

#[test]
fn out_of_range_ratio_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(
        &tmp,
        r#"{
          "model": "diffusion1d",
          "grid": { "L": 6.283185307179586, "N": 9, "n": 5, "r": 1.5 },
          "profile": { "period": 5, "values": [1, 2, 3, 4, 5] },
          "coupling": { "scheme": "spectral" },
          "task": "eigen"
        }"#,
    );
    let o = run(&config, &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("grid.r"));
}

#[test]
fn unknown_field_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(
        &tmp,
        r#"{
          "model": "diffusion1d",
          "grid": { "L": 6.283185307179586, "N": 9, "n": 5, "r": 0.3 },
          "profile": { "period": 5, "values": [1, 2, 3, 4, 5] },
          "coupling": { "scheme": "spectral" },
          "task": "eigen",
          "colour": "blue"
        }"#,
    );
    let o = run(&config, &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("colour"));
}

#[test]
fn incompatible_ensemble_exits_with_run_failure() {
    let tmp = TempDir::new().unwrap();
    let o = run(&recipe("counterexample_eigen"), tmp.path(), &[]);
    assert_eq!(
        o.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
}

#[test]
fn task_flag_overrides_config() {
    let tmp = TempDir::new().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_patchtooth"))
        .arg("--config")
        .arg(recipe("nine_patch_eigen"))
        .arg("--out")
        .arg(tmp.path())
        .args(["--task", "check"])
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(tmp.path().join("check.json").exists());
    assert!(!tmp.path().join("eigenvalues.csv").exists());
}

fn read_all(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn runs_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    for name in ["nine_patch_simulate", "ensemble_2d_simulate"] {
        let (a, b) = (
            tmp.path().join(format!("{name}-a")),
            tmp.path().join(format!("{name}-b")),
        );
        run_ok(&recipe(name), &a);
        run_ok(&recipe(name), &b);
        assert_eq!(read_all(&a), read_all(&b), "{name}");
    }
}

#[test]
fn sweep_output_is_independent_of_worker_count() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("one"), tmp.path().join("four"));
    for (dir, workers) in [(&a, "1"), (&b, "4")] {
        let o = run(
            &recipe("ensemble_order_sweep"),
            dir,
            &[("PATCHTOOTH_WORKERS", workers)],
        );
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(read_all(&a), read_all(&b));
}

#[test]
fn every_recipe_runs_quickly() {
    let tmp = TempDir::new().unwrap();
    let mut names: Vec<_> = fs::read_dir(root().join("docs/configs"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    names.sort();
    assert!(names.len() >= 10);
    for path in names {
        let stem = path.file_stem().unwrap().to_string_lossy().into_owned();
        let start = Instant::now();
        let o = run(&path, &tmp.path().join(&stem), &[]);
        let elapsed = start.elapsed();
        let expected = if stem == "counterexample_eigen" { 2 } else { 0 };
        assert_eq!(
            o.status.code(),
            Some(expected),
            "{stem}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
        assert!(elapsed < Duration::from_secs(60), "{stem} took {elapsed:?}");
    }
}

#[test]
fn schema_enums_match_accepted_values() {
    let schema = json(&root().join("docs/config.schema.json"));
    let props = &schema["properties"];
    let strings = |v: &Value| -> Vec<String> {
        v["enum"]
            .as_array()
            .unwrap()
            .iter()
            .map(|s| s.as_str().unwrap().to_owned())
            .collect()
    };
    assert_eq!(
        strings(&props["model"]),
        ["diffusion1d", "diffusion2d", "wave1d"]
    );
    assert_eq!(
        strings(&props["task"]),
        ["eigen", "simulate", "homogenize", "sweep", "check"]
    );
    assert_eq!(schema["additionalProperties"], Value::Bool(false));

    // each task accepts a minimal config
    let tmp = TempDir::new().unwrap();
    for task in strings(&props["task"]) {
        let config = write_config(
            &tmp,
            &format!(
                r#"{{
                  "model": "diffusion1d",
                  "grid": {{ "L": 6.283185307179586, "N": 5, "n": 3, "r": 0.3 }},
                  "profile": {{ "period": 3, "values": [1, 2, 3] }},
                  "coupling": {{ "scheme": "spectral" }},
                  "task": "{task}"
                }}"#
            ),
        );
        let o = run(&config, &tmp.path().join(&task), &[]);
        let stderr = String::from_utf8_lossy(&o.stderr);
        assert!(!stderr.contains("unknown"), "{task}: {stderr}");
    }
}
