use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn wbflux(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wbflux")).args(args).env("WBFLUX_THREADS", "2").output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn run_tc1_is_well_balanced() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("tc1");
    let o =
        wbflux(&["run", "--preset", "tc1", "--scheme", "well_balanced", "--dx", "0.1", "-o", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let m = manifest(&out);
    assert!(m["num_error"].as_f64().unwrap() <= 1e-8);
    assert!((m["l1_error"].as_f64().unwrap() - 5.02e-2).abs() < 1e-3);
    assert_eq!(m["n_cells"], 40);
    assert_eq!(m["stats"]["cfl_violations"], 0);
    for f in ["final.csv", "snapshot_000.csv", "solution.dat"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let dat = fs::read_to_string(out.join("solution.dat")).unwrap();
    assert!(dat.starts_with("# t = 0\n"));
    assert!(dat.contains("\n\n\n# t = 3\n"));
}

#[test]
fn identical_configs_give_identical_csvs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        "preset = \"tc2\"\nscheme = \"standard\"\nn_cells = 80\nsnapshot_times = [0.25, 1.75]\nreference_cells = 800\n",
    )
    .unwrap();
    let mut outputs = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let o = wbflux(&["run", "-c", cfg.to_str().unwrap(), "-o", out.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        outputs.push(out);
    }
    for f in ["snapshot_000.csv", "snapshot_001.csv", "final.csv", "solution.dat"] {
        assert_eq!(fs::read(outputs[0].join(f)).unwrap(), fs::read(outputs[1].join(f)).unwrap(), "{f}");
    }
    let m = manifest(&outputs[0]);
    assert_eq!(m["snapshot_times"], serde_json::json!([0.25, 1.75]));
    assert!(m["reference_l1"].as_f64().unwrap() > 0.0);
    assert_eq!(m["reference_cells"], 800);
}

#[test]
fn missing_config_file_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nowhere.toml");
    let o = wbflux(&["run", "-c", missing.to_str().unwrap()]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("nowhere.toml"), "{}", stderr(&o));
}

#[test]
fn unknown_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "preset = \"tc1\"\ntimestep = 0.1\n").unwrap();
    let o = wbflux(&["run", "-c", cfg.to_str().unwrap(), "-o", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("timestep"), "{}", stderr(&o));
}

#[test]
fn flags_override_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "preset = \"tc1\"\ndx = 0.5\nt_final = 0.5\n").unwrap();
    let out = dir.path().join("o");
    let o = wbflux(&["run", "-c", cfg.to_str().unwrap(), "--dx", "0.25", "-o", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(manifest(&out)["n_cells"], 16);
}

#[test]
fn custom_model_from_expressions() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("custom.toml");
    fs::write(
        &cfg,
        r#"model = "custom"
flux = "u + u^3"
flux_prime = "1 + 3*u^2"
source_b = "1"
d_prime_lower_bound = 1.0
z = "cos_bump"
x_left = 0.0
x_right = 4.0
t_final = 0.2
initial = "1"
left_bc = "1"
right_bc = "1"
n_cells = 20
"#,
    )
    .unwrap();
    let out = dir.path().join("o");
    let o = wbflux(&["run", "-c", cfg.to_str().unwrap(), "-o", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(manifest(&out)["model"], "Custom");
}

#[test]
fn cfl_violation_blows_up() {
    // λ · Lip = (0.25 / 0.01) · 2 = 50
    let dir = tempfile::tempdir().unwrap();
    let o = wbflux(&[
        "run",
        "--preset",
        "tc2",
        "--dt-mode",
        "explicit",
        "--dt",
        "0.25",
        "--dx",
        "0.01",
        "-o",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(stderr(&o).contains("blow-up"));
}

#[test]
fn table_row_range() {
    let dir = tempfile::tempdir().unwrap();
    let o = wbflux(&["table", "--preset", "tc1", "--rows", "1-2", "-o", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}{}", stdout(&o), stderr(&o));
    let csv = fs::read_to_string(dir.path().join("tc1_well_balanced_table.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[0], "dx,dt,l1_error,num_error,eoc,wall_time_s");
    assert!(dir.path().join("tc1_well_balanced_diff.txt").exists());
}

#[test]
fn table_tolerance_below_rounding_fails() {
    let dir = tempfile::tempdir().unwrap();
    let o =
        wbflux(&["table", "--preset", "tc3", "--rows", "1", "--tolerance", "1e-6", "-o", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 1, "{}", stdout(&o));
    assert!(stdout(&o).contains("FAIL"));
}

#[test]
fn table_without_preset_is_a_config_error() {
    assert_eq!(code(&wbflux(&["table"])), 3);
    assert_eq!(code(&wbflux(&["table", "--preset", "tc9"])), 3);
}

#[test]
fn entropy_check_exit_codes() {
    let o = wbflux(&["entropy-check"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert!(stdout(&o).contains("PASS"));
    assert_eq!(code(&wbflux(&["entropy-check", "--lambda-scale", "5", "--samples", "2000"])), 1);
    assert_eq!(code(&wbflux(&["entropy-check", "--samples", "0"])), 3);
}

#[test]
fn entropy_check_with_history() {
    let o = wbflux(&["entropy-check", "--samples", "200", "--history", "--preset", "tc1", "--n-cells", "40"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert!(stdout(&o).contains("weak entropy residual"));
}

#[test]
fn convergence_against_reference() {
    let dir = tempfile::tempdir().unwrap();
    let o = wbflux(&[
        "convergence",
        "--preset",
        "tc2",
        "--dx-list",
        "0.1,0.05",
        "--reference-cells",
        "800",
        "-o",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("convergence.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn presets_are_listed() {
    let o = wbflux(&["presets"]);
    assert_eq!(code(&o), 0);
    for id in ["tc1", "tc2", "tc3", "tc4"] {
        assert!(stdout(&o).contains(id));
    }
}
