use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use selfmix_cli::output::{read_snapshot, read_table};

fn selfmix(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_selfmix")).args(args).output().unwrap()
}

fn write_config(dir: &Path, name: &str, json: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, json).unwrap();
    path
}

fn summary(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

const TWO_STREAM: &str = r#"{
  "grid": {"dim": 2, "nx": 8},
  "velocity": {"radius": 1.0, "nodes_per_axis": 4},
  "params": {"D": 1.0, "E": 0.001},
  "solver": {"t_end": 1.0, "dt_policy": {"fixed": 0.005}},
  "scenario": "two_stream",
  "output": {"every_n_steps": 50, "formats": ["csv", "pgm"]}
}"#;

const LAMINAR: &str = r#"{
  "grid": {"dim": 2, "nx": 16},
  "velocity": {"radius": 1.0},
  "solver": {"t_end": 1.0},
  "scenario": {"kind": "laminar_limit", "width": 0.1},
  "output": {"every_n_steps": 4}
}"#;

#[test]
fn two_stream_run_writes_consistent_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", TWO_STREAM);
    let out = tmp.path().join("run");
    let o = selfmix(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    let s = summary(&out);
    assert_eq!(s["status"], "ok");
    assert_eq!(s["steps"], 200);
    assert!(s["final_mass_drift"].as_f64().unwrap().abs() <= 1e-10);
    assert_eq!(s["pgm_scaling"].as_array().unwrap().len(), 5);

    let (header, rows) = read_table(&out.join("moments.csv")).unwrap();
    assert_eq!(
        header,
        ["t", "total_mass", "impulse_x", "impulse_y", "angular_momentum", "min_rho", "max_rho", "energy"]
    );
    assert_eq!(rows.len(), 201);
    assert!(rows.windows(2).all(|w| w[1][0] > w[0][0]));

    for step in [0, 50, 100, 150, 200] {
        let snap = read_snapshot(&out.join(format!("rho_t{step}.csv"))).unwrap();
        assert_eq!((snap.dim, snap.n_cells, snap.n_nodes), (2, 64, 12));
        let pgm = fs::read(out.join(format!("rho_t{step}.pgm"))).unwrap();
        assert!(pgm.starts_with(b"P5\n8 8\n255\n"));
    }
    let echo: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("config.json")).unwrap()).unwrap();
    assert_eq!(echo["solver"]["cfl_diffusion"], 0.25);
    assert_eq!(echo["portions"]["support_threshold"], 1e-6);
}

#[test]
fn same_seed_gives_identical_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", TWO_STREAM);
    let cfg = cfg.to_str().unwrap();
    let dirs: Vec<PathBuf> = ["a", "b", "c"].iter().map(|d| tmp.path().join(d)).collect();
    for (dir, seed) in dirs.iter().zip(["7", "7", "8"]) {
        let o = selfmix(&["simulate", "--config", cfg, "--out", dir.to_str().unwrap(), "--seed", seed]);
        assert_eq!(code(&o), 0);
    }
    for name in ["rho_t0.csv", "rho_t200.csv", "moments.csv", "ledger.csv"] {
        let a = fs::read(dirs[0].join(name)).unwrap();
        assert_eq!(a, fs::read(dirs[1].join(name)).unwrap(), "{name}");
        assert_ne!(a, fs::read(dirs[2].join(name)).unwrap(), "{name}");
    }
}

#[test]
fn laminar_run_translates_the_blob() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", LAMINAR);
    let out = tmp.path().join("run");
    let o = selfmix(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let s = summary(&out);
    assert_eq!(s["laminar"], true);
    // speed 0.5, h = 1/16: one cell per step, 8 steps
    assert_eq!(s["steps"], 8);
    let a = read_snapshot(&out.join("rho_t0.csv")).unwrap();
    let b = read_snapshot(&out.join("rho_t8.csv")).unwrap();
    let max = a.values.iter().copied().fold(0.0, f64::max);
    for y in 0..16 {
        for x in 0..16 {
            let moved = b.values[y * 16 + (x + 8) % 16];
            assert!((moved - a.values[y * 16 + x]).abs() <= 1e-14 * max);
        }
    }
}

#[test]
fn zero_horizon_writes_only_the_initial_snapshot() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.json",
        r#"{"grid": {"dim": 1, "nx": 16}, "scenario": "gaussian_blob", "solver": {"t_end": 0}}"#,
    );
    let out = tmp.path().join("run");
    let o = selfmix(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let snaps: Vec<String> = fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.starts_with("rho_t"))
        .collect();
    assert_eq!(snaps, ["rho_t0.csv"]);
}

#[test]
fn config_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    for (json, needle) in [
        (r#"{"grid": {"dim": 1, "nx": 16}, "scenario": "two_stream", "params": {"kappa": -1}}"#, "params.kappa"),
        (
            r#"{"grid": {"dim": 1, "nx": 16}, "scenario": "two_stream", "params": {"kappa": 1, "delta": 1, "epsilon": 1}}"#,
            "mutually exclusive",
        ),
        (r#"{"grid": {"dim": 1, "nx": 16}, "scenario": "two_stream", "extra": 1}"#, "extra"),
        (r#"{"grid": {"dim": 1, "nx": 16}"#, "EOF"),
    ] {
        let cfg = write_config(tmp.path(), "c.json", json);
        let o = selfmix(&["simulate", "--config", cfg.to_str().unwrap(), "--out", tmp.path().join("r").to_str().unwrap()]);
        assert_eq!(code(&o), 2, "{json}");
        assert!(String::from_utf8_lossy(&o.stderr).contains(needle), "{}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn unstable_step_aborts_with_exit_3_and_a_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.json",
        r#"{"grid": {"dim": 1, "nx": 16}, "scenario": "gaussian_blob", "solver": {"dt_policy": {"fixed": 0.5}}}"#,
    );
    let out = tmp.path().join("run");
    let o = selfmix(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 3);
    let s = summary(&out);
    assert_eq!(s["status"], "failed");
    assert!(s["error"].as_str().unwrap().contains("step 1"));
    assert_eq!(s["ledger_tail"].as_array().unwrap().len(), 1);
}

#[test]
fn custom_scenario_restarts_from_a_snapshot() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", TWO_STREAM);
    let first = tmp.path().join("first");
    assert_eq!(code(&selfmix(&["simulate", "--config", cfg.to_str().unwrap(), "--out", first.to_str().unwrap()])), 0);
    let custom = TWO_STREAM.replace("\"two_stream\"", "{\"kind\": \"custom\", \"file\": \"first/rho_t200.csv\"}");
    let cfg = write_config(tmp.path(), "custom.json", &custom.replace("\"t_end\": 1.0", "\"t_end\": 0"));
    let second = tmp.path().join("second");
    let o = selfmix(&["simulate", "--config", cfg.to_str().unwrap(), "--out", second.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read(first.join("rho_t200.csv")).unwrap(), fs::read(second.join("rho_t0.csv")).unwrap());
}

#[test]
fn diagnose_passes_clean_runs_and_locates_defects() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", TWO_STREAM);
    let out = tmp.path().join("run");
    assert_eq!(code(&selfmix(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])), 0);

    let o = selfmix(&["diagnose", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout);
    assert_eq!(text.lines().count(), 5);
    assert!(text.lines().all(|l| l.starts_with("PASS ")), "{text}");
    assert!(out.join("diagnose.json").exists());

    let o = selfmix(&["diagnose", out.to_str().unwrap(), "--inject-symmetric-defect", "0.5", "--json"]);
    assert_eq!(code(&o), 1);
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let sym = report["checks"].as_array().unwrap().iter().find(|c| c["name"] == "symmetrization").unwrap();
    assert_eq!(sym["verdict"], "FAIL");
    assert!(sym["detail"].as_str().unwrap().contains("nodes ("));

    let empty = tmp.path().join("empty");
    fs::create_dir(&empty).unwrap();
    let o = selfmix(&["diagnose", empty.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(!o.stderr.is_empty());
}

#[test]
fn whole_domain_portion_covers_the_occupied_cells() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.json",
        r#"{"grid": {"dim": 1, "nx": 16}, "scenario": "two_stream", "solver": {"t_end": 0.2}}"#,
    );
    let out = tmp.path().join("p");
    let o = selfmix(&["portions", "--config", cfg.to_str().unwrap(), "--region", "all", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = read_table(&out.join("overlap.csv")).unwrap();
    assert_eq!(header, ["step", "t"]);
    assert!(!rows.is_empty());
    let (_, support) = read_table(&out.join("support_r0.csv")).unwrap();
    let initial: Vec<&Vec<f64>> = support.iter().filter(|r| r[0] == 0.0).collect();
    assert_eq!(initial.len(), 16);
    let s = summary(&out);
    assert!(s["max_tag_drift"].as_f64().unwrap() <= 1e-10);
}

fn first_overlap(json: &str, tmp: &Path, name: &str) -> (serde_json::Value, Vec<Vec<f64>>) {
    let cfg = write_config(tmp, &format!("{name}.json"), json);
    let out = tmp.join(name);
    let o = selfmix(&[
        "portions",
        "--config",
        cfg.to_str().unwrap(),
        "--region",
        "left=0:0.25,0.25:0.5",
        "--region",
        "right=0.5:0.75,0.25:0.5",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = read_table(&out.join("overlap.csv")).unwrap();
    assert_eq!(header, ["step", "t", "left&right"]);
    (summary(&out), rows)
}

#[test]
fn disjoint_portions_mix_only_with_mixing() {
    let tmp = tempfile::tempdir().unwrap();
    let (s, rows) = first_overlap(&TWO_STREAM.replace("\"fixed\": 0.005", "\"fixed\": 0.01"), tmp.path(), "mix");
    assert!(s["overlaps"][0]["first_positive_t"].as_f64().is_some());
    assert!(rows.iter().any(|r| r[2] > 0.0));
    assert!(s["max_domination_violation"].as_f64().unwrap() <= 1e-12);
    assert!(s["max_tag_drift"].as_f64().unwrap() <= 1e-10);

    let (s, rows) = first_overlap(LAMINAR, tmp.path(), "laminar");
    assert!(s["overlaps"][0]["first_positive_t"].is_null());
    assert!(rows.iter().all(|r| r[2] == 0.0));
    assert_eq!(rows.len(), 9);
}

#[test]
fn empty_region_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", r#"{"grid": {"dim": 1, "nx": 16}, "scenario": "two_stream"}"#);
    let o = selfmix(&["portions", "--config", cfg.to_str().unwrap(), "--region", "0.01:0.02", "--out", tmp.path().join("p").to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}
