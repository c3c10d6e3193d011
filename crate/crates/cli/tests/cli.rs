use std::path::Path;
use std::process::{Command, Output};

use abscov::env::Environment;

const DESK: &str = r#"{
    "grid_k": 16, "n_abs": 2, "n_gus": 20,
    "time": {"trial_s": 40},
    "environment": {"n_buildings": 20, "seed": 3},
    "planner": "sdl-me", "seed": 5, "n_trials": 2,
    "schemes": ["static", "nm", "sdl-me"],
    "collect": {"n_trials": 2, "strategy": "mixed"}
}"#;

fn run(dir: &Path, config: &str, args: &[&str]) -> Output {
    let cfg = dir.join("config.json");
    std::fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_abscov"))
        .arg("--config")
        .arg(&cfg)
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn without_timings(mut v: serde_json::Value) -> serde_json::Value {
    match &mut v {
        serde_json::Value::Object(m) => {
            m.remove("planning_s");
            for x in m.values_mut() {
                *x = without_timings(x.take());
            }
        }
        serde_json::Value::Array(a) => {
            for x in a.iter_mut() {
                *x = without_timings(x.take());
            }
        }
        _ => {}
    }
    v
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn gen_env_is_deterministic_and_loadable() {
    let dir = tempfile::tempdir().unwrap();
    ok(&run(dir.path(), DESK, &["gen-env", "--out", "a.json"]));
    ok(&run(dir.path(), DESK, &["gen-env", "--out", "b.json"]));
    let a = std::fs::read_to_string(dir.path().join("a.json")).unwrap();
    assert_eq!(
        a,
        std::fs::read_to_string(dir.path().join("b.json")).unwrap()
    );
    let env = Environment::from_json(&a).unwrap();
    assert_eq!(env.buildings().len(), 20);

    // A config pointing at the file reproduces the same environment.
    let from_file = DESK.replace(r#""n_buildings": 20, "seed": 3"#, r#""file": "a.json""#);
    ok(&run(
        dir.path(),
        &from_file,
        &["gen-env", "--out", "c.json"],
    ));
    assert_eq!(
        a,
        std::fs::read_to_string(dir.path().join("c.json")).unwrap()
    );
}

#[test]
fn run_trial_writes_json_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    ok(&run(
        dir.path(),
        DESK,
        &[
            "run-trial",
            "--out",
            "t.json",
            "--csv",
            "t.csv",
            "--trajectories",
        ],
    ));
    let v: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("t.json")).unwrap()).unwrap();
    let steps = v["step_cr"].as_array().unwrap();
    assert_eq!(steps.len(), 80);
    let mean = steps.iter().map(|x| x.as_f64().unwrap()).sum::<f64>() / 80.0;
    assert!((v["acr"].as_f64().unwrap() - mean).abs() < 1e-12);
    assert_eq!(v["abs_traj"].as_array().unwrap().len(), 80);
    let csv = std::fs::read_to_string(dir.path().join("t.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("step,cr"));
    assert_eq!(csv.lines().count(), 81);

    // Identical apart from the measured planning times.
    ok(&run(
        dir.path(),
        DESK,
        &["run-trial", "--out", "u.json", "--trajectories"],
    ));
    let w: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("u.json")).unwrap()).unwrap();
    assert_eq!(without_timings(v), without_timings(w));
}

#[test]
fn compare_pairs_seeds_across_schemes() {
    let dir = tempfile::tempdir().unwrap();
    ok(&run(dir.path(), DESK, &["compare", "--out", "cmp"]));
    let summary = std::fs::read_to_string(dir.path().join("cmp/summary.csv")).unwrap();
    let mut lines = summary.lines();
    assert_eq!(lines.next(), Some("scheme,mean_acr,std_acr,n,seed_digest"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(
        rows.iter().map(|r| r[0]).collect::<Vec<_>>(),
        ["static", "nm", "sdl-me"]
    );
    assert!(rows.iter().all(|r| r[3] == "2" && r[4] == rows[0][4]));
    assert!(dir.path().join("cmp/series.csv").exists());

    ok(&run(
        dir.path(),
        DESK,
        &[
            "compare",
            "--out",
            "cmp2",
            "--schemes",
            "nm,static",
            "--trials",
            "1",
        ],
    ));
    let s = std::fs::read_to_string(dir.path().join("cmp2/summary.csv")).unwrap();
    assert_eq!(s.lines().count(), 3);
}

#[test]
fn collect_writes_samples_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    ok(&run(dir.path(), DESK, &["collect", "--out", "d.jsonl"]));
    let data = std::fs::read_to_string(dir.path().join("d.jsonl")).unwrap();
    assert_eq!(data.lines().count(), 160);
    let first: serde_json::Value = serde_json::from_str(data.lines().next().unwrap()).unwrap();
    assert_eq!(first["abs"].as_array().unwrap().len(), 16);
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("d.jsonl.manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["count"], 160);
    assert_eq!(manifest["strategy"], "mixed");
}

#[test]
fn niche_heatmap_lists_candidates() {
    let dir = tempfile::tempdir().unwrap();
    ok(&run(
        dir.path(),
        DESK,
        &["niche-heatmap", "--out", "h.jsonl"],
    ));
    let data = std::fs::read_to_string(dir.path().join("h.jsonl")).unwrap();
    assert!(data.lines().count() > 0);
    for line in data.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        for key in [
            "sequence",
            "mean_bin",
            "std_bin",
            "predicted_cr",
            "actual_cr",
        ] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let code = |o: Output| o.status.code().unwrap();

    let typo = run(
        dir.path(),
        r#"{"time": {"trial_sec": 10}}"#,
        &["gen-env", "--out", "e.json"],
    );
    assert!(String::from_utf8_lossy(&typo.stderr).contains("time"));
    assert_eq!(code(typo), 1);
    assert_eq!(
        code(run(
            dir.path(),
            r#"{"n_abs": 0}"#,
            &["run-trial", "--out", "t.json"]
        )),
        1
    );
    assert_eq!(code(run(dir.path(), DESK, &["frobnicate"])), 1);

    let missing = DESK.replace(r#""n_buildings": 20, "seed": 3"#, r#""file": "nope.json""#);
    assert_eq!(
        code(run(dir.path(), &missing, &["gen-env", "--out", "e.json"])),
        2
    );
    assert_eq!(
        code(run(
            dir.path(),
            DESK,
            &["gen-env", "--out", "no/such/dir/e.json"]
        )),
        2
    );

    let big = r#"{"planner": "ges-bound", "time": {"trial_s": 10}}"#;
    assert_eq!(
        code(run(dir.path(), big, &["run-trial", "--out", "t.json"])),
        3
    );
}

#[test]
fn shipped_configs_are_valid() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let dir = tempfile::tempdir().unwrap();
    for entry in std::fs::read_dir(root).unwrap() {
        let path = entry.unwrap().path();
        let text = std::fs::read_to_string(&path).unwrap();
        let cfg = abscov::experiment::ExperimentConfig::from_json(&text).unwrap();
        let env = cfg.environment().unwrap();
        cfg.validate(&env).unwrap();
        ok(&run(dir.path(), &text, &["gen-env", "--out", "env.json"]));
    }
}
