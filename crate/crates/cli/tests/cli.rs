use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn amv() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_amv"));
    c.env_remove("AMV_THREADS");
    c
}

fn write(dir: &Path, name: &str, v: &Value) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p
}

fn run(cmd: &mut Command) -> (i32, String, String) {
    let Output { status, stdout, stderr } = cmd.output().unwrap();
    (status.code().unwrap(), String::from_utf8(stdout).unwrap(), String::from_utf8(stderr).unwrap())
}

fn csv_rows(text: &str) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect()
}

#[test]
fn eval_square_in_one_dimension() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "e.json",
        &json!({
            "space": {"kind": "euclidean", "dim": 1},
            "field": "x^2",
            "points": [[0.0]],
            "schedule": {"r0": 0.5, "ratio": 0.7, "count": 8}
        }),
    );
    let (code, out, err) = run(amv().args(["eval", "--config"]).arg(&cfg));
    assert_eq!(code, 0, "{err}");
    assert!(out.starts_with("point_id,r,value,abs_error,verdict\n"));
    let rows = csv_rows(&out);
    assert_eq!(rows.len(), 9);
    let summary = rows.last().unwrap();
    assert_eq!(summary[1], "0.0");
    assert_eq!(summary[4], "converged");
    let v: f64 = summary[2].parse().unwrap();
    assert!((v - 1.0 / 3.0).abs() < 1e-12, "{v}");
}

#[test]
fn eval_bose_rows_follow_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "b.json",
        &json!({
            "space": {"kind": "weighted", "dim": 2, "density": "(x+y)^2"},
            "field": {"builtin": "bose-example"},
            "points": [[1.0, 1.0]],
            "schedule": {"r0": 1.0, "ratio": 0.6, "count": 6},
            "output": {"format": "csv"}
        }),
    );
    let (code, out, err) = run(amv().args(["eval", "--config"]).arg(&cfg));
    assert_eq!(code, 0, "{err}");
    let rows = csv_rows(&out);
    for row in &rows[..6] {
        let r: f64 = row[1].parse().unwrap();
        let v: f64 = row[2].parse().unwrap();
        let exact = r * r / (6.0 * (r * r + 8.0));
        assert!((v - exact).abs() <= 1e-8 * exact, "r = {r}: {v} vs {exact}");
    }
}

#[test]
fn eval_json_output_to_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let cfg = write(
        dir.path(),
        "e.json",
        &json!({
            "space": {"kind": "lebesgue_dirac", "dim": 2},
            "field": {"expr": "1", "point_value": {"at": [0.0, 0.0], "value": 0.0}},
            "points": [[0.0, 0.0]],
            "schedule": {"r0": 0.02, "ratio": 0.7, "count": 14}
        }),
    );
    let (code, _, err) = run(amv().args(["eval", "--format", "json", "--config"]).arg(&cfg).arg("--out").arg(&out));
    assert_eq!(code, 0, "{err}");
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let res = &v["points"][0]["result"];
    assert_eq!(res["verdict"], "converged");
    assert!((res["value"].as_f64().unwrap() - std::f64::consts::PI).abs() < 1e-6);
}

#[test]
fn malformed_schedule_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "bad.json",
        &json!({
            "space": {"kind": "euclidean", "dim": 1},
            "field": "x",
            "points": [[0.0]],
            "schedule": {"r0": 0.5, "ratio": 1.0, "count": 8}
        }),
    );
    let (code, _, err) = run(amv().args(["eval", "--config"]).arg(&cfg));
    assert_eq!(code, 1);
    assert!(err.contains("schedule.ratio"), "{err}");
}

#[test]
fn config_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let base = json!({
        "space": {"kind": "euclidean", "dim": 2},
        "field": "x",
        "points": [[0.0, 0.0]],
        "schedule": {"r0": 0.5, "ratio": 0.5, "count": 6}
    });
    let mut cases = Vec::new();
    let mut v = base.clone();
    v["space"] = json!({"kind": "hyperbolic"});
    cases.push(("unknown space", v));
    let mut v = base.clone();
    v["field"] = json!({"builtin": "nope"});
    cases.push(("unknown built-in", v));
    let mut v = base.clone();
    v["field"] = json!("x +* y");
    cases.push(("bad expression", v));
    let mut v = base.clone();
    v["points"] = json!([[0.0]]);
    cases.push(("wrong point dimension", v));
    let mut v = base.clone();
    v["space"] = json!({"kind": "heisenberg"});
    v["points"] = json!([[0.0, 0.0, 0.0]]);
    cases.push(("missing seed", v));
    for (what, v) in cases {
        let cfg = write(dir.path(), "c.json", &v);
        let (code, _, err) = run(amv().args(["eval", "--config"]).arg(&cfg));
        assert_eq!(code, 1, "{what}: {err}");
    }
    let (code, _, _) = run(amv().args(["eval", "--config"]).arg(dir.path().join("missing.json")));
    assert_eq!(code, 1);
}

#[test]
fn unwritable_output_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "e.json",
        &json!({
            "space": {"kind": "euclidean", "dim": 1},
            "field": "x",
            "points": [[0.0]],
            "schedule": {"r0": 0.5, "ratio": 0.5, "count": 5}
        }),
    );
    let (code, _, err) =
        run(amv().args(["eval", "--config"]).arg(&cfg).arg("--out").arg(dir.path().join("no/such/dir/out.csv")));
    assert_eq!(code, 1, "{err}");
}

#[test]
fn bad_thread_count_exits_one() {
    let (code, _, err) = run(amv().env("AMV_THREADS", "zero").args(["verify", "--suite", "euclid"]));
    assert_eq!(code, 1);
    assert!(err.contains("AMV_THREADS"));
}

#[test]
fn verify_euclid_passes_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    let (code, _, err) = run(amv().env("AMV_THREADS", "2").args(["verify", "--suite", "euclid", "--out"]).arg(&a));
    assert_eq!(code, 0, "{err}");
    let (code, _, _) = run(amv().args(["verify", "--suite", "euclid", "--out"]).arg(&b));
    assert_eq!(code, 0);
    let ta = std::fs::read(&a).unwrap();
    assert_eq!(ta, std::fs::read(&b).unwrap());
    let v: Value = serde_json::from_slice(&ta).unwrap();
    assert_eq!(v["passed"], true);
    assert_eq!(v["schema_version"], 1);
    assert!(v.get("duration").is_none());
    for c in v["cases"].as_array().unwrap() {
        assert!(["paper", "trivial", "derived"].contains(&c["expected_provenance"].as_str().unwrap()));
    }
}

#[test]
fn verify_operator_passes() {
    let (code, out, err) = run(amv().args(["verify", "--suite", "operator", "--timing", "--format", "csv"]));
    assert_eq!(code, 0, "{err}");
    let rows = csv_rows(&out);
    assert!(rows.iter().any(|r| r[0].starts_with("green/cloud")));
    assert!(rows.iter().all(|r| r[5] == "true"));
}

#[test]
fn verify_unknown_suite_exits_one() {
    let (code, _, err) = run(amv().args(["verify", "--suite", "hyperbolic"]));
    assert_eq!(code, 1);
    assert!(err.contains("known suites"));
}

#[test]
fn verify_heisenberg_with_small_budget() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "o.json", &json!({"budget": {"max_evals": 40000, "target_error": 0.0}, "seed": 5}));
    let out = dir.path().join("h.json");
    let (code, _, err) =
        run(amv().args(["verify", "--suite", "heisenberg", "--config"]).arg(&cfg).arg("--out").arg(&out));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let passed = v["passed"].as_bool().unwrap();
    assert_eq!(code, if passed { 0 } else { 2 }, "{err}");
    assert_eq!(v["environment"]["seed"], 5);
    // Fewer samples widen every Monte Carlo tolerance.
    let tol = v["cases"].as_array().unwrap().iter().find(|c| c["case_id"] == "ratio/x2/p0").unwrap()["tolerance"]
        .as_f64()
        .unwrap();
    assert!(tol > 1e-3, "{tol}");
}

fn circle_atoms(n: usize) -> Value {
    let atoms: Vec<Value> = (0..n)
        .map(|k| {
            let a = std::f64::consts::TAU * k as f64 / n as f64;
            json!({"point": [a.cos(), a.sin()], "weight": 1.0 / n as f64})
        })
        .collect();
    Value::Array(atoms)
}

#[test]
fn green_on_uniform_circle() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "g.json",
        &json!({
            "cloud": {
                "space": {"kind": "euclidean", "dim": 2},
                "region": {"min": [-1.5, -1.5], "max": [1.5, 1.5]},
                "atoms": circle_atoms(61),
                "r": 0.35
            },
            "u": "x^3 + y",
            "v": "x*y"
        }),
    );
    let (code, out, err) = run(amv().args(["green", "--config"]).arg(&cfg));
    assert_eq!(code, 0, "{err}");
    let v: Value = serde_json::from_str(&out).unwrap();
    let scale = v["scale"].as_f64().unwrap();
    assert!(v["selfadjoint_defect"].as_f64().unwrap() <= 1e-12);
    assert!(v["rhs"].as_f64().unwrap().abs() <= 1e-12 * scale);
}

#[test]
fn green_on_weighted_cloud() {
    let dir = tempfile::tempdir().unwrap();
    let cloud = json!({
        "space": {"kind": "weighted", "dim": 2, "density": "2 + x^2 + y/4"},
        "region": {"min": [0.0, 0.0], "max": [1.0, 1.0], "jitter": 0.5},
        "resolution": 20,
        "seed": 3,
        "r": 0.15
    });
    let cfg = write(dir.path(), "g.json", &json!({"cloud": cloud, "u": "sin(3*x) + y", "v": "x*y"}));
    let (code, out, err) = run(amv().args(["green", "--config"]).arg(&cfg));
    assert_eq!(code, 0, "{err}");
    let v: Value = serde_json::from_str(&out).unwrap();
    let scale = v["scale"].as_f64().unwrap();
    assert!(v["defect"].as_f64().unwrap() <= 1e-10 * scale);
    assert!(v["rhs"].as_f64().unwrap().abs() > 1e-6 * scale);

    let cfg = write(dir.path(), "g2.json", &json!({"cloud": cloud, "u": "x - y^2", "v": "x - y^2"}));
    let (code, out, _) = run(amv().args(["green", "--format", "json", "--config"]).arg(&cfg));
    assert_eq!(code, 0);
    let v: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["lhs"].as_f64().unwrap(), 0.0);
    assert!(v["rhs"].as_f64().unwrap().abs() <= 1e-12 * v["scale"].as_f64().unwrap());
}

fn grid_1d(resolution: usize, r: f64) -> Value {
    json!({
        "space": {"kind": "euclidean", "dim": 1},
        "region": {"min": [0.0], "max": [1.0]},
        "resolution": resolution,
        "r": r
    })
}

#[test]
fn poisson_constant_and_linear() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "p.json", &json!({"cloud": grid_1d(80, 0.05), "f": "0", "boundary": "2.5"}));
    let (code, out, err) = run(amv().args(["poisson", "--config"]).arg(&cfg));
    assert_eq!(code, 0, "{err}");
    let rows = csv_rows(&out);
    assert_eq!(rows.len(), 80);
    for r in &rows {
        assert!((r[2].parse::<f64>().unwrap() - 2.5).abs() < 1e-12);
    }
    let cfg = write(dir.path(), "p.json", &json!({"cloud": grid_1d(100, 0.035), "f": "0", "boundary": "1 - 2*x"}));
    let (code, out, err) = run(amv().args(["poisson", "--format", "json", "--config"]).arg(&cfg));
    assert_eq!(code, 0, "{err}");
    let v: Value = serde_json::from_str(&out).unwrap();
    for a in v["atoms"].as_array().unwrap() {
        let x = a["point"][0].as_f64().unwrap();
        assert!((a["u"].as_f64().unwrap() - (1.0 - 2.0 * x)).abs() < 1e-8);
    }
}

#[test]
fn poisson_singular_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let atoms: Vec<Value> =
        [0.0, 0.1, 2.0, 2.1, 4.0, 4.1].iter().map(|x| json!({"point": [x], "weight": 0.1})).collect();
    let cloud = json!({
        "space": {"kind": "euclidean", "dim": 1},
        "region": {"min": [0.0], "max": [4.1]},
        "atoms": atoms,
        "r": 0.15
    });
    let cfg = write(dir.path(), "s.json", &json!({"cloud": cloud, "f": "1", "boundary": "0"}));
    let (code, _, err) = run(amv().args(["poisson", "--config"]).arg(&cfg));
    assert_eq!(code, 2, "{err}");
    assert!(err.contains("condition"), "{err}");
}

#[test]
fn export_operator_triplets() {
    let dir = tempfile::tempdir().unwrap();
    // Atoms a quarter apart sit exactly at distance r, so the radius is
    // untied upward and interior rows see both neighbours.
    let atoms: Vec<Value> = [0.0, 0.25, 0.5, 0.75, 1.0].iter().map(|x| json!({"point": [x], "weight": 0.25})).collect();
    let cloud = json!({
        "space": {"kind": "euclidean", "dim": 1},
        "region": {"min": [0.0], "max": [1.0]},
        "atoms": atoms,
        "r": 0.25
    });
    let cfg = write(dir.path(), "x.json", &json!({"cloud": cloud, "kind": "tr"}));
    let (code, out, err) = run(amv().args(["export-operator", "--config"]).arg(&cfg));
    assert_eq!(code, 0, "{err}");
    let mut lines = out.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("# amv-operator rows=5 cols=5 nnz=13"), "{header}");
    assert!(header.ends_with("kind=tr"));
    assert_eq!(lines.count(), 13);
    assert!(err.contains("ties"), "{err}");

    // Alone in its ball, every atom has Δ_r = 0.
    let mut cloud = cloud;
    cloud["r"] = json!(0.1);
    let cfg = write(dir.path(), "x.json", &json!({"cloud": cloud, "kind": "delta_r"}));
    let (code, out, _) = run(amv().args(["export-operator", "--format", "json", "--config"]).arg(&cfg));
    assert_eq!(code, 0);
    let v: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["kind"], "Delta_r");
    let t = v["triplets"].as_array().unwrap();
    assert_eq!(t.len(), 5);
    assert!(t.iter().all(|t| t[2].as_f64().unwrap() == 0.0));
}

#[test]
fn heisenberg_constants_regenerate() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("c.json");
    let (code, _, err) =
        run(amv().args(["heisenberg-constants", "--samples", "50000", "--seed", "9", "--out"]).arg(&out));
    assert_eq!(code, 0, "{err}");
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let c = v["c_estimate"].as_f64().unwrap();
    let se = v["std_error"].as_f64().unwrap();
    assert_eq!(v["samples"], 50000);
    let frozen: Value = serde_json::from_str(include_str!("../../core/data/heisenberg_constants.json")).unwrap();
    let (cf, sf) = (frozen["c_estimate"].as_f64().unwrap(), frozen["std_error"].as_f64().unwrap());
    assert!((c - cf).abs() <= 3.0 * se.hypot(sf), "{c} vs {cf}");
}
