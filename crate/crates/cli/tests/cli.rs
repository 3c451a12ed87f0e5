use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

const FILES: &[&str] = &[
    "config.json",
    "measures.json",
    "cost_tensor.json",
    "cost_tensor.bin",
    "cost_tensor.csv",
    "solution.json",
    "plan.csv",
    "potentials.csv",
    "report.json",
    "monge.json",
    "barycenter.json",
    "nu.json",
    "verification.json",
];

fn example() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/sphere_m3.json")
}

fn golden() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/sphere_m3")
}

fn mmot(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_mmot"));
    cmd.args(args).env_remove("MMOT_THREADS");
    if let Some(t) = threads {
        cmd.env("MMOT_THREADS", t);
    }
    cmd.output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn solve_to(config: &Path, dir: &Path, threads: Option<&str>) -> Output {
    mmot(&["solve", "-c", config.to_str().unwrap(), "-o", dir.to_str().unwrap()], threads)
}

fn write_config(dir: &Path, name: &str, value: &Value) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, serde_json::to_string_pretty(value).unwrap()).unwrap();
    p
}

fn small_config(out: &Path) -> Value {
    json!({
        "schema": 1,
        "manifold": { "kind": "torus", "dim": 2 },
        "marginals": [
            { "generator": { "kind": "uniform_random", "n": 4, "seed": 1 } },
            { "generator": { "kind": "uniform_random", "n": 4, "seed": 2 } },
            { "generator": { "kind": "uniform_random", "n": 4, "seed": 3 } }
        ],
        "output_dir": out
    })
}

#[test]
fn example_matches_golden_outputs() {
    let tmp = TempDir::new().unwrap();
    let out = solve_to(&example(), tmp.path(), None);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    if std::env::var_os("MMOT_BLESS").is_some() {
        fs::create_dir_all(golden()).unwrap();
        for f in FILES {
            fs::copy(tmp.path().join(f), golden().join(f)).unwrap();
        }
    }
    for f in FILES {
        let got = fs::read(tmp.path().join(f)).unwrap();
        let want = fs::read(golden().join(f)).unwrap_or_else(|_| panic!("missing golden file {f}"));
        assert!(got == want, "{f} differs from the committed reference");
    }
}

#[test]
fn thread_count_does_not_change_outputs() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    assert_eq!(code(&solve_to(&example(), a.path(), Some("1"))), 0);
    assert_eq!(code(&solve_to(&example(), b.path(), Some("3"))), 0);
    for f in FILES {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn verify_accepts_a_fresh_run_and_rejects_tampering() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(code(&solve_to(&example(), tmp.path(), None)), 0);
    let out = mmot(&["verify", tmp.path().to_str().unwrap()], None);
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    // Change one mass in the CSV copy only.
    let plan = tmp.path().join("plan.csv");
    let original = fs::read_to_string(&plan).unwrap();
    let mut lines: Vec<String> = original.lines().map(String::from).collect();
    let last = lines[1].rfind(',').unwrap();
    lines[1] = format!("{},0.5", &lines[1][..last]);
    fs::write(&plan, lines.join("\n") + "\n").unwrap();
    let out = mmot(&["verify", tmp.path().to_str().unwrap()], None);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL artifacts"));
    fs::write(&plan, original).unwrap();

    // Halve one mass in the plan itself.
    let sol_path = tmp.path().join("solution.json");
    let mut sol: Value = serde_json::from_str(&fs::read_to_string(&sol_path).unwrap()).unwrap();
    let mass = sol["entries"][0][1].as_f64().unwrap();
    sol["entries"][0][1] = json!(mass * 0.5);
    fs::write(&sol_path, serde_json::to_string(&sol).unwrap()).unwrap();
    let out = mmot(&["verify", tmp.path().to_str().unwrap()], None);
    assert_eq!(code(&out), 1);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("FAIL marginals") && stdout.contains("FAIL report"), "{stdout}");
}

#[test]
fn missing_weights_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = small_config(tmp.path());
    cfg["marginals"][1] = json!({ "points": [[0.1, 0.2], [0.5, 0.5]] });
    let path = write_config(tmp.path(), "cfg.json", &cfg);
    let out = solve_to(&path, &tmp.path().join("run"), None);
    assert_eq!(code(&out), 2);
    let err = stderr(&out);
    assert!(err.contains("marginal 1") && err.contains("`weights`"), "{err}");
}

#[test]
fn malformed_configs_exit_with_code_two() {
    let tmp = TempDir::new().unwrap();
    let base = small_config(tmp.path());
    let mut cases = Vec::new();
    let mut v = base.clone();
    v.as_object_mut().unwrap().remove("schema");
    cases.push((v, "schema"));
    let mut v = base.clone();
    v["schema"] = json!(2);
    cases.push((v, "schema"));
    let mut v = base.clone();
    v["verifications"] = json!(["duality", "telepathy"]);
    cases.push((v, "telepathy"));
    let mut v = base.clone();
    v["cost"] = json!([{ "f": "half_square" }]);
    cases.push((v, "3 marginals"));
    let mut v = base.clone();
    v["cost"] = json!({ "f": "power", "p": 2.0 });
    cases.push((v, "p > 2"));
    let mut v = base;
    v["manifold"] = json!({ "kind": "sphere", "dim": 3 });
    cases.push((v, "sphere dimension"));
    for (k, (cfg, needle)) in cases.into_iter().enumerate() {
        let path = write_config(tmp.path(), &format!("cfg{k}.json"), &cfg);
        let out = solve_to(&path, &tmp.path().join("run"), None);
        assert_eq!(code(&out), 2, "case {k}");
        assert!(stderr(&out).contains(needle), "case {k}: {}", stderr(&out));
    }
    let out = solve_to(&example(), &tmp.path().join("run"), Some("zero"));
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("MMOT_THREADS"));
}

#[test]
fn sinkhorn_runs_and_thresholds() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = small_config(tmp.path());
    cfg["solver"] = json!({ "method": "sinkhorn", "epsilon_schedule": { "end": 0.01 } });
    let path = write_config(tmp.path(), "loose.json", &cfg);
    let out = solve_to(&path, &tmp.path().join("a"), None);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let v: Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("a/verification.json")).unwrap()).unwrap();
    assert_eq!(v["pass"], json!(true));

    // Demand an exact-LP gap from an ε = 0.3 run.
    cfg["solver"]["epsilon_schedule"] = json!({ "end": 0.3 });
    cfg["tolerances"] = json!({ "gap": 1e-8 });
    let path = write_config(tmp.path(), "strict.json", &cfg);
    let out = solve_to(&path, &tmp.path().join("b"), None);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("duality"));
    cfg["warn_only"] = json!(true);
    let path = write_config(tmp.path(), "warn.json", &cfg);
    let out = solve_to(&path, &tmp.path().join("c"), None);
    assert_eq!(code(&out), 0);
    assert!(stderr(&out).contains("warning"));
}

#[test]
fn solver_failures_exit_with_code_three() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = small_config(tmp.path());
    cfg["solver"] = json!({ "method": "sinkhorn", "max_iter": 2, "tol": 1e-14 });
    let path = write_config(tmp.path(), "cfg.json", &cfg);
    let out = solve_to(&path, &tmp.path().join("run"), None);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("iteration limit"), "{}", stderr(&out));
}

fn karcher_json(dir: &Path, points: Value) -> Value {
    let cfg = json!({
        "schema": 1,
        "manifold": { "kind": "sphere", "dim": 2 },
        "points": points,
        "grid_resolution": 40,
        "output_dir": dir.join("k"),
    });
    let path = write_config(dir, "karcher.json", &cfg);
    let out = mmot(&["karcher", "-c", path.to_str().unwrap()], None);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(dir.join("k/grid_scan.csv").exists());
    serde_json::from_str(&fs::read_to_string(dir.join("k/karcher.json")).unwrap()).unwrap()
}

#[test]
fn karcher_poles_are_not_unique() {
    let tmp = TempDir::new().unwrap();
    let doc = karcher_json(tmp.path(), json!([[0.0, 0.0, 1.0], [0.0, 0.0, -1.0]]));
    let r = &doc["result"];
    assert_eq!(r["unique"], json!(false));
    let quarter = std::f64::consts::PI.powi(2) / 4.0;
    assert!((r["value"].as_f64().unwrap() - quarter).abs() < 1e-9);
    // No lattice point sits exactly on the equator; the scan only bounds the minimum from above.
    let grid = doc["grid"]["value"].as_f64().unwrap();
    assert!(grid >= quarter - 1e-12 && grid - quarter < 1e-2);
    let lines = fs::read_to_string(tmp.path().join("k/grid_scan.csv")).unwrap().lines().count();
    assert_eq!(lines, 1 + 40 * 40);
}

#[test]
fn karcher_of_a_repeated_point_is_that_point() {
    let tmp = TempDir::new().unwrap();
    let p = [0.6, 0.0, 0.8];
    let doc = karcher_json(tmp.path(), json!([p, p]));
    let r = &doc["result"];
    assert_eq!(r["value"].as_f64().unwrap(), 0.0);
    assert_eq!(r["unique"], json!(true));
    let y: Vec<f64> = serde_json::from_value(r["minimizers"][0].clone()).unwrap();
    assert!(y.iter().zip(p).all(|(a, b)| (a - b).abs() < 1e-9));
}

#[test]
fn karcher_rejects_a_lone_point() {
    let tmp = TempDir::new().unwrap();
    let cfg = json!({
        "schema": 1,
        "manifold": { "kind": "sphere", "dim": 2 },
        "points": [[0.0, 0.0, 1.0]],
        "output_dir": tmp.path(),
    });
    let path = write_config(tmp.path(), "k.json", &cfg);
    let out = mmot(&["karcher", "-c", path.to_str().unwrap()], None);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("at least two points"));
}

#[test]
fn gen_is_reproducible() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = small_config(tmp.path());
    cfg["marginals"][0] = json!({ "generator": { "kind": "cluster", "n": 6, "seed": 9, "spread": 0.1, "random_weights": true } });
    let path = write_config(tmp.path(), "cfg.json", &cfg);
    let run = |d: &str| {
        let out = mmot(&["gen", "-c", path.to_str().unwrap(), "-o", tmp.path().join(d).to_str().unwrap()], None);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        fs::read_to_string(tmp.path().join(d).join("measures.json")).unwrap()
    };
    let (a, b) = (run("a"), run("b"));
    assert_eq!(a, b);
    let ms: Value = serde_json::from_str(&a).unwrap();
    assert_eq!(ms.as_array().unwrap().len(), 3);
    let w: Vec<f64> = serde_json::from_value(ms[0]["weights"].clone()).unwrap();
    assert_eq!(w.len(), 6);
    assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert!(w.windows(2).any(|p| p[0] != p[1]));
}

#[test]
fn dirac_run_is_a_single_tuple() {
    let tmp = TempDir::new().unwrap();
    let pts = [[0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
    let cfg = json!({
        "schema": 1,
        "manifold": { "kind": "sphere", "dim": 2 },
        "marginals": pts.iter().map(|p| json!({ "points": [p], "weights": [1.0] })).collect::<Vec<_>>(),
        "output_dir": tmp.path().join("run"),
    });
    let path = write_config(tmp.path(), "cfg.json", &cfg);
    let out = mmot(&["solve", "-c", path.to_str().unwrap()], None);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let read = |f: &str| -> Value { serde_json::from_str(&fs::read_to_string(tmp.path().join("run").join(f)).unwrap()).unwrap() };
    let tensor = read("cost_tensor.json");
    assert_eq!(read("report.json")["solve"]["primal_value"], tensor["values"][0]);
    assert_eq!(read("monge.json")["graph_fraction"], json!(1.0));
    // Three mutually orthogonal points: the mean is the centroid direction.
    let d = (1.0f64 / 3f64.sqrt()).acos();
    let value = tensor["values"][0].as_f64().unwrap();
    assert!((value - 1.5 * d * d).abs() < 1e-9);
}

#[test]
fn karcher_euclidean_triple() {
    let tmp = TempDir::new().unwrap();
    let cfg = json!({
        "schema": 1,
        "manifold": { "kind": "euclidean", "dim": 2 },
        "points": [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
        "output_dir": tmp.path(),
    });
    let path = write_config(tmp.path(), "k.json", &cfg);
    let out = mmot(&["karcher", "-c", path.to_str().unwrap()], None);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let doc: Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("karcher.json")).unwrap()).unwrap();
    let y: Vec<f64> = serde_json::from_value(doc["result"]["minimizers"][0].clone()).unwrap();
    assert!(y.iter().all(|c| (c - 1.0 / 3.0).abs() < 1e-9), "{y:?}");
}
