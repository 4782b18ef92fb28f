use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const STAGES: [&str; 7] = ["ingest", "cluster", "plan", "floorplan", "simulate", "calibrate", "report"];

fn voltisland(args: &[&str]) -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_voltisland"));
    cmd.args(args).env_remove("VOLTISLAND_OUT");
    cmd
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    let out_arg = format!("--output.dir={}", dir.display());
    let mut all: Vec<&str> = args.to_vec();
    all.push(&out_arg);
    voltisland(&all).output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run_in(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn error_line(out: &Output) -> Value {
    assert!(!out.status.success());
    let stderr = String::from_utf8(out.stderr.clone()).unwrap();
    let last = stderr.lines().last().expect("an error line on stderr");
    serde_json::from_str(last).unwrap_or_else(|e| panic!("not JSON: {last:?}: {e}"))
}

/// Every file under `dir`, keyed by relative path.
fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for entry in fs::read_dir(dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

fn plan_voltages(dir: &Path) -> Vec<f64> {
    fs::read_to_string(dir.join("plan.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect()
}

#[test]
fn run_all_on_bundled_fragment() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    let stdout = ok(dir, &["run-all", "--cluster.k=4"]);
    assert_eq!(stdout.lines().count(), STAGES.len());

    let table = fs::read_to_string(dir.join("slack_table.csv")).unwrap();
    assert!(table.lines().any(|l| l == "1,1,5.34,6"), "fragment minimum at MAC (1,1)");
    assert_eq!(table.lines().count(), 1 + 256);

    let clusters: std::collections::BTreeSet<String> = fs::read_to_string(dir.join("assignment.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().to_string())
        .collect();
    assert_eq!(clusters.len(), 4);

    let want = [0.95625, 0.96875, 0.98125, 0.99375];
    let got = plan_voltages(dir);
    assert_eq!(got.len(), 4);
    for (g, w) in got.iter().zip(want) {
        assert!((g - w).abs() < 1e-9, "{got:?}");
    }
    let report = fs::read_to_string(dir.join("plan_report.txt")).unwrap();
    assert!(report.contains("0.985"), "reported-value discrepancy is listed");

    let constraints = fs::read_to_string(dir.join("constraints.txt")).unwrap();
    assert_eq!(constraints.lines().filter(|l| l.starts_with("LOC ")).count(), 256);

    let sim = fs::read_to_string(dir.join("sim_summary.txt")).unwrap();
    assert!(sim.contains("outputs exact yes"), "{sim}");
    assert!(sim.contains("undetected 0"), "{sim}");

    let cal = fs::read_to_string(dir.join("calibration_summary.txt")).unwrap();
    assert!(cal.contains("converged true"), "{cal}");
    assert!(cal.contains("replay at final voltages: detected 0  undetected 0"), "{cal}");

    let power = fs::read_to_string(dir.join("power_report.txt")).unwrap();
    assert!(power.contains("baseline 408 mW at 1.0 V"), "{power}");
    assert!(power.contains("4.925"), "reference model value printed");
    assert!(power.contains("GAP"), "gap to measurement flagged");

    for stage in STAGES {
        let m: Value = serde_json::from_str(&fs::read_to_string(dir.join(format!("{stage}.manifest.json"))).unwrap())
            .unwrap();
        assert_eq!(m["command"], stage);
        assert_eq!(m["seed"], 1);
        assert_eq!(m["parameters"]["cluster.k"], "4");
        assert!(m["parameters"].get("output.dir").is_none());
        for (name, hash) in m["outputs"].as_object().unwrap() {
            let bytes = fs::read(dir.join(name)).unwrap();
            use sha2::Digest;
            assert_eq!(hash.as_str().unwrap(), hex::encode(sha2::Sha256::digest(&bytes)), "{stage} {name}");
        }
    }
    let sim_manifest: Value =
        serde_json::from_str(&fs::read_to_string(dir.join("simulate.manifest.json")).unwrap()).unwrap();
    let inputs = sim_manifest["inputs"].as_object().unwrap();
    assert!(inputs.contains_key("slack_table.csv") && inputs.contains_key("plan.csv"));
}

#[test]
fn single_partition_plan_is_the_midpoint() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    ok(dir, &["ingest"]);
    ok(dir, &["cluster", "--cluster.k", "1"]);
    let stdout = ok(dir, &["plan"]);
    assert!(stdout.contains("1 partitions at {0.975} V"), "{stdout}");
    let v = plan_voltages(dir);
    assert_eq!(v.len(), 1);
    assert!((v[0] - 0.975).abs() < 1e-12);
}

#[test]
fn unknown_algorithm_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let out = run_in(tmp.path(), &["cluster", "--cluster.algorithm=spectral"]);
    assert_eq!(out.status.code(), Some(2));
    let e = error_line(&out);
    assert_eq!(e["error"], "config");
    assert_eq!(e["key"], "cluster.algorithm");
    let msg = e["message"].as_str().unwrap();
    for name in ["hierarchical", "kmeans", "meanshift", "dbscan"] {
        assert!(msg.contains(name), "{msg}");
    }
}

#[test]
fn invalid_keys_name_their_path() {
    let tmp = TempDir::new().unwrap();
    let e = error_line(&run_in(tmp.path(), &["plan", "--plan.tecnology=22nm"]));
    assert_eq!(e["key"], "plan.tecnology");
    let e = error_line(&run_in(tmp.path(), &["simulate", "--sim.t_clk=fast"]));
    assert_eq!(e["key"], "sim.t_clk");

    let cfg = tmp.path().join("flow.cfg");
    fs::write(&cfg, "array.rows = 16\ncluster.bandwidth = 0.3\n").unwrap();
    let out = voltisland(&["ingest", "--config", cfg.to_str().unwrap()]).output().unwrap();
    assert_eq!(error_line(&out)["key"], "cluster.bandwidth");
}

#[test]
fn missing_artifact_names_the_producer() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    let out = run_in(dir, &["simulate"]);
    assert_eq!(out.status.code(), Some(3));
    let e = error_line(&out);
    assert_eq!(e["error"], "dependency");
    let msg = e["message"].as_str().unwrap();
    assert!(msg.contains("slack_table.csv") && msg.contains("voltisland ingest"), "{msg}");

    ok(dir, &["ingest"]);
    let msg = error_line(&run_in(dir, &["plan"]))["message"].as_str().unwrap().to_string();
    assert!(msg.contains("assignment.csv") && msg.contains("voltisland cluster"), "{msg}");

    ok(dir, &["cluster"]);
    let msg = error_line(&run_in(dir, &["report"]))["message"].as_str().unwrap().to_string();
    assert!(msg.contains("plan.csv") && msg.contains("voltisland plan"), "{msg}");

    ok(dir, &["plan"]);
    let msg = error_line(&run_in(dir, &["report", "--report.source=calibrated"]))["message"]
        .as_str()
        .unwrap()
        .to_string();
    assert!(msg.contains("voltisland calibrate"), "{msg}");
}

#[test]
fn reruns_are_byte_identical() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let args = ["run-all", "--seed=7", "--input.report=synthetic", "--input.profile=noisy_gradient", "--sim.trace"];
    ok(a.path(), &args);
    let first = snapshot(a.path());
    ok(a.path(), &args);
    assert_eq!(first, snapshot(a.path()));
    ok(b.path(), &args);
    assert_eq!(first, snapshot(b.path()));
    assert!(first.contains_key(Path::new("sim_trace.csv")));

    // a different seed changes the synthetic table and therefore the hashes
    let c = TempDir::new().unwrap();
    ok(c.path(), &["run-all", "--seed=8", "--input.report=synthetic", "--input.profile=noisy_gradient"]);
    assert_ne!(first[Path::new("slack_table.csv")], snapshot(c.path())[Path::new("slack_table.csv")]);
}

#[test]
fn run_all_equals_stage_by_stage() {
    let chained = TempDir::new().unwrap();
    let staged = TempDir::new().unwrap();
    let extra = ["--cluster.algorithm=hierarchical", "--cluster.linkage=complete", "--report.source=calibrated"];
    let mut args = vec!["run-all"];
    args.extend(extra);
    ok(chained.path(), &args);
    for stage in STAGES {
        let mut args = vec![stage];
        args.extend(extra);
        ok(staged.path(), &args);
    }
    let a = snapshot(chained.path());
    assert!(a.contains_key(Path::new("dendrogram.csv")));
    assert_eq!(a, snapshot(staged.path()));
}

#[test]
fn environment_overrides_output_root() {
    let tmp = TempDir::new().unwrap();
    let env_dir = tmp.path().join("from_env");
    let out = Command::new(env!("CARGO_BIN_EXE_voltisland"))
        .args(["ingest"])
        .env("VOLTISLAND_OUT", &env_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(env_dir.join("slack_table.csv").is_file());

    // a config file loses to the environment
    let cfg = tmp.path().join("flow.cfg");
    fs::write(&cfg, format!("output.dir = {}\n", tmp.path().join("from_file").display())).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_voltisland"))
        .args(["cluster", "--config", cfg.to_str().unwrap()])
        .env("VOLTISLAND_OUT", &env_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(env_dir.join("assignment.csv").is_file());
    assert!(!tmp.path().join("from_file").exists());

    // an explicit flag wins over both
    let flag_dir = tmp.path().join("from_flag");
    let out = Command::new(env!("CARGO_BIN_EXE_voltisland"))
        .args(["ingest".to_string(), format!("--output.dir={}", flag_dir.display())])
        .env("VOLTISLAND_OUT", &env_dir)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(flag_dir.join("slack_table.csv").is_file());
}

#[test]
fn sweep_writes_isolated_variant_directories() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    let variants = "4x(8x8){0.96,0.97,0.98,0.99}; 2x(16x8){0.95,1.0}; 1x(16x16){0.9}";
    let stdout = ok(dir, &["sweep", "--report.variants", variants]);
    assert!(stdout.contains("3 variants x 4 baselines"), "{stdout}");
    let root = dir.join("sweep");
    let combined = fs::read_to_string(root.join("sweep.csv")).unwrap();
    let mut subdirs: Vec<PathBuf> = fs::read_dir(&root)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_dir())
        .collect();
    subdirs.sort();
    assert_eq!(subdirs.len(), 3);
    for sub in &subdirs {
        let files: Vec<String> = fs::read_dir(sub)
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        assert_eq!(files.len(), 3, "{sub:?}: {files:?}");
        let csv = fs::read_to_string(sub.join("power.csv")).unwrap();
        let rows: Vec<&str> = csv.lines().skip(1).collect();
        assert_eq!(rows.len(), 4);
        for r in rows {
            assert!(combined.lines().any(|l| l == r), "{r} missing from sweep.csv");
        }
    }
    let four = fs::read_to_string(subdirs[0].join("power.csv")).unwrap();
    assert!(four.contains("28nm-commercial,408,"), "{four}");
    assert!(four.lines().any(|l| l.starts_with("\"4 × (8 × 8)") && l.ends_with(",4.925")), "{four}");

    let before = snapshot(dir);
    ok(dir, &["sweep", "--report.variants", variants]);
    assert_eq!(before, snapshot(dir));

    let e = error_line(&run_in(dir, &["sweep", "--report.variants=3x(8x8){1,1,1}"]));
    assert_eq!(e["key"], "report.variants");
}

#[test]
fn report_needs_a_known_baseline() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    let dims = ["--array.rows=8", "--array.cols=8"];
    for stage in ["ingest", "cluster", "plan"] {
        let mut args = vec![stage];
        args.extend(dims);
        ok(dir, &args);
    }
    let e = error_line(&run_in(dir, &["report", dims[0], dims[1]]));
    assert_eq!(e["key"], "report.baseline_mw");
    let stdout = ok(dir, &["report", dims[0], dims[1], "--report.baseline_mw=100"]);
    assert!(stdout.contains("of 100 mW"), "{stdout}");

    // changing the array after the fact is caught
    let e = error_line(&run_in(dir, &["simulate"]));
    assert_eq!(e["error"], "dependency");
}
