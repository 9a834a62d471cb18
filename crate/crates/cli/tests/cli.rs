use std::path::Path;
use std::process::{Command, Output};
use tempfile::TempDir;

fn heavytail(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_heavytail"))
        .args(args)
        .env("OUTPUT_DIR", dir.join("out"))
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn outputs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir.join("out"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != "manifest.json")
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn missing_seed_is_a_validation_failure() {
    let d = TempDir::new().unwrap();
    let cfg = write_config(d.path(), "c.conf", "model = boltzmann\n");
    let o = heavytail(d.path(), &["tails", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("`seed`"));
}

#[test]
fn offending_keys_are_named() {
    let d = TempDir::new().unwrap();
    for (text, key) in [
        ("seed = 1\nmodel = boltzmann\nspeed = 3\n", "`speed`"),
        ("seed = 1\nmodel = lorentz\n", "`model`"),
        ("seed = 1\nmodel = boltzmann\nalpha = 1.5\n", "`alpha`"),
        ("seed = 1\nmodel = iid_pareto\nalpha = 1.5\nmode = sideways\n", "`mode`"),
        ("seed = x\nmodel = boltzmann\n", "`seed`"),
    ] {
        let cfg = write_config(d.path(), "c.conf", text);
        let sub = if text.contains("mode") { "converge" } else { "tails" };
        let o = heavytail(d.path(), &[sub, "--config", &cfg]);
        assert_eq!(o.status.code(), Some(2), "{text}");
        assert!(stderr(&o).contains(key), "{}", stderr(&o));
    }
}

#[test]
fn seed_flag_supplies_a_missing_seed_and_names_outputs() {
    let d = TempDir::new().unwrap();
    let cfg = write_config(d.path(), "c.conf", "model = iid_pareto\nalpha = 1.5\nsamples = 1000\nhill_orders = 10\n");
    let o = heavytail(d.path(), &["tails", "--config", &cfg, "--seed", "99"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let names: Vec<String> = outputs(d.path()).into_iter().map(|(n, _)| n).collect();
    assert_eq!(names, ["hill_seed99.csv", "tails_seed99.csv"]);
    let manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(d.path().join("out/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 99);
    assert_eq!(manifest["config"]["seed"], "99");
    assert!(manifest["wall_time_seconds"].as_f64().unwrap() >= 0.0);
}

#[test]
fn reruns_are_byte_identical_across_worker_counts() {
    let configs = [
        ("converge", "model = iid_pareto\nalpha = 1.5\nseed = 5\ncentering = mean\nN_schedule = 10, 100\nreplicas = 2000\n"),
        ("coupling", "model = boltzmann\nseed = 6\nblocks = 20000\ntheta_steps = 20000\nregen_paths = 2000\nregen_n_max = 8\n"),
        ("spectral", "model = boltzmann\nseed = 7\ngrid_sizes = 64\npaths = 3\npath_length = 100\n"),
        ("kinetic", "model = boltzmann\nseed = 8\nN_schedule = 10\npaths = 200\nk_count = 2\ngrid_points = 4096\n"),
    ];
    for (sub, text) in configs {
        let runs: Vec<Vec<(String, Vec<u8>)>> = ["1", "3", "1"]
            .iter()
            .map(|w| {
                let d = TempDir::new().unwrap();
                let cfg = write_config(d.path(), "c.conf", text);
                let o = heavytail(d.path(), &[sub, "--config", &cfg, "--workers", w]);
                assert_eq!(o.status.code(), Some(0), "{sub}: {}", stderr(&o));
                outputs(d.path())
            })
            .collect();
        assert!(!runs[0].is_empty());
        assert_eq!(runs[0], runs[1], "{sub} differs between worker counts");
        assert_eq!(runs[0], runs[2], "{sub} differs between reruns");
    }
}

#[test]
fn converge_writes_the_report_and_ensemble() {
    let d = TempDir::new().unwrap();
    let cfg = write_config(d.path(), "c.conf", "model = iid_pareto\nalpha = 0.5\nsymmetric = false\nseed = 3\nN_schedule = 10, 100\nreplicas = 5000\n");
    let o = heavytail(d.path(), &["converge", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(d.path().join("out/stable_report_seed3.json")).unwrap()).unwrap();
    assert!(report["cf_distance"].as_f64().unwrap() < 0.05);
    assert_eq!(report["per_N"].as_array().unwrap().len(), 2);
    let ensemble = std::fs::read_to_string(d.path().join("out/ensemble_seed3.csv")).unwrap();
    assert!(ensemble.starts_with("replica,N,value\n0,10,"));
    assert_eq!(ensemble.lines().count(), 1 + 2 * 5000);
}

#[test]
fn a_growing_cf_distance_fails_the_gate() {
    // N = 1 is the raw Pareto law, far from the limit, placed after N = 1000
    let d = TempDir::new().unwrap();
    let cfg = write_config(d.path(), "c.conf", "model = iid_pareto\nalpha = 0.5\nsymmetric = false\nseed = 3\nN_schedule = 1000, 1\nreplicas = 20000\n");
    let o = heavytail(d.path(), &["converge", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("FAILED"));
    let manifest = std::fs::read_to_string(d.path().join("out/manifest.json")).unwrap();
    assert!(manifest.contains("\"status\": \"FAILED\""));
}

#[test]
fn centering_rules_are_enforced() {
    let d = TempDir::new().unwrap();
    let cfg = write_config(d.path(), "c.conf", "model = reciprocal\nsymmetric = false\nseed = 1\ncentering = mean\nN_schedule = 10\nreplicas = 10\n");
    let o = heavytail(d.path(), &["converge", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("`mean`"));
    let cfg = write_config(d.path(), "c.conf", "model = iid_pareto\nalpha = 1.5\nseed = 1\ncentering = truncated\nN_schedule = 10\nreplicas = 10\n");
    assert_eq!(heavytail(d.path(), &["converge", "--config", &cfg]).status.code(), Some(2));
}
