use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
master_seed = 5

[lesc]
rounds = 3
round_interval_s = 60.0

[train]
hidden_size = 8

[dataset]
kind = "synthetic"
samples_per_client = 40

[dataset.synthetic]
n_features = 8
samples_per_class = 30
test_samples_per_class = 10
"#;

fn fello_sim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fello-sim"))
        .args(args)
        .output()
        .expect("spawn fello-sim")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn validate_accepts_synthetic_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "s.toml", SMALL);
    let o = fello_sim(&["validate", &cfg]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("ok:"));
}

#[test]
fn invalid_value_exits_with_config_status() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.toml", "[constellation]\ninclination_deg = 200\n");
    let o = fello_sim(&["validate", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("constellation.inclination_deg"));
}

#[test]
fn missing_mnist_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("[dataset]\nmnist_dir = \"{}\"\n", dir.path().join("absent").display());
    let cfg = write(dir.path(), "m.toml", &text);
    let o = fello_sim(&["validate", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("dataset.mnist_dir"));
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(fello_sim(&["run"]).status.code(), Some(1));
    assert_eq!(fello_sim(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(fello_sim(&["--help"]).status.code(), Some(0));
}

#[test]
fn overhead_prints_reference_totals() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "empty.toml", "");
    let out = dir.path().join("report");
    let o = fello_sim(&["overhead", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    for total in ["2.362040", "15.670845", "2.350400"] {
        assert!(text.contains(total), "{text}");
    }
    assert_eq!(fs::read_to_string(out.join("overhead.txt")).unwrap(), text);
    assert!(fs::read_to_string(out.join("overhead.csv")).unwrap().contains("15.670845"));
}

#[test]
fn linkbudget_between_neighbours() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "empty.toml", "");
    let o = fello_sim(&["linkbudget", &cfg, "--from", "1,1", "--to", "1,2", "--time", "0"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("distance_km        2171.623"));
    let same = fello_sim(&["linkbudget", &cfg, "--from", "1,1", "--to", "1,1"]);
    assert_eq!(same.status.code(), Some(2));
}

#[test]
fn runs_are_identical_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "s.toml", SMALL);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for (out, workers) in [(&a, "1"), (&b, "4")] {
        let o = fello_sim(&["run", &cfg, "--out", out.to_str().unwrap(), "--workers", workers]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    let ma = fs::read(a.join("metrics.csv")).unwrap();
    assert_eq!(ma, fs::read(b.join("metrics.csv")).unwrap());
    assert_eq!(String::from_utf8(ma).unwrap().lines().count(), 2 + 9);

    // The manifest alone reproduces the run.
    let c = dir.path().join("c");
    let manifest = a.join("manifest.toml");
    let o = fello_sim(&["run", manifest.to_str().unwrap(), "--out", c.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(fs::read(a.join("metrics.csv")).unwrap(), fs::read(c.join("metrics.csv")).unwrap());
}

#[test]
fn seed_flag_changes_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "s.toml", SMALL);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    fello_sim(&["run", &cfg, "--out", a.to_str().unwrap()]);
    fello_sim(&["run", &cfg, "--out", b.to_str().unwrap(), "--seed", "6"]);
    assert_ne!(fs::read(a.join("metrics.csv")).unwrap(), fs::read(b.join("metrics.csv")).unwrap());
    assert!(fs::read_to_string(b.join("manifest.toml")).unwrap().contains("master_seed = 6"));
}

#[test]
fn unwritable_output_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "s.toml", SMALL);
    let blocker = write(dir.path(), "file", "not a directory");
    let o = fello_sim(&["run", &cfg, "--out", &blocker]);
    assert_eq!(o.status.code(), Some(2));
}
