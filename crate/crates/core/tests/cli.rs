use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const TIGHT: &str = r#"
trials = 2000
seed = 5

[submodular]
kind = "uniform_rank"
n = 2
k = 1

[[distributions]]
kind = "discrete"
support = [[1.0, 1.0]]

[[distributions]]
kind = "discrete"
support = [[0.0, 0.99], [100.0, 0.01]]

[adversary]
kind = "fixed_order"
order = [0, 1]

[estimator]
kind = "exact"
"#;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_polyprophet"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn configs(name: &str) -> String {
    format!("{}/../../configs/{name}", env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn malformed_probabilities_exit_2_with_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.toml", &TIGHT.replace("[0.0, 0.99]", "[0.0, 0.89]"));
    let o = bin(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("distributions[1].support"), "{}", stderr(&o));
}

#[test]
fn unknown_key_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.toml", &TIGHT.replace("seed = 5", "seed = 5\nsead = 6"));
    assert_eq!(bin(&["run", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn same_seed_same_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", TIGHT);
    let mut outputs = Vec::new();
    for (k, jobs) in ["1", "4"].iter().enumerate() {
        let out = dir.path().join(format!("out{k}"));
        let o = bin(&[
            "run",
            "--config",
            cfg.to_str().unwrap(),
            "--seed",
            "42",
            "--jobs",
            jobs,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        outputs.push((
            std::fs::read(out.join("report.json")).unwrap(),
            std::fs::read(out.join("report.csv")).unwrap(),
        ));
    }
    assert_eq!(outputs[0], outputs[1]);
    let json: serde_json::Value = serde_json::from_slice(&outputs[0].0).unwrap();
    assert_eq!(json["seed"], 42);
}

#[test]
fn tight_pair_ratio_near_half() {
    let o = bin(&["run", "--config", &configs("tight_pair.toml"), "--trials", "20000"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let headers = rdr.headers().unwrap().clone();
    let col = headers.iter().position(|h| h == "ratio").unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 1);
    let ratio: f64 = rows[0][col].parse().unwrap();
    assert!((ratio - 0.5025).abs() < 0.06, "{ratio}");
}

#[test]
fn verify_passes_and_mutant_fails() {
    let cfg = configs("blocks_2_1.toml");
    let o = bin(&["verify", "--config", &cfg, "--budget", "200"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stderr(&o).contains("PASS threshold-sum"));

    let o = bin(&["verify", "--config", &cfg, "--budget", "200", "--mutant", "halve-thresholds"]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("FAIL threshold-sum"), "{err}");
    assert!(err.contains("replay"), "{err}");
}

#[test]
fn zero_budget_warns() {
    let o = bin(&["verify", "--config", &configs("blocks_2_1.toml"), "--budget", "0"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("0 instances checked"), "{}", stderr(&o));
}

#[test]
fn sweep_rows_and_empty_grid() {
    let dir = tempfile::tempdir().unwrap();
    let empty = write(dir.path(), "empty.toml", TIGHT);
    assert_eq!(bin(&["sweep", "--config", empty.to_str().unwrap()]).status.code(), Some(2));

    let grid = format!(
        "{TIGHT}\n[[sweep.axes]]\npath = \"seed\"\nvalues = [1, 2, 3]\n\n\
         [[sweep.axes]]\npath = \"trials\"\nvalues = [100, 200, 300]\n"
    );
    let cfg = write(dir.path(), "grid.toml", &grid);
    let out = dir.path().join("out");
    let o = bin(&["sweep", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = std::fs::read_to_string(out.join("report.csv")).unwrap();
    let rows = text.lines().filter(|l| !l.starts_with('#')).count() - 1;
    assert_eq!(rows, 9);
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(json.as_array().unwrap().len(), 9);
}

#[test]
fn mechanism_runs_with_small_trial_count() {
    let o = bin(&[
        "mechanism",
        "--config",
        &configs("mechanism_position_auction.toml"),
        "--trials",
        "500",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stderr(&o).contains("revenue"));
}

#[test]
fn missing_config_is_invalid_input() {
    assert_eq!(bin(&["run", "--config", "/nonexistent.toml"]).status.code(), Some(2));
    assert_eq!(bin(&["frobnicate"]).status.code(), Some(2));
}
