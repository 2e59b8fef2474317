use std::path::Path;
use std::process::{Command, Output};

fn ipmlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ipmlab")).args(args).output().expect("binary runs")
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_string()
}

#[test]
fn priors_writes_pair_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = path(dir.path(), "p.json");
    let o = ipmlab(&["priors", "--K", "8", "--tau", "1.0", "--grid", "2001", "--out", &out]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    for key in ["tau", "K", "gap", "kappa", "q0", "q1"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    assert_eq!(v["K"], 8);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("gap") && stdout.contains("kappa"));
}

#[test]
fn priors_flag_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = path(dir.path(), "p.json");
    let o = ipmlab(&["priors", "--tau", "1.0", "--out", &out]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
    let o = ipmlab(&["priors", "--K", "8", "--grid", "3", "--out", &out]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("4K + 4"));
    assert!(!Path::new(&out).exists());
}

#[test]
fn certificate_single_and_grid() {
    let o = ipmlab(&["certificate", "--n", "4096", "--beta", "1", "--gamma", "0.5", "--d", "1"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v.is_object());
    assert_eq!(v["n"], 4096);
    assert!(v.get("informative").is_some());

    let dir = tempfile::tempdir().unwrap();
    let csv = path(dir.path(), "c.csv");
    let json = path(dir.path(), "c.json");
    let o = ipmlab(&[
        "certificate",
        "--n-grid",
        "256:4096:2",
        "--beta",
        "1",
        "--gamma",
        "0.5",
        "--out",
        &csv,
        "--json",
        &json,
    ]);
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("n,separation,tv_bound,delta,value,normalized_ratio"));
    assert_eq!(lines.count(), 5);
    let arr: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(arr.as_array().unwrap().len(), 5);
}

#[test]
fn certificate_flag_errors() {
    let o = ipmlab(&["certificate", "--n", "4096", "--beta", "abc", "--gamma", "0.5"]);
    assert_eq!(o.status.code(), Some(2));
    let o = ipmlab(&["certificate", "--beta", "1", "--gamma", "0.5"]);
    assert_eq!(o.status.code(), Some(2));
    let o = ipmlab(&["certificate", "--n", "8", "--beta", "1", "--gamma", "0.5"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn rate_sweep_boundary_default() {
    let dir = tempfile::tempdir().unwrap();
    let csv = path(dir.path(), "r.csv");
    let svg = path(dir.path(), "r.svg");
    let o = ipmlab(&[
        "rate-sweep",
        "--target",
        "boundary",
        "--beta",
        "1",
        "--gamma",
        "0.5",
        "--d",
        "1",
        "--seed",
        "3",
        "--out",
        &csv,
        "--svg",
        &svg,
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().next(), Some("n,mean_error,stderr,reps"));
    assert_eq!(text.lines().count(), 8);
    let summary: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(summary["slope"].as_f64().unwrap() < 0.0);
    assert_eq!(summary["theoretical_exponent"], -0.5);

    let svg_text = std::fs::read_to_string(&svg).unwrap();
    let doc = roxmltree::Document::parse(&svg_text).expect("well-formed xml");
    let root = doc.root_element();
    assert_eq!(root.tag_name().name(), "svg");
    assert_eq!(root.attribute("width"), Some("800"));
    assert_eq!(root.attribute("height"), Some("600"));
    let polyline = doc.descendants().find(|n| n.has_tag_name("polyline")).expect("polyline");
    assert_eq!(polyline.attribute("points").unwrap().split_whitespace().count(), 7);
}

#[test]
fn rate_sweep_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, seed: &str| {
        let out = path(dir.path(), name);
        let o = ipmlab(&[
            "rate-sweep",
            "--target",
            "null",
            "--beta",
            "1",
            "--gamma",
            "0.5",
            "--n-grid",
            "64:512:2",
            "--reps",
            "10",
            "--seed",
            seed,
            "--out",
            &out,
        ]);
        assert_eq!(o.status.code(), Some(0));
        std::fs::read(out).unwrap()
    };
    let a = run("a.csv", "11");
    assert_eq!(a, run("b.csv", "11"));
    assert_ne!(a, run("c.csv", "12"));
}

#[test]
fn rate_sweep_config_and_validation() {
    let dir = tempfile::tempdir().unwrap();
    let out = path(dir.path(), "r.csv");
    let cfg = path(dir.path(), "cfg.json");
    std::fs::write(&cfg, r#"{"target": "null", "beta": 1, "gamma": 0.5, "n_grid": "64:512:2", "reps": 10}"#).unwrap();
    let o = ipmlab(&["rate-sweep", "--config", &cfg, "--out", &out]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read_to_string(&out).unwrap().lines().count(), 5);

    std::fs::write(&cfg, r#"{"target": "null", "beta": 1, "gamma": 0.5, "colour": 1}"#).unwrap();
    assert_eq!(ipmlab(&["rate-sweep", "--config", &cfg, "--out", &out]).status.code(), Some(2));
    assert_eq!(
        ipmlab(&["rate-sweep", "--target", "null", "--beta", "1", "--gamma", "0.5", "--reps", "2", "--out", &out])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        ipmlab(&["rate-sweep", "--target", "nope", "--beta", "1", "--gamma", "0.5", "--out", &out]).status.code(),
        Some(2)
    );
    assert_eq!(ipmlab(&["rate-sweep", "--beta", "1", "--gamma", "0.5", "--out", &out]).status.code(), Some(2));
}

#[test]
fn thread_count_does_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let run = |threads: &str, name: &str| {
        let out = path(dir.path(), name);
        let o = Command::new(env!("CARGO_BIN_EXE_ipmlab"))
            .env("IPMLAB_THREADS", threads)
            .args([
                "rate-sweep",
                "--target",
                "boundary",
                "--beta",
                "1",
                "--gamma",
                "0.5",
                "--n-grid",
                "64:512:2",
                "--reps",
                "10",
                "--out",
                &out,
            ])
            .output()
            .unwrap();
        assert_eq!(o.status.code(), Some(0));
        std::fs::read(out).unwrap()
    };
    assert_eq!(run("1", "one.csv"), run("0", "auto.csv"));
    let o = Command::new(env!("CARGO_BIN_EXE_ipmlab"))
        .env("IPMLAB_THREADS", "many")
        .args(["rate-sweep", "--target", "null", "--beta", "1", "--gamma", "0.5", "--out", "unused.csv"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}
