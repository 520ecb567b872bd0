//! The `elliptic-lab` binary: exit statuses, output files, determinism.

use std::path::Path;
use std::process::{Command, Output};

const IDENTITY_1D: &str = r#"
seed = 7

[grid]
dim = 1
n = 32

[coefficients]
kind = "identity"
"#;

/// Non-self-adjoint operator with its GL Plancherel record promoted to a gate: it must fail.
const PROMOTED_FAILURE: &str = r#"
seed = 2

[grid]
dim = 2
n = 8

[coefficients]
kind = "bmo_log"
kappa = 0.5

[sqfn]
resolutions = [8]
sweeps = []

[gates]
"sqfn.plancherel_gl" = "gate"
"#;

fn run(dir: &Path, config: &str, args: &[&str]) -> Output {
    let cfg = dir.join("campaign.toml");
    std::fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_elliptic-lab"))
        .args(args)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap()
}

fn files_under(dir: &Path) -> Vec<String> {
    let mut out = Vec::new();
    if let Ok(entries) = std::fs::read_dir(dir) {
        for e in entries.flatten() {
            let p = e.path();
            if p.is_dir() {
                out.extend(files_under(&p));
            } else {
                out.push(p.display().to_string());
            }
        }
    }
    out.sort();
    out
}

#[test]
fn malformed_config_exits_2_without_outputs() {
    for bad in [
        "[grid]\ndim = 1\nn = 16\n[coefficients]\nkind = \"identity\"\n",
        "seed = 1\n[grid]\ndim = 1\nn = 16\ncolour = 3\n[coefficients]\nkind = \"identity\"\n",
        "seed = 1\n[grid]\ndim = 2\nn = 128\n[coefficients]\nkind = \"identity\"\n",
        "seed = 1\n[grid]\ndim = 1\nn = 16\n[coefficients]\nkind = \"bmo_log\"\n",
        "seed = 1\n[grid]\ndim = 1\nn = 16\n[coefficients]\nkind = \"identity\"\n[gates]\nwhatever = \"gate\"\n",
        "seed = = 1",
    ] {
        let dir = tempfile::tempdir().unwrap();
        let out = run(dir.path(), bad, &["assemble"]);
        assert_eq!(out.status.code(), Some(2), "{bad}\n{}", String::from_utf8_lossy(&out.stderr));
        assert!(files_under(&dir.path().join("out")).is_empty());
    }
}

#[test]
fn missing_config_file_exits_2() {
    let out = Command::new(env!("CARGO_BIN_EXE_elliptic-lab")).args(["heat", "--config", "/nonexistent/campaign.toml"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn passing_campaign_exits_0_and_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), IDENTITY_1D, &["assemble"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let root = dir.path().join("out");
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(root.join("assemble.json")).unwrap()).unwrap();
    assert_eq!(json["schema_version"], 1);
    assert_eq!(json["environment"]["n"], 32);
    assert_eq!(json["config"]["seed"], 7);
    for r in json["records"].as_array().unwrap() {
        assert!(!r["anchor"].as_str().unwrap().is_empty());
        assert_ne!(r["status"], "fail");
    }
    let theta0 = json["records"].as_array().unwrap().iter().find(|r| r["name"] == "assemble.theta0").unwrap();
    assert!(theta0["values"]["theta0"].as_f64().unwrap() <= 1e-8);
    let csv = std::fs::read_to_string(root.join("assemble.csv")).unwrap();
    assert!(csv.starts_with("record,anchor,mode,status,key,value"));
    assert!(files_under(&root).iter().all(|f| !f.ends_with(".partial")));
}

#[test]
fn gated_failure_exits_1_and_names_the_record() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), PROMOTED_FAILURE, &["sqfn"]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("sqfn.plancherel_gl"), "{stderr}");
    assert!(dir.path().join("out/sqfn.json").exists());
}

#[test]
fn reports_are_bit_identical_across_runs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let out = run(d.path(), IDENTITY_1D, &["heat", "--jobs", "1"]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let fa = files_under(&a.path().join("out"));
    let fb = files_under(&b.path().join("out"));
    assert_eq!(fa.len(), fb.len());
    assert!(fa.len() >= 3);
    for (x, y) in fa.iter().zip(&fb) {
        assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap(), "{x}");
    }
}

#[test]
fn seed_flag_overrides_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), IDENTITY_1D, &["assemble", "--seed", "99"]);
    assert_eq!(out.status.code(), Some(0));
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/assemble.json")).unwrap()).unwrap();
    assert_eq!(json["config"]["seed"], 99);
}
