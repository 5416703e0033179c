use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn forge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_forge")).args(args).output().unwrap()
}

fn stdout_json(o: &Output) -> Value {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("forge-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&d);
    d
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn pipeline_end_to_end() {
    let dir = scratch("pipe");
    let gen = stdout_json(&forge(&["gen", "--n-traj", "3", "--max-subgoals", "3", "--seed", "4", "--out", s(&dir)]));
    assert_eq!(gen["stats"]["# trajectory"], 3);

    let stats = stdout_json(&forge(&["stats", "--traj-dir", s(&dir)]));
    assert_eq!(stats, gen["stats"]);
    assert_eq!(stats["# max subgoals"], 4);

    let qa = stdout_json(&forge(&["qa", "--traj-dir", s(&dir), "--target-count", "40", "--seed", "2"]));
    assert_eq!(qa["sampled"], 40);
    assert_eq!(qa["dropped"], 0);
    let qa_file = std::fs::read_to_string(dir.join("qa.jsonl")).unwrap();
    assert_eq!(qa_file.lines().count(), 41);
    assert!(qa_file.lines().next().unwrap().contains("\"config_hash\""));
    assert!(dir.join("qa.audit.jsonl").exists());

    let hay = stdout_json(&forge(&[
        "haystack", "--qa-file", s(&dir.join("qa.jsonl")), "--lengths", "600,1200,2400", "--depths", "0,50,100",
    ]));
    assert_eq!(hay["cells"], 40 * 9);
    let csv = std::fs::read_to_string(dir.join("haystack/heatmap.csv")).unwrap();
    assert!(csv.starts_with("# {\"tool\":\"forge\""));
    assert_eq!(csv.lines().count(), 2 + 9);
    assert!(dir.join("haystack/cells/L600_D50.jsonl").exists());

    let eval = stdout_json(&forge(&["eval", "--traj-dir", s(&dir), "--agent", "oracle"]));
    assert_eq!(eval["planSuccessRate"], 1.0);
    for stage in ["goto", "pickup", "put"] {
        assert_eq!(eval["staged"][stage], 1.0);
    }
    let random = stdout_json(&forge(&["eval", "--traj-dir", s(&dir), "--agent", "random:1", "--mode", "mem-image"]));
    assert!(random["planSuccessRate"].as_f64().unwrap() < 1.0);
    assert!(dir.join("eval-mem-image/rewards.csv").exists());
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn config_file_overrides_defaults() {
    let dir = scratch("cfg");
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = dir.join("forge.toml");
    std::fs::write(&cfg, "seed = 12\n[models.tiny]\ntokens-per-image = 10\nmax-context = 5000\n").unwrap();
    let out = dir.join("data");
    let o = Command::new(env!("CARGO_BIN_EXE_forge"))
        .env("FORGE_CONFIG", &cfg)
        .args(["gen", "--n-traj", "1", "--max-subgoals", "1", "--model", "tiny", "--out", s(&out)])
        .output()
        .unwrap();
    let v = stdout_json(&o);
    let steps = v["stats"]["# max steps"].as_u64().unwrap();
    let tokens = v["stats"]["# max token length"].as_u64().unwrap();
    // (steps + initial observation) * (10 + 8) plus goal words
    assert!(tokens >= (steps + 1) * 18 && tokens < (steps + 1) * 18 + 100);
    let manifest: Value = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["provenance"]["seed"], 12);
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn failures_are_machine_readable() {
    let o = forge(&["stats", "--traj-dir", "/definitely/not/here"]);
    assert_eq!(o.status.code(), Some(1));
    let rec: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(rec["error"]["kind"], "load");

    let o = forge(&["gen", "--n-traj", "1", "--unknown-flag"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));

    let o = forge(&["ringcheck", "--L", "30", "--d", "4", "--P", "4"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn ringcheck_and_rope() {
    let v = stdout_json(&forge(&["ringcheck", "--L", "128", "--d", "16", "--P", "8", "--causal", "--seed", "3"]));
    assert_eq!(v["pass"], true);
    assert_eq!(v["peakResidentRows"], 16);

    let o = forge(&["rope", "--method", "linear", "--scale", "4", "--dim", "8"]);
    assert!(o.status.success());
    let csv = String::from_utf8(o.stdout).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "index,theta,wavelength,position_divisor,temperature");
    assert_eq!(rows.len(), 5);
    assert!(rows[1].starts_with("0,1e0,"));
    assert!(rows.iter().skip(1).all(|r| r.ends_with(",4,1")));
}
