use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

use tempfile::TempDir;

fn mpo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mpo"))
        .args(args)
        .env_remove("MPO_SEED")
        .output()
        .expect("binary runs")
}

fn scenario(name: &str) -> String {
    let p: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "scenarios", name]
        .iter()
        .collect();
    p.to_str().unwrap().to_owned()
}

fn status(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn path(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_str().unwrap().to_owned()
}

#[test]
fn run_writes_identical_traces() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (path(&dir, "a.jsonl"), path(&dir, "b.jsonl"));
    let scn = scenario("ring_timely.toml");
    for out in [&a, &b] {
        let o = mpo(&["run", "--scenario", &scn, "--seed", "7", "--out", out]);
        assert_eq!(status(&o), 0, "{}", stderr(&o));
    }
    let ta = fs::read(&a).unwrap();
    assert!(ta.starts_with(b"{\"t\":\"meta\""));
    assert_eq!(ta, fs::read(&b).unwrap());
}

#[test]
fn seed_from_environment_and_flag() {
    let dir = TempDir::new().unwrap();
    let scn = scenario("dependable.toml");
    let run = |seed_env: Option<&str>, flag: Option<&str>, out: &str| {
        let mut c = Command::new(env!("CARGO_BIN_EXE_mpo"));
        c.args(["run", "--scenario", &scn, "--horizon", "3000", "--out", out]);
        c.env_remove("MPO_SEED");
        if let Some(s) = seed_env {
            c.env("MPO_SEED", s);
        }
        if let Some(f) = flag {
            c.args(["--seed", f]);
        }
        assert!(c.status().unwrap().success());
        fs::read_to_string(out).unwrap()
    };
    let env_only = run(Some("41"), None, &path(&dir, "e.jsonl"));
    let flag_only = run(None, Some("41"), &path(&dir, "f.jsonl"));
    let both = run(Some("5"), Some("41"), &path(&dir, "b.jsonl"));
    let file_seed = run(None, None, &path(&dir, "n.jsonl"));
    assert!(env_only.contains("\"seed\":41"));
    assert_eq!(env_only, flag_only);
    assert_eq!(env_only, both);
    assert!(file_seed.contains("\"seed\":3"));
}

#[test]
fn run_input_errors() {
    let dir = TempDir::new().unwrap();
    let o = mpo(&["run", "--scenario", &path(&dir, "missing.toml")]);
    assert_eq!(status(&o), 2);

    let bad = path(&dir, "bad.toml");
    fs::write(&bad, "n = 3\nseed = 1\nhorizon = [\n").unwrap();
    let o = mpo(&["run", "--scenario", &bad]);
    assert_eq!(status(&o), 2);
    assert!(stderr(&o).contains("line 4"), "{}", stderr(&o));

    let invalid = path(&dir, "one.toml");
    fs::write(&invalid, "n = 1\nseed = 1\nhorizon = 10\n").unwrap();
    assert_eq!(status(&mpo(&["run", "--scenario", &invalid])), 2);

    assert_eq!(status(&mpo(&["run"])), 2);
}

#[test]
fn audit_statuses() {
    let dir = TempDir::new().unwrap();
    let good = path(&dir, "good.jsonl");
    let o = mpo(&["run", "--scenario", &scenario("dependable.toml"), "--out", &good]);
    assert_eq!(status(&o), 0);

    let report = path(&dir, "good.json");
    let o = mpo(&["audit", "--trace", &good, "--report", &report]);
    assert_eq!(status(&o), 0, "{}", stderr(&o));
    let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(r["converged"], true);
    assert_eq!(r["leader"], 2);
    assert_eq!(r["pass"], true);

    // startup broadcasts count against efficiency
    let o = mpo(&["audit", "--trace", &good, "--cutoff", "0"]);
    assert_eq!(status(&o), 1);
    let r: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(r["message_efficient"], false);

    let lossy = path(&dir, "lossy.jsonl");
    assert_eq!(status(&mpo(&["run", "--scenario", &scenario("all_lossy.toml"), "--out", &lossy])), 0);
    let o = mpo(&["audit", "--trace", &lossy, "--report", &path(&dir, "lossy.json")]);
    assert_eq!(status(&o), 1);
    assert!(stderr(&o).contains("NotConverged"));
}

#[test]
fn audit_rejects_truncated_or_missing_traces() {
    let dir = TempDir::new().unwrap();
    let full = path(&dir, "t.jsonl");
    assert_eq!(status(&mpo(&["run", "--scenario", &scenario("all_lossy.toml"), "--out", &full])), 0);
    let text = fs::read_to_string(&full).unwrap();
    let cut = path(&dir, "cut.jsonl");
    let lines: Vec<&str> = text.lines().collect();
    fs::write(&cut, lines[..lines.len() - 1].join("\n")).unwrap();
    assert_eq!(status(&mpo(&["audit", "--trace", &cut])), 2);
    assert_eq!(status(&mpo(&["audit", "--trace", &path(&dir, "none.jsonl")])), 2);
}

#[test]
fn mc_existence_csv() {
    let o = mpo(&["mc", "--mode", "existence", "--n", "5,10,20", "--p", "0.8", "--trials", "100000"]);
    assert_eq!(status(&o), 0, "{}", stderr(&o));
    let out = stdout(&o);
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("mode,n,p,trials,estimate,stderr,closed_form"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 6);
    assert_eq!(rows.iter().filter(|r| r[0] == "single_hop").count(), 3);
    assert_eq!(rows.iter().filter(|r| r[0] == "multi_hop").count(), 3);
    for r in rows.iter().filter(|r| r[0] == "single_hop") {
        let est: f64 = r[4].parse().unwrap();
        let se: f64 = r[5].parse().unwrap();
        let cf: f64 = r[6].parse().unwrap();
        assert!((est - cf).abs() <= 4.0 * se, "{r:?}");
    }
}

#[test]
fn mc_json_and_bad_grids() {
    let o = mpo(&["mc", "--mode", "stability", "--n", "4", "--p", "0.9", "--trials", "2000", "--format", "json"]);
    assert_eq!(status(&o), 0);
    let rows: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(rows.as_array().unwrap().len(), 2);

    for bad in [
        &["--trials", "0"][..],
        &["--n", "1"][..],
        &["--n", "65"][..],
        &["--p", "1.5"][..],
        &["--n", "4,x"][..],
    ] {
        let mut args = vec!["mc", "--mode", "single-hop", "--n", "4", "--p", "0.5", "--trials", "10"];
        args.extend_from_slice(bad);
        assert_eq!(status(&mpo(&args)), 2, "{bad:?}");
    }
}

#[test]
fn mc_is_deterministic() {
    let args = ["mc", "--mode", "multi-hop", "--n", "6,7", "--p", "0.3,0.4", "--trials", "5000", "--seed", "9"];
    assert_eq!(stdout(&mpo(&args)), stdout(&mpo(&args)));
}

#[test]
fn demo_two_processes() {
    let o = mpo(&["demo", "--n", "2"]);
    assert_eq!(status(&o), 0, "{}", stdout(&o));
    let out = stdout(&o);
    assert!(out.contains("converged     leader 0"), "{out}");
    assert!(out.contains("max packets per Alive 2 (bound 2)"), "{out}");
}

#[test]
fn demo_converges_with_rebroadcast() {
    let o = mpo(&["demo", "--n", "6", "--seed", "1", "--variant", "rebroadcast"]);
    assert_eq!(status(&o), 0, "{}", stdout(&o));
    assert!(stdout(&o).contains("converged     leader 1"));
}

#[test]
fn demo_reports_reelection_after_leader_crash() {
    let o = mpo(&["demo", "--n", "6", "--seed", "1", "--variant", "rebroadcast", "--crash", "l@5000"]);
    let out = stdout(&o);
    assert!(out.contains("re-election   1 crashed at step 5000"), "{out}");
    assert!(out.contains("converged     leader 3"), "{out}");
    assert_eq!(status(&o), 0);
    assert_eq!(status(&mpo(&["demo", "--crash", "x@1"])), 2);
    assert_eq!(status(&mpo(&["demo", "--crash", "9@1"])), 2);
}

#[test]
fn sweep_rows_carry_config_hash() {
    let o = mpo(&["sweep", "--n", "3", "--seeds", "2", "--horizon", "4000", "--variant", "rebroadcast"]);
    let out = stdout(&o);
    let mut lines = out.lines();
    assert!(lines.next().unwrap().starts_with("config_hash,n,seed,"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 2);
    for r in &rows {
        let hash = r.split(',').next().unwrap();
        assert_eq!(hash.len(), 16);
        assert!(hash.chars().all(|c| c.is_ascii_hexdigit()));
    }
    assert!(matches!(status(&o), 0 | 1));
    assert_eq!(status(&mpo(&["sweep", "--n", "3", "--seeds", "0"])), 2);
}
