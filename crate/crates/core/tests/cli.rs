use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_stablecond"))
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("stablecond-cli-{name}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

fn no_temp_files(dir: &Path) {
    for e in fs::read_dir(dir).unwrap() {
        let name = e.unwrap().file_name().into_string().unwrap();
        assert!(!name.contains(".tmp"), "left behind {name}");
    }
}

#[test]
fn usage_errors() {
    assert_eq!(code(&run(&["--help"])), 0);
    assert_eq!(code(&run(&[])), 1);
    assert_eq!(code(&run(&["frobnicate"])), 1);
    let out = scratch("usage");
    let o = out.to_str().unwrap();
    assert_eq!(code(&run(&["verify", "no_such_experiment", "--out", o])), 1);
    assert_eq!(code(&run(&["--threads", "0", "verify", "poisson", "--out", o])), 1);
    let bad = write(&out, "bad.json", r#"{"experiment":"poisson","tolerance_typo":1}"#);
    assert_eq!(code(&run(&["verify", "--config", &bad, "--out", o])), 1);
    let missing = out.join("missing.json");
    assert_eq!(code(&run(&["verify", "--config", missing.to_str().unwrap(), "--out", o])), 1);
}

#[test]
fn verify_then_replay() {
    let out = scratch("replay");
    let o = out.to_str().unwrap();
    let r = run(&["verify", "poisson", "--out", o]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    assert!(out.join("poisson.json").exists());
    assert!(out.join("poisson.txt").exists());
    no_temp_files(&out);

    let report = out.join("poisson.json");
    let r = run(&["replay", report.to_str().unwrap(), "--out", o]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stdout));
    no_temp_files(&out);
}

#[test]
fn failing_criterion_exits_two() {
    // the attracted law from inside dies long before t = 1
    let out = scratch("fail");
    let cfg = write(&out, "m.json", r#"{"experiment":"martingale","params":[[1.0,2]],"times":[1.0],"n":400}"#);
    let r = run(&["verify", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code(&r), 2, "{}", String::from_utf8_lossy(&r.stdout));
    assert!(String::from_utf8_lossy(&r.stdout).contains("Fail"));
}

#[test]
fn seed_override_and_threads_do_not_change_reports() {
    let out = scratch("threads");
    let cfg = write(&out, "s.json", r#"{"experiment":"h_minus","n":400}"#);
    let mut seen = vec![];
    for threads in ["1", "2"] {
        let dir = out.join(threads);
        let d = dir.to_str().unwrap();
        let r = run(&["--threads", threads, "--seed", "99", "verify", "--config", &cfg, "--out", d]);
        assert!(matches!(code(&r), 0 | 2));
        let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("h_minus.json")).unwrap()).unwrap();
        assert_eq!(v["config"]["seed"], 99);
        v["runtime"] = serde_json::Value::Null;
        seen.push(v);
    }
    assert_eq!(seen[0], seen[1]);
}

#[test]
fn tabulate_h_minus_increases_from_the_sphere() {
    let out = scratch("tab");
    let cfg = write(
        &out,
        "t.json",
        r#"{"function":"h_out","alpha":1.5,"dim":3,"radii":{"from":1.0001,"to":1.5,"count":50}}"#,
    );
    let r = run(&["tabulate", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    let csv = fs::read_to_string(out.join("h_out.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("r,value"));
    let vals: Vec<f64> = lines.map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(vals.len(), 50);
    assert!(vals[0] > 0.0 && vals[0] < 0.1, "{}", vals[0]);
    assert!(vals.windows(2).all(|w| w[1] > w[0]));
    no_temp_files(&out);
}

#[test]
fn simulate_writes_ensemble_and_csv() {
    let out = scratch("sim");
    let cfg = write(
        &out,
        "sim.json",
        r#"{"alpha":1.0,"dim":2,"x0":[2.0,0.0],"n":8,"horizon":0.05,"law":{"kind":"repel_outside","steps":2}}"#,
    );
    let r = run(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    for f in ["ensemble.stbl", "ensemble.csv", "summary.txt"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let f = fs::File::open(out.join("ensemble.stbl")).unwrap();
    let (_, paths, weights) = stablecond::sampling::read_ensemble(f).unwrap();
    assert_eq!(paths.len(), 8);
    assert_eq!(weights.map(|w| w.len()), Some(8));
    no_temp_files(&out);
}
