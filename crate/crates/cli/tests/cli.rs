use std::path::{Path, PathBuf};
use std::process::Command;

use pdmdp::harness::two_state;
use pdmdp::mdp::MdpModel;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pdmdp"))
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

/// Value of a Markov policy by exact expectation over the two-point noise.
fn policy_value(model: &MdpModel, policy: &[usize], t: usize, x: f64) -> f64 {
    if t == model.horizon() {
        return model.terminal(x);
    }
    let states = model.states().points().unwrap();
    let i = states.iter().position(|&s| s == x).unwrap();
    let a = model.eval_actions()[policy[t * states.len() + i]];
    let next: f64 = [-1.0, 1.0]
        .iter()
        .map(|&e| 0.5 * policy_value(model, policy, t + 1, model.kernel(t + 1, x, a, e)))
        .sum();
    model.reward(t, x, a) + next
}

fn enumerate_policies(model: &MdpModel, x0: f64) -> f64 {
    let slots = model.horizon() * model.states().points().unwrap().len();
    let na = model.eval_actions().len();
    let mut best = f64::NEG_INFINITY;
    for code in 0..na.pow(slots as u32) {
        let mut c = code;
        let policy: Vec<usize> = (0..slots)
            .map(|_| {
                let d = c % na;
                c /= na;
                d
            })
            .collect();
        best = best.max(policy_value(model, &policy, 0, x0));
    }
    best
}

#[test]
fn oracle_matches_policy_enumeration() {
    let out = tempfile::tempdir().unwrap();
    let res = bin()
        .args(["oracle", "--config"])
        .arg(config("two-state.toml"))
        .arg("--out")
        .arg(out.path())
        .output()
        .unwrap();
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let doc: serde_json::Value = serde_json::from_slice(&std::fs::read(out.path().join("oracle.json")).unwrap()).unwrap();
    let v = doc["value"].as_f64().unwrap();
    let brute = enumerate_policies(&two_state(3).unwrap(), 0.0);
    assert!((v - brute).abs() < 1e-12, "{v} vs {brute}");
    assert_eq!(doc["schema_version"], 1);
    assert!(String::from_utf8_lossy(&res.stdout).contains("V*_0"));
}

#[test]
fn zero_samples_are_rejected_by_field_name() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(config("t1.toml")).unwrap().replace("samples = 1024\n\n[dual]", "samples = 0\n\n[dual]");
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, text).unwrap();
    let res = bin()
        .args(["bound", "--config"])
        .arg(&path)
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert!(!res.status.success());
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("primal.samples"), "{err}");
    assert!(!dir.path().join("out").join("report.json").exists());
}

#[test]
fn bound_report_sandwiches_and_ignores_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let mut reports = Vec::new();
    for threads in ["1", "3"] {
        let out = dir.path().join(threads);
        let res = bin()
            .args(["bound", "--threads", threads, "--config"])
            .arg(config("t1.toml"))
            .arg("--out")
            .arg(&out)
            .output()
            .unwrap();
        assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
        reports.push(std::fs::read(out.join("report.json")).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
    let doc: serde_json::Value = serde_json::from_slice(&reports[0]).unwrap();
    let v = doc["oracle"].as_f64().unwrap();
    let (lo, lo_se) = (doc["lower"]["mean"].as_f64().unwrap(), doc["lower"]["std_err"].as_f64().unwrap());
    let (up, up_se) = (doc["upper"]["mean"].as_f64().unwrap(), doc["upper"]["std_err"].as_f64().unwrap());
    assert!(lo - 4.0 * lo_se <= v && v <= up + 4.0 * up_se);
}

#[test]
fn seed_flags_override_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let run = |seed: &str, name: &str| {
        let out = dir.path().join(name);
        let res = bin()
            .args(["bound", "--seed-test", seed, "--config"])
            .arg(config("t3.toml"))
            .arg("--out")
            .arg(&out)
            .output()
            .unwrap();
        assert!(res.status.success());
        let doc: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("report.json")).unwrap()).unwrap();
        doc["seeds"]["test"].as_u64().unwrap()
    };
    assert_eq!(run("41", "a"), 41);
}

#[test]
fn unknown_subcommand_fails() {
    let res = bin().args(["frobnicate", "--config", "x.toml"]).output().unwrap();
    assert!(!res.status.success());
}
