use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn dcnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dcnet"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn analyze_prints_mst_and_csv() {
    let o = dcnet(&["analyze", "--variant", "optimized", "--kmax", "64"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.starts_with("k,S_k_num,S_k_den,throughput\n"));
    assert!(out.contains("MST(optimized) = 0.924"), "{out}");

    let o = dcnet(&["analyze", "--variant", "standard", "--kmax", "64"]);
    assert!(stdout(&o).contains("MST(standard) = 0.693"));

    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("t.csv");
    let o = dcnet(&["analyze", "--kmax", "10", "--out", path(&csv)]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(fs::read_to_string(&csv).unwrap().lines().count(), 11);
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(dcnet(&["analyze", "--kmax", "1"]).status.code(), Some(2));
    assert_eq!(dcnet(&["analyze", "--variant", "fancy"]).status.code(), Some(2));
    assert_eq!(dcnet(&["simulate", "--n", "1"]).status.code(), Some(2));
    assert_eq!(dcnet(&["simulate", "--lambda", "-0.5"]).status.code(), Some(2));
    assert_eq!(dcnet(&["simulate", "--adversary", "2:nonsense"]).status.code(), Some(2));
    assert_eq!(dcnet(&["simulate", "--adversary", "2:injector"]).status.code(), Some(2));
    assert_eq!(dcnet(&["verify", "--in", "/nonexistent/t.jsonl"]).status.code(), Some(2));
    assert_eq!(dcnet(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn simulate_summaries() {
    let o = dcnet(&["simulate", "--lambda", "0", "--rounds", "200"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.contains("delivered          0\n"), "{out}");
    assert!(out.contains("inferred rounds    0\n"));

    let o = dcnet(&["simulate", "--n", "8", "--lambda", "0.9", "--rounds", "100000", "--seed", "1"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("(stable)"));

    let args = ["simulate", "--n", "6", "--lambda", "0.6", "--rounds", "3000", "--adversary", "3:rule-violator-transmit"];
    let o = dcnet(&args);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("participant 3 RuleViolation"));
    assert_eq!(stdout(&dcnet(&args)), stdout(&o));
}

#[test]
fn simulate_crypto_writes_a_verifiable_transcript() {
    let dir = tempfile::tempdir().unwrap();
    let t = dir.path().join("sim.jsonl");
    let o = dcnet(&[
        "simulate", "--n", "5", "--lambda", "0.6", "--rounds", "20", "--crypto", "on", "--out", path(&t),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v = dcnet(&["verify", "--in", path(&t)]);
    assert_eq!(v.status.code(), Some(0));
    assert!(stdout(&v).contains("accepted"));
    assert_eq!(dcnet(&["simulate", "--out", path(&t)]).status.code(), Some(2));
}

#[test]
fn demo_then_verify() {
    let dir = tempfile::tempdir().unwrap();
    let t = dir.path().join("fig1.jsonl");
    let o = dcnet(&["demo", "--n", "5", "--senders", "5", "--script", "fig1", "--out", path(&t)]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.contains("transmitted {1,2,4,6,14} inferred {3,5,7,15}"), "{out}");
    for m in ["M1", "M2", "M3", "M4", "M5"] {
        assert!(out.contains(m));
    }

    let keys = dir.path().join("fig1.jsonl.keys.json");
    let v = dcnet(&["verify", "--in", path(&t), "--keys", path(&keys)]);
    assert_eq!(v.status.code(), Some(0));
    let vout = stdout(&v);
    assert!(vout.contains("transmitted {1,2,4,6,14}"));
    assert!(vout.contains("bases recomputed"));
    assert!(vout.ends_with("accepted\n"));

    // Truncated: drop the end record.
    let text = fs::read_to_string(&t).unwrap();
    let cut: Vec<&str> = text.lines().collect();
    let short = dir.path().join("short.jsonl");
    fs::write(&short, cut[..cut.len() - 1].join("\n")).unwrap();
    assert_eq!(dcnet(&["verify", "--in", path(&short)]).status.code(), Some(2));

    // Tampered ciphertext: rejected with exit 1.
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    let i = lines.iter().position(|l| l.contains("\"type\":\"round\"")).unwrap();
    let key = "\"ciphertexts\":[\"";
    let at = lines[i].find(key).unwrap() + key.len();
    let c = lines[i].as_bytes()[at];
    let repl = if c == b'0' { "1" } else { "0" };
    lines[i].replace_range(at..at + 1, repl);
    let bad = dir.path().join("bad.jsonl");
    fs::write(&bad, lines.join("\n") + "\n").unwrap();
    let v = dcnet(&["verify", "--in", path(&bad)]);
    assert_eq!(v.status.code(), Some(1));
    assert!(stdout(&v).contains("rejected"));
}

#[test]
fn adversarial_demo_and_verify_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let t = dir.path().join("adv.jsonl");
    let o = dcnet(&[
        "demo", "--n", "5", "--senders", "3", "--adversary", "4:invalid-proof", "--out", path(&t),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("participant 4 InvalidProof"));
    let v = dcnet(&["verify", "--in", path(&t)]);
    assert_eq!(v.status.code(), Some(1));
    let out = stdout(&v);
    assert!(out.contains("participant 4 InvalidProof"));
    assert!(out.contains("accepted"));
}

#[test]
fn demo_config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let t = dir.path().join("x.jsonl");
    assert_eq!(dcnet(&["demo", "--n", "3", "--senders", "4", "--out", path(&t)]).status.code(), Some(2));
    assert_eq!(
        dcnet(&["demo", "--senders", "4", "--script", "fig1", "--out", path(&t)]).status.code(),
        Some(2)
    );
}

#[test]
fn toy_demo_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    for p in [&a, &b] {
        let o = dcnet(&["demo", "--toy", "--seed", "4", "--out", path(p)]);
        assert_eq!(o.status.code(), Some(0));
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}
