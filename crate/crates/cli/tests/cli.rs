use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn pastro(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pastro"))
        .args(args)
        .env_remove("PASTRO_TRACE_DIR")
        .output()
        .unwrap()
}

fn scenario(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(format!("{name}.toml"))
        .display()
        .to_string()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn smoke_run_passes() {
    let o = pastro(&["run", &scenario("smoke"), "--seed", "0"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let out = stdout(&o);
    for check in ["consistency", "monotonicity", "validity", "agreement", "theorems", "availability"] {
        assert!(out.contains(check), "{out}");
    }
}

#[test]
fn bad_input_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let unknown = write(
        dir.path(),
        "unknown.toml",
        "name = \"x\"\nprocesses = 2\nstake = [1, 1]\nhorizon = 10\ncolour = 3\n[workload]\ntransfers = 0\nwindow = 0\n",
    );
    let mismatch = write(
        dir.path(),
        "mismatch.toml",
        "name = \"x\"\nprocesses = 3\nstake = [1, 1]\nhorizon = 10\n[workload]\ntransfers = 0\nwindow = 0\n",
    );
    let missing = dir.path().join("absent.toml").display().to_string();
    for path in [&unknown, &mismatch, &missing] {
        let o = pastro(&["run", path]);
        assert_eq!(o.status.code(), Some(2), "{path}");
    }
    assert_eq!(pastro(&["run", &scenario("smoke"), "--checks", "liveliness"]).status.code(), Some(2));
    assert_eq!(pastro(&["check", &unknown]).status.code(), Some(2));
}

#[test]
fn mutated_protocol_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(scenario("smoke")).unwrap();
    // top-level keys must precede the first table
    let text = text.replacen("[network]", "mutation = \"skip-acks2\"\n\n[network]", 1);
    let path = write(dir.path(), "mutated.toml", &text);
    let o = pastro(&["fuzz", &path, "--seeds", "0..10"]);
    assert_eq!(o.status.code(), Some(1), "{}", stdout(&o));
    assert!(stdout(&o).contains("first failing seed"));
}

#[test]
fn traces_are_byte_identical_and_recheck() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    let sc = scenario("double-spend");
    let ra = pastro(&["run", &sc, "--seed", "5", "--trace", a.to_str().unwrap()]);
    let rb = pastro(&["run", &sc, "--seed", "5", "--trace", b.to_str().unwrap()]);
    assert_eq!(ra.status.code(), Some(0));
    assert_eq!(rb.status.code(), Some(0));
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let rc = pastro(&["check", a.to_str().unwrap()]);
    assert_eq!(rc.status.code(), Some(0));
    assert_eq!(stdout(&ra), stdout(&rc));

    let ja = pastro(&["check", a.to_str().unwrap(), "--json", "--checks", "consistency"]);
    let v: serde_json::Value = serde_json::from_slice(&ja.stdout).unwrap();
    assert_eq!(v["verdicts"].as_array().unwrap().len(), 1);
}

#[test]
fn trace_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_pastro"))
        .args(["run", &scenario("smoke"), "--seed", "3", "--no-messages"])
        .env("PASTRO_TRACE_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(dir.path().join("smoke-3.jsonl")).unwrap();
    assert!(text.lines().count() > 1);
    assert!(!text.contains("\"deliver\""));
}
