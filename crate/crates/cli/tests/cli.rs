use std::net::TcpListener;
use std::path::Path;
use std::process::{Command, Output, Stdio};
use std::thread;
use std::time::Duration;

use serde_json::Value;

const NOW: &str = "1700000000";

fn mecauth(state: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mecauth"))
        .arg("--state-dir")
        .arg(state)
        .args(args)
        .output()
        .expect("spawn mecauth")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn all_text(o: &Output) -> String {
    format!("{}{}", stdout(o), String::from_utf8_lossy(&o.stderr))
}

fn ok(o: Output) -> Output {
    assert!(o.status.success(), "command failed: {}", all_text(&o));
    o
}

/// setup + one user + one server, deterministic.
fn provision(dir: &Path, curve: &str) -> Vec<Output> {
    vec![
        ok(mecauth(dir, &["--seed", "1", "--curve", curve, "setup"])),
        ok(mecauth(dir, &["--seed", "1", "register", "user", "u1"])),
        ok(mecauth(dir, &["--seed", "1", "register", "ms", "m1"])),
    ]
}

fn frames(v: &Value) -> (String, String, String) {
    let f = &v["frames"];
    let s = |k: &str| f[k].as_str().unwrap().to_string();
    (s("m1"), s("m2"), s("m3"))
}

#[test]
fn demo_reports_matching_keys() {
    let tmp = tempfile::tempdir().unwrap();
    provision(tmp.path(), "secp256r1");
    let out = stdout(&ok(mecauth(tmp.path(), &["demo"])));
    assert!(out.contains("keys match"), "{out}");
    let fps: Vec<&str> = out.lines().filter(|l| l.contains("fingerprint")).map(|l| l.split_whitespace().last().unwrap()).collect();
    assert_eq!(fps.len(), 2);
    assert_eq!(fps[0], fps[1]);
    assert_eq!(fps[0].len(), 8);
    assert!(fps[0].chars().all(|c| c.is_ascii_hexdigit()));
}

#[test]
fn demo_on_every_curve() {
    for curve in ["secp256k1", "toy17"] {
        let tmp = tempfile::tempdir().unwrap();
        provision(tmp.path(), curve);
        let out = ok(mecauth(tmp.path(), &["--json", "--seed", "3", "--now", NOW, "demo"]));
        let v: Value = serde_json::from_str(&stdout(&out)).unwrap();
        assert_eq!(v["keys_match"], Value::Bool(true), "{curve}");
        assert_eq!(v["curve"], curve);
    }
}

#[test]
fn duplicate_registration_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    provision(tmp.path(), "toy17");
    let dir_before = std::fs::read_to_string(tmp.path().join("directory.txt")).unwrap();
    let o = mecauth(tmp.path(), &["register", "user", "u1"]);
    assert_eq!(o.status.code(), Some(2), "{}", all_text(&o));
    assert!(all_text(&o).contains("already registered"));
    assert_eq!(std::fs::read_to_string(tmp.path().join("directory.txt")).unwrap(), dir_before);
}

#[test]
fn bad_inputs_are_config_errors() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(mecauth(tmp.path(), &["demo"]).status.code(), Some(2), "not set up");
    provision(tmp.path(), "toy17");
    assert_eq!(mecauth(tmp.path(), &["setup"]).status.code(), Some(2), "second setup");
    assert_eq!(mecauth(tmp.path(), &["register", "user", "../x"]).status.code(), Some(2));
    assert_eq!(mecauth(tmp.path(), &["register", "admin", "x"]).status.code(), Some(2));
    assert_eq!(mecauth(tmp.path(), &["--curve", "secp256r1", "demo"]).status.code(), Some(2));
    assert_eq!(mecauth(tmp.path(), &["--delta", "0", "demo"]).status.code(), Some(2));
    assert_eq!(mecauth(tmp.path(), &["--curve", "ed448", "cost-report"]).status.code(), Some(2));
}

#[cfg(unix)]
#[test]
fn secret_files_are_owner_only() {
    use std::os::unix::fs::PermissionsExt;
    let tmp = tempfile::tempdir().unwrap();
    provision(tmp.path(), "toy17");
    for f in ["rc.state", "creds/u1.cred", "creds/m1.cred"] {
        let mode = std::fs::metadata(tmp.path().join(f)).unwrap().permissions().mode() & 0o777;
        assert_eq!(mode, 0o600, "{f}");
    }
}

#[test]
fn config_file_is_read_and_flags_win() {
    let tmp = tempfile::tempdir().unwrap();
    let state = tmp.path().join("state");
    let cfg = tmp.path().join("mecauth.conf");
    std::fs::write(&cfg, format!("curve = toy17\nseed = 5\nstate_dir = {}\n", state.display())).unwrap();
    let run = |args: &[&str]| {
        Command::new(env!("CARGO_BIN_EXE_mecauth")).arg("--config").arg(&cfg).args(args).output().unwrap()
    };
    ok(run(&["setup"]));
    assert!(std::fs::read_to_string(state.join("params.txt")).unwrap().contains("curve=toy17"));
    ok(run(&["register", "user", "u1"]));
    ok(run(&["register", "ms", "m1"]));
    // flag overrides the file's curve and must be rejected against the stored toy17 state
    assert_eq!(run(&["--curve", "secp256k1", "demo"]).status.code(), Some(2));
    assert!(stdout(&ok(run(&["demo"]))).contains("keys match"));
}

#[test]
fn cost_report_contains_headline_numbers() {
    let tmp = tempfile::tempdir().unwrap();
    let text = stdout(&ok(mecauth(tmp.path(), &["cost-report"])));
    for needle in ["80.032", "5.946", "2624", "reproduced", "unreproducible"] {
        assert!(text.contains(needle), "missing {needle}:\n{text}");
    }
    let v: Value = serde_json::from_str(&stdout(&ok(mecauth(tmp.path(), &["--json", "cost-report"])))).unwrap();
    let json = v.to_string();
    for needle in ["80.032", "5.946", "2624"] {
        assert!(json.contains(needle), "json missing {needle}");
    }
}

fn free_port() -> u16 {
    TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

#[test]
fn serve_connect_matches_demo_bytes_and_rejects_replay() {
    let tmp = tempfile::tempdir().unwrap();
    provision(tmp.path(), "secp256r1");
    let demo: Value =
        serde_json::from_str(&stdout(&ok(mecauth(tmp.path(), &["--json", "--seed", "9", "--now", NOW, "demo"])))).unwrap();

    let addr = format!("127.0.0.1:{}", free_port());
    let server = Command::new(env!("CARGO_BIN_EXE_mecauth"))
        .arg("--state-dir")
        .arg(tmp.path())
        .args(["--json", "--now", NOW, "serve", "--listen", &addr, "--max-sessions", "2"])
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();

    let connect = || {
        for _ in 0..100 {
            let o = mecauth(tmp.path(), &["--json", "--seed", "9", "--now", NOW, "connect", "--connect", &addr]);
            if !all_text(&o).contains("cannot connect") {
                return o;
            }
            thread::sleep(Duration::from_millis(50));
        }
        panic!("server never came up");
    };
    let first = ok(connect());
    let client: Value = serde_json::from_str(&stdout(&first)).unwrap();
    assert_eq!(frames(&client), frames(&demo));
    assert_eq!(client["fingerprint"], demo["user_fingerprint"]);

    // same seed and clock reproduce M1 exactly: a replay
    let second = connect();
    assert_eq!(second.status.code(), Some(4), "{}", all_text(&second));

    let out = server.wait_with_output().unwrap();
    assert!(out.status.success());
    let lines: Vec<Value> = stdout(&out).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 2);
    let good = lines.iter().find(|l| l["ok"] == Value::Bool(true)).expect("one accepted session");
    assert_eq!(frames(good), frames(&demo));
    assert_eq!(good["fingerprint"], demo["server_fingerprint"]);
    let bad = lines.iter().find(|l| l["ok"] == Value::Bool(false)).expect("one rejected session");
    assert!(bad["error"].as_str().unwrap().starts_with("replayed-message"));
}

#[test]
fn stale_clock_is_a_protocol_error() {
    let tmp = tempfile::tempdir().unwrap();
    provision(tmp.path(), "toy17");
    let addr = format!("127.0.0.1:{}", free_port());
    let server = Command::new(env!("CARGO_BIN_EXE_mecauth"))
        .arg("--state-dir")
        .arg(tmp.path())
        .args(["--now", "1700000100", "serve", "--listen", &addr, "--max-sessions", "1"])
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut o = None;
    for _ in 0..100 {
        let r = mecauth(tmp.path(), &["--now", NOW, "connect", "--connect", &addr]);
        if !all_text(&r).contains("cannot connect") {
            o = Some(r);
            break;
        }
        thread::sleep(Duration::from_millis(50));
    }
    assert_eq!(o.unwrap().status.code(), Some(4));
    let out = server.wait_with_output().unwrap();
    assert!(stdout(&out).contains("stale-timestamp"), "{}", stdout(&out));
}

#[test]
fn script_reports_outcome_and_flags_nothing_for_tamper() {
    let tmp = tempfile::tempdir().unwrap();
    provision(tmp.path(), "secp256r1");
    let script = tmp.path().join("tamper.json");
    std::fs::write(&script, r#"[{"action":"deliver"},{"action":"tamper","byte":10,"mask":255}]"#).unwrap();
    let o = ok(mecauth(tmp.path(), &["--json", "attack-suite", "--script", script.to_str().unwrap()]));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["done_against_dishonest_peer"], Value::Bool(false));
    assert_eq!(v["user_state"], "Failed");
    assert_eq!(v["keys_equal"], Value::Bool(false));

    std::fs::write(&script, "[{\"action\":\"teleport\"}]").unwrap();
    assert_eq!(mecauth(tmp.path(), &["attack-suite", "--script", script.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn claim_suite_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let o = ok(mecauth(tmp.path(), &["--json", "attack-suite"]));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let checks = v["checks"].as_array().unwrap();
    assert!(checks.len() >= 10);
    assert!(checks.iter().all(|c| c["passed"] == Value::Bool(true)));
}

#[test]
fn no_private_material_in_output() {
    let tmp = tempfile::tempdir().unwrap();
    let mut outputs = provision(tmp.path(), "secp256r1");
    outputs.push(ok(mecauth(tmp.path(), &["demo"])));
    outputs.push(ok(mecauth(tmp.path(), &["--json", "demo"])));
    let mut secrets = Vec::new();
    for f in ["creds/u1.cred", "creds/m1.cred", "rc.state"] {
        for line in std::fs::read_to_string(tmp.path().join(f)).unwrap().lines() {
            if let Some(v) = line.strip_prefix("d=").or_else(|| line.strip_prefix("r=")).or_else(|| line.strip_prefix("drc=")) {
                secrets.push(v.to_string());
            }
        }
    }
    assert_eq!(secrets.len(), 5);
    for o in &outputs {
        let text = all_text(o).to_lowercase();
        for s in &secrets {
            assert!(!text.contains(s), "secret leaked");
            // also no 8-byte window of it
            assert!(!text.contains(&s[..16]), "secret prefix leaked");
        }
    }
}
