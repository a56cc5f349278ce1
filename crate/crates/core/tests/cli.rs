use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Command, Output, Stdio};

fn ace(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ace"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn keygen(dir: &Path, seed: &str) -> Output {
    ace(&[
        "keygen",
        "--policy",
        "bell-lapadula:3",
        "--q",
        "257",
        "--L",
        "1",
        "--N",
        "3",
        "--out-dir",
        p(dir),
        "--seed",
        seed,
    ])
}

#[test]
fn keygen_enc_san_dec_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let keys = dir.path().join("keys");
    let o = keygen(&keys, "7");
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mut files: Vec<String> = std::fs::read_dir(&keys)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    files.sort();
    assert_eq!(
        files,
        ["party-1.key", "party-2.key", "party-3.key", "sanitizer.key"]
    );

    let ct = dir.path().join("c.bin");
    let san = dir.path().join("c2.bin");
    let o = ace(&[
        "enc",
        "--key",
        p(&keys.join("party-1.key")),
        "--from",
        "1",
        "--to",
        "3",
        "--msg",
        "c8",
        "--out",
        p(&ct),
        "--seed",
        "1",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = ace(&[
        "san",
        "--key",
        p(&keys.join("sanitizer.key")),
        "--in",
        p(&ct),
        "--out",
        p(&san),
    ]);
    assert!(o.status.success());
    let o = ace(&[
        "dec",
        "--key",
        p(&keys.join("party-3.key")),
        "--from",
        "1",
        "--to",
        "3",
        "--in",
        p(&san),
    ]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).trim(), "c8");
}

#[test]
fn unauthorized_and_malformed_inputs_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let keys = dir.path().join("keys");
    assert!(keygen(&keys, "3").status.success());
    let ct = dir.path().join("c.bin");
    let o = ace(&[
        "enc",
        "--key",
        p(&keys.join("party-3.key")),
        "--from",
        "3",
        "--to",
        "1",
        "--msg",
        "1",
        "--out",
        p(&ct),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("not authorized"));

    let o = ace(&[
        "enc",
        "--key",
        p(&keys.join("party-1.key")),
        "--from",
        "1",
        "--to",
        "2",
        "--msg",
        "0",
        "--out",
        p(&ct),
    ]);
    assert_eq!(o.status.code(), Some(2));

    std::fs::write(&ct, b"garbage").unwrap();
    let o = ace(&[
        "san",
        "--key",
        p(&keys.join("sanitizer.key")),
        "--in",
        p(&ct),
        "--out",
        p(&ct),
    ]);
    assert_eq!(o.status.code(), Some(2));

    let o = ace(&[
        "san",
        "--key",
        p(&keys.join("party-1.key")),
        "--in",
        p(&ct),
        "--out",
        p(&ct),
    ]);
    assert_eq!(o.status.code(), Some(2));

    let o = ace(&[
        "san",
        "--key",
        p(&dir.path().join("missing.key")),
        "--in",
        p(&ct),
        "--out",
        p(&ct),
    ]);
    assert_eq!(o.status.code(), Some(3));

    let o = ace(&[
        "keygen",
        "--policy",
        "bell-lapadula:3",
        "--q",
        "256",
        "--L",
        "1",
        "--N",
        "3",
        "--out-dir",
        p(&keys),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(ace(&[]).status.code(), Some(1));
    assert_eq!(ace(&["enc", "--from", "1"]).status.code(), Some(1));
    assert_eq!(
        ace(&["verify", "--suite", "bogus", "--params", "q=2,L=1,N=3"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(ace(&["--help"]).status.code(), Some(0));
}

#[test]
fn seeded_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(keygen(a.path(), "99").status.success());
    assert!(keygen(b.path(), "99").status.success());
    for f in ["sanitizer.key", "party-1.key", "party-2.key", "party-3.key"] {
        assert_eq!(
            std::fs::read(a.path().join(f)).unwrap(),
            std::fs::read(b.path().join(f)).unwrap()
        );
    }
    let run = |dir: &Path| {
        let out = dir.join("c.bin");
        let o = ace(&[
            "enc",
            "--key",
            p(&dir.join("party-2.key")),
            "--from",
            "2",
            "--to",
            "3",
            "--msg",
            "5",
            "--out",
            p(&out),
            "--seed",
            "4",
        ]);
        assert!(o.status.success());
        std::fs::read(out).unwrap()
    };
    assert_eq!(run(a.path()), run(b.path()));
    let v1 = ace(&[
        "verify",
        "--suite",
        "recovery",
        "--params",
        "q=17,L=1,N=6",
        "--trials",
        "2000",
        "--seed",
        "3",
    ]);
    let v2 = ace(&[
        "verify",
        "--suite",
        "recovery",
        "--params",
        "q=17,L=1,N=6",
        "--trials",
        "2000",
        "--seed",
        "3",
    ]);
    assert_eq!(v1.stdout, v2.stdout);
}

#[test]
fn verify_noread_emits_one_passing_record() {
    let o = ace(&["verify", "--suite", "noread", "--params", "q=3,L=1,N=3"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 1);
    let v: serde_json::Value = serde_json::from_str(lines[0]).unwrap();
    assert_eq!(v["sd_estimate"], 0.0);
    assert_eq!(v["verdict"], "pass");
}

#[test]
fn verify_other_suites() {
    let o = ace(&["verify", "--suite", "baselines", "--params", "q=7,L=2,N=5"]);
    assert_eq!(o.status.code(), Some(0));
    for line in stdout(&o).lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["verdict"], "pass", "{line}");
    }
    let o = ace(&[
        "verify",
        "--suite",
        "nowrite",
        "--params",
        "q=2,L=1,N=3",
        "--strategy",
        "key_image",
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).lines().count(), 2);
    let o = ace(&[
        "verify",
        "--suite",
        "nowrite",
        "--params",
        "q=17,L=1,N=6",
        "--strategy",
        "const_vector",
        "--mode",
        "montecarlo",
        "--trials",
        "5000",
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let o = ace(&[
        "verify",
        "--suite",
        "nowrite",
        "--params",
        "q=2,L=1,N=3",
        "--leakers",
        "1",
        "--listeners",
        "2",
    ]);
    assert_eq!(o.status.code(), Some(2));
    let o = ace(&[
        "verify",
        "--suite",
        "recovery",
        "--params",
        "q=17,L=1,N=6",
        "--strategy",
        "const_vector",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bench_reports_timing() {
    let o = ace(&[
        "bench",
        "--op",
        "san",
        "--params",
        "q=257,L=2,N=8",
        "--reps",
        "50",
    ]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(v["op"], "san");
    assert!(v["ns_per_op"].as_f64().unwrap() > 0.0);
}

#[test]
fn relay_send_listen() {
    let dir = tempfile::tempdir().unwrap();
    let keys = dir.path();
    assert!(keygen(keys, "21").status.success());
    let mut relay = Command::new(env!("CARGO_BIN_EXE_ace"))
        .args([
            "relay",
            "--key",
            p(&keys.join("sanitizer.key")),
            "--listen",
            "127.0.0.1:0",
        ])
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(relay.stdout.as_mut().unwrap())
        .read_line(&mut line)
        .unwrap();
    let addr = line
        .trim()
        .strip_prefix("listening on ")
        .unwrap()
        .to_string();

    let listener = Command::new(env!("CARGO_BIN_EXE_ace"))
        .args([
            "listen",
            "--addr",
            &addr,
            "--key",
            p(&keys.join("party-2.key")),
            "--from",
            "1",
            "--to",
            "2",
            "--count",
            "1",
        ])
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();

    let ct = keys.join("c.bin");
    let o = ace(&[
        "enc",
        "--key",
        p(&keys.join("party-1.key")),
        "--from",
        "1",
        "--to",
        "2",
        "--msg",
        "7b",
        "--out",
        p(&ct),
    ]);
    assert!(o.status.success());
    // the listener may not be registered yet; resend until it prints
    let start = std::time::Instant::now();
    let mut listener = listener;
    loop {
        assert!(ace(&["send", "--addr", &addr, "--in", p(&ct)])
            .status
            .success());
        std::thread::sleep(std::time::Duration::from_millis(50));
        assert!(
            start.elapsed() < std::time::Duration::from_secs(20),
            "listener received nothing"
        );
        if listener.try_wait().unwrap().is_some() {
            break;
        }
    }
    let out = listener.wait_with_output().unwrap();
    relay.kill().unwrap();
    let _ = relay.wait();
    assert!(out.status.success());
    assert_eq!(String::from_utf8(out.stdout).unwrap().trim(), "7b");

    let garbage = keys.join("g.bin");
    std::fs::write(&garbage, b"xx").unwrap();
    let o = ace(&["send", "--addr", &addr, "--in", p(&garbage)]);
    assert_ne!(o.status.code(), Some(0));
}
