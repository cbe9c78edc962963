use revint_core::frontend::parse_annotated;
use revint_core::scheduler::{script_from_stacks, Policy};
use revint_core::trace::dump_delta;
use revint_core::{BigBundle, BigMachine, BigSession, BigTrace};
use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::time::{Duration, Instant};

const BIN: &str = env!("CARGO_BIN_EXE_revint");

fn core_fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures").join(name)
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn revint(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env_remove("REVINT_MAX_STEPS").output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = revint(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn fails(args: &[&str]) -> String {
    let out = revint(args);
    assert!(!out.status.success(), "{args:?} should fail");
    assert!(out.stdout.is_empty());
    String::from_utf8(out.stderr).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn sort_result() {
    let sort = core_fixture("sort.rpl");
    assert_eq!(ok(&["run", s(&sort), "--seed", "1", "--dump-state"]), "count = 4\n");
    assert_eq!(ok(&["run", s(&sort), "--seed", "1", "--traditional"]), "count = 4\n");
    // l is local to the block; its sorted contents are what the removal saved
    let delta = ok(&["run", s(&sort), "--seed", "1", "--dump-delta"]);
    let l = delta.lines().find(|l| l.starts_with("l: ")).unwrap();
    assert!(l.starts_with("l: ⟨78,7⟩ ⟨78,6⟩ ⟨78,4⟩ ⟨78,3⟩ ⟨78,1⟩ "), "{l}");
    let summary = ok(&["run", s(&sort), "--seed", "1"]);
    assert!(summary.starts_with("count = 4\nδ: "), "{summary}");
}

#[test]
fn empty_program_is_silent() {
    let out = revint(&["run", s(&core_fixture("empty.rpl"))]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty() && out.stderr.is_empty());
}

#[test]
fn recorded_interleaving_gives_expected_delta() {
    let sort = core_fixture("sort.rpl");
    let got = ok(&["run", s(&sort), "--script", s(&fixture("sort_interleaving.trace.json")), "--dump-delta"]);
    let lines: BTreeMap<&str, &str> = got.lines().filter_map(|l| l.split_once(": ")).collect();
    assert_eq!(lines["count"], "⟨6,0⟩");
    assert_eq!(lines["temp"], "⟨54,7⟩ ⟨51,0⟩ ⟨44,7⟩ ⟨42,3⟩ ⟨39,0⟩ ⟨36,0⟩ ⟨29,7⟩ ⟨26,0⟩ ⟨19,4⟩ ⟨18,7⟩ ⟨13,0⟩ ⟨12,0⟩");
    assert_eq!(
        lines["l"],
        "⟨78,7⟩ ⟨78,6⟩ ⟨78,4⟩ ⟨78,3⟩ ⟨78,1⟩ ⟨53,6⟩ ⟨52,7⟩ ⟨43,4⟩ ⟨41,7⟩ ⟨40,1⟩ ⟨38,3⟩ \
         ⟨28,1⟩ ⟨27,7⟩ ⟨17,3⟩ ⟨16,1⟩ ⟨15,4⟩ ⟨14,7⟩ ⟨5,0⟩ ⟨4,0⟩ ⟨3,0⟩ ⟨2,0⟩ ⟨1,0⟩"
    );
    assert_eq!(lines["W"], "⟨77,T⟩ ⟨67,T⟩ ⟨57,T⟩ ⟨32,T⟩ ⟨7,F⟩");

    // same δ as replaying the printed stacks directly through the library
    let (p, stacks) = parse_annotated(include_str!("../../core/tests/fixtures/sort_executed.rpl")).unwrap();
    let mut script = script_from_stacks(stacks.iter().map(|(s, st)| (*s, st))).unwrap();
    let mut m = BigMachine::new(&p, &BTreeMap::new());
    m.run(&mut script, 1_000_000, &mut Vec::new()).unwrap();
    assert_eq!(got, dump_delta(&m.delta));
}

#[test]
fn interleaving_fixture_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let t = dir.path().join("sort_interleaving.trace.json");
    ok(&["run", "--annotated", s(&core_fixture("sort_executed.rpl")), "--trace", s(&t)]);
    assert_eq!(std::fs::read(&t).unwrap(), std::fs::read(fixture("sort_interleaving.trace.json")).unwrap());
}

fn pipeline(dir: &Path, program: &Path, seed: &str) -> Vec<Vec<u8>> {
    let (t, b, r) = (dir.join("t.json"), dir.join("b.json"), dir.join("r.json"));
    let run = ok(&["run", s(program), "--seed", seed, "--trace", s(&t)]);
    let inv = ok(&["invert", s(&t), "-o", s(&b)]);
    let rev = ok(&["reverse", s(&b), "--trace", s(&r)]);
    let mut out = vec![run.into_bytes(), inv.into_bytes(), rev.into_bytes()];
    out.extend([t, b, r].iter().map(|f| std::fs::read(f).unwrap()));
    out
}

#[test]
fn pipeline_is_byte_stable() {
    let sort = core_fixture("sort.rpl");
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let first = pipeline(a.path(), &sort, "7");
    assert_eq!(first, pipeline(b.path(), &sort, "7"));
    assert_eq!(first[2], b"count = 0\n");
    let inverted = String::from_utf8(first[1].clone()).unwrap();
    assert!(inverted.starts_with("begin b1.0\n  arr[5] l ⟨78⟩;\n  while w1.0 (count < 4) do\n    count -= 1"), "{inverted}");
    assert!(inverted.trim_end().ends_with("remove arr[5] l ⟨0⟩\nend"), "{inverted}");
}

#[test]
fn invert_twice_is_identity() {
    let dir = tempfile::tempdir().unwrap();
    let d = |n: &str| dir.path().join(n);
    ok(&["run", s(&core_fixture("sort.rpl")), "--seed", "4", "--trace", s(&d("t"))]);
    ok(&["invert", s(&d("t")), "-o", s(&d("b1"))]);
    let forward = ok(&["invert", s(&d("b1")), "-o", s(&d("b2"))]);
    ok(&["invert", s(&d("b2")), "-o", s(&d("b3"))]);
    assert_eq!(std::fs::read(d("b1")).unwrap(), std::fs::read(d("b3")).unwrap());
    // back where the forward run ended
    assert_eq!(forward, "skip\n");
    let t = BigTrace::from_json(&std::fs::read_to_string(d("t")).unwrap()).unwrap();
    let direct = BigSession::from_trace(&t, Policy::LeftFirst).unwrap().bundle();
    let b2 = BigBundle::from_json(&std::fs::read_to_string(d("b2")).unwrap()).unwrap();
    assert_eq!(b2.machine, direct.machine);
    assert!(fails(&["reverse", s(&d("b2"))]).contains("invert it first"));
}

#[test]
fn empty_trace_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let (t, b) = (dir.path().join("t"), dir.path().join("b"));
    assert_eq!(ok(&["run", s(&core_fixture("empty.rpl")), "--trace", s(&t)]), "");
    assert_eq!(ok(&["invert", s(&t), "-o", s(&b)]), "");
    assert_eq!(ok(&["reverse", s(&b)]), "");
}

fn corrupt(dir: &Path, edit: impl Fn(&mut serde_json::Value)) -> PathBuf {
    let (t, b, c) = (dir.join("t"), dir.join("b"), dir.join("c"));
    ok(&["run", s(&core_fixture("sort.rpl")), "--seed", "3", "--trace", s(&t)]);
    ok(&["invert", s(&t), "-o", s(&b)]);
    let mut v: serde_json::Value = serde_json::from_slice(&std::fs::read(&b).unwrap()).unwrap();
    edit(&mut v);
    std::fs::write(&c, v.to_string()).unwrap();
    c
}

#[test]
fn truncated_delta_names_the_identifier() {
    let dir = tempfile::tempdir().unwrap();
    let c = corrupt(dir.path(), |v| {
        let b = v["machine"]["delta"]["B"].as_array_mut().unwrap();
        assert_eq!(b.pop().unwrap()[0], "19");
    });
    let err = fails(&["reverse", s(&c)]);
    assert!(err.contains("identifier 19"), "{err}");

    let c = corrupt(dir.path(), |v| {
        v["machine"]["delta"]["values"]["temp"].as_array_mut().unwrap().pop();
    });
    let err = fails(&["reverse", s(&c)]);
    assert!(err.contains("identifier"), "{err}");
}

#[test]
fn wrong_restored_value_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let c = corrupt(dir.path(), |v| {
        v["initial"]["count"] = "2".into();
    });
    let err = fails(&["reverse", s(&c)]);
    assert!(err.contains("`count` restored to 0, started at 2"), "{err}");
}

#[test]
fn initial_values_travel_with_the_trace() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("p.rpl");
    std::fs::write(&p, "X = 5; par {Y += X} {Z -= X}").unwrap();
    let (t, b) = (dir.path().join("t"), dir.path().join("b"));
    assert_eq!(ok(&["run", s(&p), "--set", "X=2", "--set", "Y=1", "--trace", s(&t), "--dump-state"]), "X = 5\nY = 6\nZ = -5\n");
    ok(&["invert", s(&t), "-o", s(&b)]);
    assert_eq!(ok(&["reverse", s(&b)]), "X = 2\nY = 1\nZ = 0\n");
    assert_eq!(ok(&["run", s(&p), "--script", s(&t), "--dump-state"]), "X = 5\nY = 6\nZ = -5\n");
    assert!(fails(&["run", s(&p), "--set", "X"]).contains("NAME=VALUE"));
    assert!(fails(&["run", s(&p), "--set", "X=two"]).contains("two"));

    let other = dir.path().join("q.rpl");
    std::fs::write(&other, "X = 6").unwrap();
    assert!(fails(&["run", s(&other), "--script", s(&t)]).contains("different program"));
}

#[test]
fn check_command() {
    let sort = core_fixture("sort.rpl");
    let out = ok(&["check", s(&sort), "--runs", "20"]);
    assert!(out.ends_with("20 runs, 0 failed\n"), "{out}");
    let out = ok(&["check", "--runs", "100", "--seed", "5"]);
    assert!(out.ends_with("100 runs, 0 failed\n"), "{out}");
    assert_eq!(ok(&["check", "--runs", "0"]), "");
    let json: serde_json::Value = serde_json::from_str(&ok(&["check", "--runs", "3", "--json", "--uniform"])).unwrap();
    assert_eq!(json.as_array().unwrap().len(), 3);
    assert_eq!(json[0]["pass"]["state"], true);

    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("loop.rpl");
    std::fs::write(&p, "while T do X += 1 end").unwrap();
    let out = revint(&["check", s(&p), "--runs", "2", "--max-steps", "50"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("step budget of 50"));
    assert!(String::from_utf8_lossy(&out.stderr).contains("2 of 2 roundtrips failed"));
}

#[test]
fn errors_go_to_stderr() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.rpl");
    std::fs::write(&bad, "X = = 1").unwrap();
    let err = fails(&["run", s(&bad)]);
    assert!(err.contains("bad.rpl:1:5"), "{err}");
    assert!(fails(&["run", s(&dir.path().join("missing.rpl"))]).contains("cannot read"));
    assert!(fails(&["run", s(&core_fixture("sort.rpl")), "--max-steps", "10"]).contains("budget of 10"));

    let out = Command::new(BIN).args(["run", s(&core_fixture("sort.rpl"))]).env("REVINT_MAX_STEPS", "10").output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("budget of 10"));
}

fn request(port: u16, raw: &str) -> String {
    let mut c = TcpStream::connect(("127.0.0.1", port)).unwrap();
    c.write_all(raw.as_bytes()).unwrap();
    let mut out = String::new();
    c.read_to_string(&mut out).unwrap();
    out
}

#[test]
fn serve_answers_and_refuses_busy_port() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let missing = tempfile::tempdir().unwrap().path().join("no-ui");
    let mut child = Command::new(BIN)
        .args(["serve", "--port", &port.to_string(), "--root", s(&missing)])
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let t0 = Instant::now();
    while TcpStream::connect(("127.0.0.1", port)).is_err() {
        assert!(t0.elapsed() < Duration::from_secs(20), "server did not start");
        std::thread::sleep(Duration::from_millis(50));
    }
    let body = r#"{"source": "X = 1"}"#;
    let created = request(
        port,
        &format!("POST /sessions HTTP/1.1\r\nHost: x\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}", body.len()),
    );
    assert!(created.starts_with("HTTP/1.1 201"), "{created}");
    let asset = request(port, "GET /index.html HTTP/1.1\r\nHost: x\r\nConnection: close\r\n\r\n");
    assert!(asset.starts_with("HTTP/1.1 404"), "{asset}");

    let busy = revint(&["serve", "--port", &port.to_string()]);
    child.kill().unwrap();
    child.wait().unwrap();
    assert!(!busy.status.success());
    assert!(String::from_utf8_lossy(&busy.stderr).contains("cannot serve"));
}
