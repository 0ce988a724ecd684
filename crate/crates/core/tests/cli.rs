use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_kamtori");

const SIMULATE: &str = "seed = 1\n[potential]\na = [1, 1, 1]\nphi = [0, 0, 0]\n[simulate]\neps = 0.1\ny0 = [1.0, 0.5]\nx0 = [0, 0]\n";

const SURVEY: &str = "seed = 9\n[survey]\neps = [0.01, 0.04]\nsamples = 40\nsteps = 4000\nstride = 10\n";

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN).current_dir(dir).env("NO_COLOR", "1").args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn simulate_writes_orbit_csv() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.txt"), SIMULATE).unwrap();
    let o = run(dir.path(), &["simulate", "--config", "c.txt", "--steps", "1000", "--out", "orbit.csv"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("orbit.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("y1,y2,x1,x2,w1,w2"));
    assert_eq!(lines.count(), 1001);
    let names: Vec<_> = fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(names.len(), 2, "temporary files left behind: {names:?}");
}

#[test]
fn simulate_output_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.txt"), SIMULATE).unwrap();
    let a = run(dir.path(), &["simulate", "--config", "c.txt", "--steps", "500"]);
    let b = run(dir.path(), &["simulate", "--config", "c.txt", "--steps", "500"]);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn validation_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.txt"), SIMULATE).unwrap();
    let o = run(dir.path(), &["simulate", "--config", "c.txt", "--eps", "-0.1"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("eps must be ≥ 0"));
    assert!(!stderr(&o).contains('\x1b'));

    fs::write(dir.path().join("bad.txt"), "[simulate]\neps = -0.1\ny0 = [0]\nwhat = 1\n").unwrap();
    let o = run(dir.path(), &["simulate", "--config", "bad.txt"]);
    assert_eq!(code(&o), 1);
    let err = stderr(&o);
    for needle in ["line 2: eps must be ≥ 0", "line 3: y0 has 1 entries", "line 4: unknown key 'what'", "'x0'"] {
        assert!(err.contains(needle), "missing {needle:?} in {err}");
    }

    let o = run(dir.path(), &["simulate", "--config", "c.txt", "--out", "missing/dir/o.csv"]);
    assert_eq!(code(&o), 1);
    assert_eq!(code(&run(dir.path(), &["frobnicate"])), 1);
    assert_eq!(code(&run(dir.path(), &["simulate", "--bogus"])), 1);
    assert_eq!(code(&run(dir.path(), &["kamcheck", "--config", "c.txt"])), 1);
    assert_eq!(code(&run(dir.path(), &["--help"])), 0);
}

#[test]
fn runtime_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.txt"), SIMULATE).unwrap();
    let o = run(dir.path(), &["simulate", "--config", "c.txt", "--eps", "1e308", "--steps", "1000"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn kamcheck_search_writes_ledger() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["kamcheck", "--n", "2", "--search", "--out", "ledger.json"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("ledger.json")).unwrap()).unwrap();
    assert_eq!(v["pass"], true);
    assert_eq!(v["rows"].as_array().unwrap().len(), 41);
    assert!(v["constants"]["c_s"].as_f64().unwrap() >= 56.0);
}

#[test]
fn survey_resume_after_interruption_matches() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    fs::write(p.join("s.txt"), SURVEY).unwrap();
    let o = run(p, &["survey", "--config", "s.txt", "--out", "ref.json"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let o = run(p, &["survey", "--config", "s.txt", "--resume", "j.bin", "--out", "first.json"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    // Simulate an abort: drop the last records and half of another.
    let len = fs::metadata(p.join("j.bin")).unwrap().len();
    fs::OpenOptions::new().write(true).open(p.join("j.bin")).unwrap().set_len(len - 17 * 25 - 9).unwrap();
    let o = run(p, &["survey", "--config", "s.txt", "--resume", "j.bin", "--out", "resumed.json"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let reference = fs::read(p.join("ref.json")).unwrap();
    assert_eq!(fs::read(p.join("resumed.json")).unwrap(), reference);
    assert_eq!(fs::read(p.join("first.json")).unwrap(), reference);
    assert_eq!(fs::read(p.join("resumed.csv")).unwrap(), fs::read(p.join("ref.csv")).unwrap());
    let csv = fs::read_to_string(p.join("ref.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("eps,label,count,fraction,stderr,samples"));
    assert_eq!(csv.lines().count(), 1 + 2 * 6);
}

#[test]
fn survey_journal_from_other_config_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    fs::write(p.join("s.txt"), SURVEY).unwrap();
    assert_eq!(code(&run(p, &["survey", "--config", "s.txt", "--resume", "j.bin"])), 0);
    let o = run(p, &["survey", "--config", "s.txt", "--resume", "j.bin", "--seed", "10"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn survey_bytes_do_not_depend_on_workers() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    fs::write(p.join("s.txt"), SURVEY).unwrap();
    assert_eq!(code(&run(p, &["survey", "--config", "s.txt", "--workers", "1", "--out", "w1.json"])), 0);
    assert_eq!(code(&run(p, &["survey", "--config", "s.txt", "--workers", "3", "--out", "w3.json"])), 0);
    assert_eq!(fs::read(p.join("w1.json")).unwrap(), fs::read(p.join("w3.json")).unwrap());
    assert_eq!(fs::read(p.join("w1.csv")).unwrap(), fs::read(p.join("w3.csv")).unwrap());
}

#[test]
fn render_and_pendulum_commands() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    fs::write(p.join("r.txt"), "[render]\neps = 0.1\norbit = [[1.0, 0.5], [0, 0]]\nsteps = 400\noverlay = true\n").unwrap();
    let o = run(p, &["render", "--config", "r.txt", "--out", "a.svg"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let svg = fs::read_to_string(p.join("a.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("class=\"overlay\""));

    fs::write(
        p.join("p.txt"),
        "[render]\nkind = portrait\neps = 0.01\nk = [1, -1]\norbit = [[0.1, 0.1], [0, 0.5]]\nsteps = 2000\n",
    )
    .unwrap();
    let o = run(p, &["render", "--config", "p.txt", "--out", "p.svg"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(fs::read_to_string(p.join("p.svg")).unwrap().contains("class=\"shade\""));

    fs::write(p.join("pe.txt"), "[pendulum]\nk = [1, -1]\neps = 0.01\nenergies = 16\n").unwrap();
    let o = run(p, &["pendulum", "--config", "pe.txt"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["table"]["energies"].as_array().unwrap().len(), 16);
}

#[test]
fn classify_reports_a_label() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    fs::write(p.join("c.txt"), "[classify]\neps = 0.0\ny0 = [1.0, 1.4142135623730951]\nx0 = [0, 0]\nsteps = 20000\n").unwrap();
    let o = run(p, &["classify", "--config", "c.txt"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["label"], "KamTorus");
}
