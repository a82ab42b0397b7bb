use std::io::Write;
use std::process::{Command, Output, Stdio};

use addis_graph::{Engine, EngineConfig, GammaSpec, Procedure, Registration, WeightRule};

fn addis(args: &[&str], stdin: &str) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_addis"))
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .expect("binary runs");
    child.stdin.take().unwrap().write_all(stdin.as_bytes()).unwrap();
    child.wait_with_output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn stream_first_level_and_errors() {
    let out = addis(&["stream"], "H 1 tau=0.8 lambda=0.16 conflicts=-\nP 5 0.1\n");
    assert!(out.status.success());
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "LEVEL 1 0.0778147");
    assert!(lines[1].starts_with("ERR unknown-index"));
}

const SESSION: [&str; 10] = [
    "H 1 conflicts=-",
    "H 2 conflicts=1",
    "P 1 0.003",
    "H 3 conflicts=2",
    "P 3 0.1",
    "H 4 conflicts=2",
    "P 2 0.6",
    "H 5 conflicts=4",
    "P 4 0.9",
    "H 6 conflicts=4,5",
];

#[test]
fn stream_matches_library_bit_for_bit() {
    let out = addis(&["stream", "--full-precision"], &SESSION.join("\n"));
    let text = stdout(&out);
    let cli: Vec<f64> = text
        .lines()
        .filter(|l| l.starts_with("LEVEL"))
        .map(|l| l.split_whitespace().nth(2).unwrap().parse().unwrap())
        .collect();
    let mut e = Engine::new(EngineConfig::new(0.2, GammaSpec::basel(), Procedure::GraphConf { rule: WeightRule::Renormalized })).unwrap();
    let mut lib = Vec::new();
    for line in SESSION {
        let t: Vec<&str> = line.split_whitespace().collect();
        if t[0] == "H" {
            let c = t[2].trim_start_matches("conflicts=");
            let c = if c == "-" { vec![] } else { c.split(',').map(|x| x.parse().unwrap()).collect() };
            lib.push(e.register(Registration::new(0.8, 0.16, c)).unwrap());
        } else {
            e.observe(t[1].parse().unwrap(), t[2].parse().unwrap()).unwrap();
        }
    }
    assert_eq!(cli.len(), 6);
    for (a, b) in cli.iter().zip(&lib) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
}

#[test]
fn snapshot_resume_continues_session() {
    let dir = tempfile::tempdir().unwrap();
    let snap = dir.path().join("session.snap");
    let snap_s = snap.to_str().unwrap();
    let full = addis(&["stream", "--full-precision"], &SESSION.join("\n"));
    let first = addis(&["stream", "--full-precision", "--save", snap_s], &SESSION[..5].join("\n"));
    let second = addis(&["stream", "--full-precision", "--resume", snap_s], &SESSION[5..].join("\n"));
    assert!(first.status.success() && second.status.success());
    assert!(!stdout(&full).contains("ERR"));
    assert_eq!(stdout(&first) + &stdout(&second), stdout(&full));
}

#[test]
fn simulate_is_deterministic_across_runs_and_threads() {
    let dir = tempfile::tempdir().unwrap();
    let grid = dir.path().join("g.toml");
    std::fs::write(
        &grid,
        "name = \"t\"\nn = 20\n[[procedure]]\nspec = \"spending-local\"\n[[procedure]]\nspec = \"graph-conf-u\"\n\
         [[sweep]]\nb = [1, 5]\npi_a = [0.3, 0.7]\n",
    )
    .unwrap();
    let g = grid.to_str().unwrap();
    let run = |threads: &str, out: &str| {
        let path = dir.path().join(out);
        let o = addis(
            &["--threads", threads, "simulate", "--grid", g, "--seed", "1", "--trials", "50", "--check", "--out", path.to_str().unwrap()],
            "",
        );
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read(path).unwrap()
    };
    let a = run("1", "a.csv");
    let b = run("1", "b.csv");
    let c = run("3", "c.csv");
    assert_eq!(a, b);
    assert_eq!(a, c);
    let text = String::from_utf8(a).unwrap();
    assert_eq!(text.lines().count(), 2 + 2 * 2 * 2);
}

#[test]
fn simulate_reports_config_errors_with_lines() {
    let dir = tempfile::tempdir().unwrap();
    let grid = dir.path().join("bad.toml");
    std::fs::write(&grid, "name = \"t\"\n\n[[sweep]]\npi_a = [0.1]\nnope = 1\n").unwrap();
    let o = addis(&["simulate", "--grid", grid.to_str().unwrap()], "");
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 5"));
}

#[test]
fn verify_suites_pass() {
    let o = addis(&["verify", "--suite", "budget", "--n", "12"], "");
    assert!(o.status.success());
    assert!(stdout(&o).starts_with("PASS budget"));
    let o = addis(&["verify", "--suite", "closure", "--n", "8", "--seeds", "50"], "");
    assert!(o.status.success());
    assert!(stdout(&o).starts_with("PASS closure"));
}

#[test]
fn replay_needs_p_values() {
    let study = concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/recovery.study");
    let o = addis(&["replay", study], "");
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing data"));
}

#[test]
fn replay_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.study");
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/recovery.study"))
        .unwrap()
        .replace("p=NA", "p=0.02");
    std::fs::write(&path, text).unwrap();
    let p = path.to_str().unwrap();
    let a = addis(&["replay", p, "--procedure", "graph-conf-u", "--q", "0.7"], "");
    let b = addis(&["replay", p, "--procedure", "graph-conf-u", "--q", "0.7"], "");
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let text = stdout(&a);
    assert!(text.contains("gamma geometric:0.7"));
    assert!(text.lines().any(|l| l.starts_with("future-level ")));
}
