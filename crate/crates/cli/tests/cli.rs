use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_levy-multiscale"));
    c.env_remove("LEVY_MULTISCALE_THREADS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

const SMALL_MERTON: &str = r#"
[experiment]
kind = "merton_convergence"
epsilons = [1.0, 0.1]
seeds = [5]

[levy]
family = "symmetric_stable"
alpha = 1.5

[problem]
sigma = "tanh"
sigma_base = 0.225
sigma_amplitude = 0.075
gamma = 0.5
control_lo = 0.0
control_hi = 3.0

[grid]
x_max = 3.0
x_points = 31
y_points = 13
effective_steps = 50

[box]
times = [0.0]
x = [0.5, 2.0]

[invariant]
samples = 4000
"#;

const SUBORDINATOR: &str = r#"
[experiment]
kind = "counterexample"

[levy]
family = "one_sided_stable"
alpha = 0.5
subordinator = true
"#;

fn code(o: &Output) -> i32 {
    o.status.code().expect("terminated by a signal")
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(code(&run(&[])), 1);
    assert_eq!(code(&run(&["frobnicate"])), 1);
    assert_eq!(code(&run(&["--help"])), 0);
}

#[test]
fn unknown_key_is_reported_with_its_line() {
    let dir = tempfile::tempdir().unwrap();
    let p = config(dir.path(), "bad.toml", "[experiment]\nkind = \"counterexample\"\n\n[levy]\nalfa = 1.5\n");
    let o = run(&["converge", "--config", p.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 5") && err.contains("alfa"), "{err}");
}

#[test]
fn missing_config_is_an_io_error() {
    let o = run(&["invariant", "--config", "/nonexistent/cfg.toml"]);
    assert_eq!(code(&o), 4);
}

#[test]
fn subordinator_fails_the_assumption_check() {
    let dir = tempfile::tempdir().unwrap();
    let p = config(dir.path(), "sub.toml", SUBORDINATOR);
    let out = dir.path().join("out");
    let o = run(&["check-assumptions", "--config", p.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(out.join("assumptions.txt").exists());
    let o = run(&["invariant", "--config", p.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    // the counterexample itself runs on the subordinator
    let o = run(&["converge", "--config", p.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("counterexample.csv").exists());
}

#[test]
fn unstable_time_step_is_a_numerical_error() {
    let dir = tempfile::tempdir().unwrap();
    let text = SMALL_MERTON.replace("effective_steps = 50", "effective_steps = 50\ntime_steps = 1");
    let p = config(dir.path(), "cfl.toml", &text);
    let o = run(&["solve-eps", "--config", p.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("dt"));
}

#[test]
fn bad_thread_count_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = config(dir.path(), "sub.toml", SUBORDINATOR);
    let o = bin()
        .env("LEVY_MULTISCALE_THREADS", "many")
        .args(["converge", "--config", p.to_str().unwrap(), "--out", dir.path().to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(code(&o), 1);
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let p = config(dir.path(), "merton.toml", SMALL_MERTON);
    let read = |sub: &str, files: &[&str]| -> Vec<Vec<u8>> {
        let out = dir.path().join(sub);
        for cmd in ["converge", "merton", "invariant"] {
            let o = run(&[cmd, "--config", p.to_str().unwrap(), "--out", out.to_str().unwrap()]);
            assert_eq!(code(&o), 0, "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
        }
        files.iter().map(|f| std::fs::read(out.join(f)).unwrap()).collect()
    };
    let files = [
        "report.csv",
        "merton_growth.csv",
        "merton.csv",
        "invariant.csv",
        "path.csv",
        "config.toml",
    ];
    let a = read("a", &files);
    let b = read("b", &files);
    assert_eq!(a, b);
    assert!(dir.path().join("a/gap_vs_epsilon.svg").exists());
}

#[test]
fn echoed_config_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let p = config(dir.path(), "merton.toml", SMALL_MERTON);
    let first = dir.path().join("first");
    let o = run(&["converge", "--config", p.to_str().unwrap(), "--out", first.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let echo = first.join("config.toml");
    let second = dir.path().join("second");
    let o = run(&["converge", "--config", echo.to_str().unwrap(), "--out", second.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["report.csv", "merton_growth.csv", "config.toml"] {
        assert_eq!(std::fs::read(first.join(f)).unwrap(), std::fs::read(second.join(f)).unwrap(), "{f}");
    }
}
