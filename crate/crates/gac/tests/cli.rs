use std::path::Path;
use std::process::{Command, Output};

fn gac(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gac")).args(args).output().expect("running gac")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("run.txt");
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

const SMALL_RUN: &str = "env = lqr1d
seed = 3
total_steps = 300
warmup = 100
batch_size = 32
critic_hidden = 8, 8
actor_hidden =
eval_period = 100
eval_episodes = 2
";

#[test]
fn train_eval_and_plot_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL_RUN);
    let out = dir.path().join("out");
    let r = gac(&["train", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    for f in ["config.txt", "log.csv", "actor.txt", "critic.txt"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let log = std::fs::read_to_string(out.join("log.csv")).unwrap();
    assert_eq!(log.lines().count(), 1 + 4);

    let actor = out.join("actor.txt");
    let r = gac(&["eval", "--actor", actor.to_str().unwrap(), "--env", "lqr1d", "--episodes", "3"]);
    assert!(r.status.success());
    let stdout = String::from_utf8(r.stdout).unwrap();
    assert_eq!(stdout.lines().filter(|l| l.starts_with("episode")).count(), 3);

    let svg = dir.path().join("curve.svg");
    let r = gac(&["plot", "--log", out.join("log.csv").to_str().unwrap(), "--out", svg.to_str().unwrap()]);
    assert!(r.status.success());
    assert!(std::fs::read_to_string(svg).unwrap().contains("<polyline"));
}

#[test]
fn seed_flag_overrides_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL_RUN);
    let out = dir.path().join("out");
    let r = gac(&["train", "--config", &cfg, "--seed", "9", "--out", out.to_str().unwrap()]);
    assert!(r.status.success());
    let written = std::fs::read_to_string(out.join("config.txt")).unwrap();
    assert!(written.lines().any(|l| l == "seed = 9"));
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "env = lqr1d\nbogus = 1\n");
    let r = gac(&["train", "--config", &cfg]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("line 2"));

    let cfg = write_config(dir.path(), "env = moon\n");
    assert_eq!(gac(&["train", "--config", &cfg]).status.code(), Some(2));
    assert_eq!(gac(&["verify", "--suite", "nope"]).status.code(), Some(2));
}

#[test]
fn mismatched_actor_and_environment_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL_RUN);
    let out = dir.path().join("out");
    assert!(gac(&["train", "--config", &cfg, "--out", out.to_str().unwrap()]).status.success());
    let r = gac(&["eval", "--actor", out.join("actor.txt").to_str().unwrap(), "--env", "pendulum"]);
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn missing_files_exit_with_one() {
    assert_eq!(gac(&["eval", "--actor", "/nonexistent/actor.txt", "--env", "lqr1d"]).status.code(), Some(1));
    assert_eq!(gac(&["plot", "--log", "/nonexistent/log.csv", "--out", "/tmp/x.svg"]).status.code(), Some(1));
}

#[test]
fn a_passing_suite_exits_with_zero() {
    let r = gac(&["verify", "--suite", "naf"]);
    assert!(r.status.success());
    assert!(String::from_utf8(r.stdout).unwrap().starts_with("PASS"));
}
