use std::path::Path;
use std::process::{Command, Output};

fn dodge(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dodge")).args(args).current_dir(dir).env("REBOT_THREADS", "2").output().unwrap()
}

fn write_config(dir: &Path) {
    std::fs::write(
        dir.join("tiny.toml"),
        "[ppo]\nnum_envs = 4\nhidden = [16]\nmax_iterations = 10\n\n[env.ranges]\nepisode_length = [1.0, 1.2]\n\n[curriculum]\ncheckpoint_every = 5\n",
    )
    .unwrap();
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn train_without_config_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = dodge(&["train", "--policy", "avoidance"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unknown_policy_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path());
    let o = dodge(&["train", "--config", "tiny.toml", "--policy", "biped"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_config_file_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = dodge(&["train", "--config", "nope.toml", "--policy", "avoidance"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nope.toml"));
}

#[test]
fn smoke_train_then_eval_and_sweep() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path());
    let o = dodge(&["train", "--config", "tiny.toml", "--policy", "avoidance", "--seed", "7", "--out", "run", "--quiet"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let run = dir.path().join("run");
    for f in ["train_avoidance.csv", "avoidance_final.rbot", "avoidance_iter000005.rbot", "avoidance_iter000010.rbot", "avoidance_stage_switch.rbot"] {
        assert!(run.join(f).exists(), "missing {f}");
    }
    let csv = std::fs::read_to_string(run.join("train_avoidance.csv")).unwrap();
    assert_eq!(csv.lines().count(), 11);

    let o = dodge(
        &["eval", "--config", "tiny.toml", "--avoidance", "run/avoidance_final.rbot", "--episodes", "4", "--t-react", "0.5:1.5", "--out", "ep.csv"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.contains("asr ") && text.contains("region "), "{text}");
    let episodes = std::fs::read_to_string(dir.path().join("ep.csv")).unwrap();
    assert_eq!(episodes.lines().count(), 5);
    assert!(episodes.lines().nth(1).unwrap().ends_with("no-recovery"));

    let o = dodge(
        &["sweep", "--avoidance", "run/avoidance_final.rbot", "--plane", "xy", "--angles", "2", "--t-react", "0.5:1.0:2", "--episodes-per-cell", "1"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let sweep = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 5);

    // a recovery checkpoint is not an avoidance policy
    let o = dodge(&["eval", "--avoidance", "run/avoidance_final.rbot", "--recovery", "run/avoidance_final.rbot"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn same_seed_gives_identical_training_csv() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path());
    for out in ["a", "b"] {
        let o = dodge(&["train", "--config", "tiny.toml", "--policy", "recovery", "--seed", "7", "--out", out, "--iterations", "3", "--quiet"], dir.path());
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let a = std::fs::read(dir.path().join("a/train_recovery.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b/train_recovery.csv")).unwrap();
    assert_eq!(a, b);
    let a = std::fs::read(dir.path().join("a/recovery_final.rbot")).unwrap();
    let b = std::fs::read(dir.path().join("b/recovery_final.rbot")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn print_config_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path());
    let o = dodge(&["print-config", "--config", "tiny.toml"], dir.path());
    assert!(o.status.success());
    let printed = stdout(&o);
    assert!(printed.contains("num_envs = 4"));
    assert!(printed.contains("[rewards.avoidance.weights]"));
    std::fs::write(dir.path().join("printed.toml"), &printed).unwrap();
    let again = dodge(&["print-config", "--config", "printed.toml"], dir.path());
    assert_eq!(stdout(&again), printed);

    let defaults = dodge(&["print-config"], dir.path());
    assert!(stdout(&defaults).contains("num_envs = 256"));
}
