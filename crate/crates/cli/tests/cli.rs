//! Runs the `hertune` binary end to end.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn hertune(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hertune")).args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

const QUICK: &str = r#"
[train]
cycles_per_epoch = 2
optimize_steps_per_cycle = 5
eval_episodes = 4
hidden_sizes = [8, 8]
"#;

#[test]
fn train_eval_plot_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("quick.toml");
    fs::write(&config, QUICK).unwrap();
    let run = dir.path().join("run");

    let out = hertune(&["train", "--config", path(&config), "--epochs", "2", "--seed", "4", "--out", path(&run)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("epoch   2"));
    assert!(run.join("agent.json").is_file());

    let out = hertune(&["eval", path(&run), "--episodes", "3"]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("over 3 episodes on reach"));

    let csv = dir.path().join("plot.csv");
    let out = hertune(&["plot", path(&run), "--out", path(&csv)]);
    assert!(out.status.success());
    assert_eq!(fs::read_to_string(&csv).unwrap().lines().count(), 3);
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("quick.toml");
    fs::write(&config, format!("label = \"file\"\n[params]\ngamma = 0.5\n{QUICK}")).unwrap();
    let run = dir.path().join("run");
    let out = hertune(&[
        "train",
        "--config",
        path(&config),
        "--epochs",
        "1",
        "--gamma",
        "0.7",
        "--label",
        "flag",
        "--out",
        path(&run),
    ]);
    assert!(out.status.success());
    let config = hertune::harness::read_manifest(&run).unwrap().config;
    assert_eq!(config.params.gamma, 0.7);
    assert_eq!(config.label, "flag");
    assert_eq!(config.train.max_epochs, 1);
    assert_eq!(config.train.cycles_per_epoch, 2);
}

#[test]
fn interrupted_tune_resumes_to_the_same_result() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("quick.toml");
    fs::write(&config, QUICK).unwrap();
    let tune = |out: &Path, extra: &[&str]| {
        let mut args = vec![
            "tune",
            "--config",
            path(&config),
            "--epochs",
            "2",
            "--population",
            "3",
            "--generations",
            "2",
            "--out",
            path(out),
        ];
        args.extend_from_slice(extra);
        hertune(&args)
    };
    let whole = dir.path().join("whole");
    let split = dir.path().join("split");
    assert!(tune(&whole, &[]).status.success());
    let partial = tune(&split, &["--stop-after", "1"]);
    assert!(partial.status.success());
    assert!(stdout(&partial).contains("rerun to resume"));
    assert!(tune(&split, &[]).status.success());
    for file in ["campaign.csv", "campaign.json", "report.json"] {
        assert_eq!(fs::read(whole.join(file)).unwrap(), fs::read(split.join(file)).unwrap(), "{file}");
    }
}

#[test]
fn compare_reports_each_arm() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("quick.toml");
    fs::write(&config, QUICK).unwrap();
    let out_dir = dir.path().join("cmp");
    let out = hertune(&[
        "compare",
        "--config",
        path(&config),
        "--epochs",
        "1",
        "--arm",
        "original",
        "--arm",
        "optimal",
        "--seeds",
        "2",
        "--out",
        path(&out_dir),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.contains("original") && text.contains("optimal"));
    assert!(out_dir.join("comparison.json").is_file());
}

#[test]
fn bad_input_fails_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let out = hertune(&["plot", path(&dir.path().join("absent"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: missing input"));

    let out = hertune(&["train", "--env", "door"]);
    assert!(!out.status.success());

    let out = hertune(&["compare", "--arm", "mystery"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown arm"));

    let out = hertune(&["train", "--gamma", "1.5", "--out", path(&dir.path().join("x"))]);
    assert_eq!(out.status.code(), Some(1));
}
