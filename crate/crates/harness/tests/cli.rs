use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_eps-planner"));
    c.env_remove("EPS_PLANNER_SEED");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

const SMALL: [&str; 6] = ["--n", "200", "--p", "3", "--repeats", "2"];

#[test]
fn exit_codes() {
    let bad_eps = run(&["train", "--eps", "-1"]);
    assert_eq!(bad_eps.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad_eps.stderr).contains("--eps"));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["train"]).status.code(), Some(1), "missing --eps");
    assert_eq!(run(&["train", "--eps", "1", "--data", "/nonexistent/file.csv"]).status.code(), Some(2));
    assert_eq!(run(&["--version"]).status.code(), Some(0));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.txt");
    std::fs::write(&bad, "+1 1:0.5\n7 1:0.1\n").unwrap();
    let o = run(&["train", "--eps", "1", "--data", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));

    // a utility far above the measured one needs a nonpositive budget
    let o = run(&["choose-eps", "--n", "200", "--p", "3", "--target-utility", "50"]);
    assert_eq!(o.status.code(), Some(3), "{o:?}");
}

#[test]
fn train_and_choose_report_fields() {
    let o = run(&["train", "--eps", "0.5", "--n", "300", "--p", "3"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    for key in ["epsilon:", "utility:", "grad_norm:", "worst_case_bound:"] {
        assert!(text.contains(key), "{text}");
    }
    let o = run(&["choose-eps", "--n", "300", "--p", "3", "--measure-eps", "0.25", "--target-utility", "0.6"]);
    assert_eq!(o.status.code(), Some(0), "{o:?}");
    let text = stdout(&o);
    for key in ["chosen_epsilon:", "base_utility:", "slope:", "error_scale:"] {
        assert!(text.contains(key), "{text}");
    }
}

#[test]
fn identical_commands_give_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.csv");
    let summary_path = dir.path().join("t.summary.json");
    let mut args = vec!["estimate", "--measure-eps", "0.25", "--targets", "0.5:1:0.25", "--seed", "4"];
    args.extend(SMALL);
    args.extend(["--out", path.to_str().unwrap()]);
    let read = |p: &Path| std::fs::read(p).unwrap();
    assert_eq!(run(&args).status.code(), Some(0));
    let (first_csv, first_summary) = (read(&path), read(&summary_path));
    assert_eq!(run(&args).status.code(), Some(0));
    assert_eq!(first_csv, read(&path));
    assert_eq!(first_summary, read(&summary_path));
    let csv = String::from_utf8(first_csv).unwrap();
    assert!(csv.starts_with("measure_eps,target_eps,estimated,actual,abs_diff\r\n"));
    assert_eq!(csv.lines().count(), 4);
    let summary: serde_json::Value = serde_json::from_slice(&first_summary).unwrap();
    assert_eq!(summary["command"], "estimate");
    assert_eq!(summary["seeds"]["base"], 4);
    assert_eq!(summary["version"], env!("CARGO_PKG_VERSION"));
}

#[test]
fn seed_comes_from_the_environment() {
    let args = ["train", "--eps", "0.5", "--n", "100", "--p", "2"];
    let env = bin().args(args).env("EPS_PLANNER_SEED", "9").output().unwrap();
    let flag = run(&[&args[..], &["--seed", "9"]].concat());
    let other = run(&args);
    assert_eq!(stdout(&env), stdout(&flag));
    assert_ne!(stdout(&env), stdout(&other));
}

#[test]
fn command_line_beats_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# shared settings\nn = 100\np = 2\neps = 0.5\nseed = 3\n").unwrap();
    let cfg = cfg.to_str().unwrap();
    let from_file = run(&["train", "--config", cfg]);
    let explicit = run(&["train", "--n", "100", "--p", "2", "--eps", "0.5", "--seed", "3"]);
    assert_eq!(from_file.status.code(), Some(0), "{from_file:?}");
    assert_eq!(stdout(&from_file), stdout(&explicit));
    let overridden = run(&["train", "--config", cfg, "--eps", "2"]);
    assert!(stdout(&overridden).starts_with("epsilon: 2.0\n"), "{}", stdout(&overridden));

    let bad = dir.path().join("bad.cfg");
    std::fs::write(&bad, "eps = -3\n").unwrap();
    assert_eq!(run(&["train", "--config", bad.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn gen_data_round_trips_through_train() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.txt");
    let o = run(&["gen-data", "--n", "80", "--p", "3", "--format", "sparse_text", "--out", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let o = run(&["train", "--eps", "1", "--data", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{o:?}");
}

#[test]
fn table_commands_run() {
    let mut a = vec!["sweep-measuring", "--targets", "0.25,0.5,1"];
    a.extend(SMALL);
    let o = run(&a);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("measure_eps,avg_error,max_error\r\n"));

    let mut a = vec!["sweep-samples", "--sizes", "50,200", "--targets", "0.5,1"];
    a.extend(SMALL);
    let o = run(&a);
    assert_eq!(o.status.code(), Some(0), "{o:?}");
    assert_eq!(stdout(&o).lines().count(), 3);

    let mut a = vec!["oracle-compare", "--measure-eps", "0.5", "--tol", "1e-12"];
    a.extend(SMALL);
    let o = run(&a);
    assert_eq!(o.status.code(), Some(0), "{o:?}");
    assert!(stdout(&o).starts_with("measure_eps,seed,step,analytic_slope"));
    assert_eq!(run(&["oracle-compare", "--solver", "sgd", "--n", "50"]).status.code(), Some(1));
}
