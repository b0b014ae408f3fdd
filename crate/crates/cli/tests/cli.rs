//! End-to-end contract tests for the `gridres` binary: exit codes,
//! error-line shape, determinism, and the full pipeline at toy scale.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gridres"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

fn stderr(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

fn assert_ok(output: &Output) {
    assert!(
        output.status.success(),
        "expected success\nstdout:\n{}\nstderr:\n{}",
        stdout(output),
        stderr(output)
    );
}

fn write(path: &Path, contents: &str) {
    std::fs::write(path, contents).expect("write fixture");
}

/// Tiny-but-complete config: 2 areas, small grid, every area gusted, a
/// 4-epoch narrow surrogate, and 2 folds.
fn toy_config(dir: &Path) -> PathBuf {
    let path = dir.join("config.json");
    write(
        &path,
        r#"{
  "seed": 11,
  "topology": {
    "n_service_areas": 2,
    "poles_per_area": [6, 10],
    "buildings_per_area": [8, 12]
  },
  "sim": {
    "hazard": {"gust_area_probability": 1.0},
    "recovery": {"n_teams": 2}
  },
  "ingest": {"min_events": 1},
  "surrogate": {
    "gru_hidden": 4,
    "gru_layers": 1,
    "mlp_layers": 2,
    "gru_dropout": 0.0,
    "mlp_dropout": 0.0,
    "learning_rate": 0.01,
    "weight_decay": 0.0,
    "epochs": 4,
    "batch_size": 8,
    "input_dim": 16,
    "n_systems": 2
  },
  "train": {"folds": 2}
}"#,
    );
    path
}

#[test]
fn dump_config_round_trips_through_load() {
    let dir = tempfile::tempdir().expect("tempdir");
    let first = run(&["dump-config"]);
    assert_ok(&first);
    let config_path = dir.path().join("dumped.json");
    write(&config_path, &stdout(&first));
    let second = run(&["dump-config", "--config", config_path.to_str().unwrap()]);
    assert_ok(&second);
    assert_eq!(stdout(&first), stdout(&second));
}

#[test]
fn seed_flag_overrides_config_in_dump() {
    let output = run(&["dump-config", "--seed", "123"]);
    assert_ok(&output);
    assert!(stdout(&output).contains("\"seed\": 123"));
}

#[test]
fn unknown_subcommand_exits_2() {
    let output = run(&["frobnicate"]);
    assert_eq!(output.status.code(), Some(2));
}

fn outage_fixture(dir: &Path, rows: &[(&str, &str, u64)]) -> (PathBuf, PathBuf) {
    let outages = dir.join("outages.csv");
    let mut text = String::from("timestamp_utc,system_id,customers_out\n");
    for (timestamp, system, out) in rows {
        text.push_str(&format!("{timestamp},{system},{out}\n"));
    }
    write(&outages, &text);
    let population = dir.join("population.csv");
    write(&population, "system_id,year,population\nalpha,2021,1000\n");
    (outages, population)
}

/// Quarter-hour rows for `hours` consecutive hours starting 2021-06-01.
fn constant_outage(hours: u64, out: u64) -> Vec<(String, String, u64)> {
    let mut rows = Vec::new();
    for hour in 0..hours {
        for quarter in 0..4 {
            let minute = quarter * 15;
            rows.push((
                format!("2021-06-01T{hour:02}:{minute:02}:00Z"),
                "alpha".to_string(),
                out,
            ));
        }
    }
    rows
}

#[test]
fn ingest_emits_one_obvious_event() {
    let dir = tempfile::tempdir().expect("tempdir");
    let config = toy_config(dir.path());
    let rows = constant_outage(8, 250);
    let rows: Vec<(&str, &str, u64)> =
        rows.iter().map(|(t, s, o)| (t.as_str(), s.as_str(), *o)).collect();
    let (outages, population) = outage_fixture(dir.path(), &rows);
    let out_dir = dir.path().join("out");
    let output = run(&[
        "ingest",
        "--config",
        config.to_str().unwrap(),
        "--outages",
        outages.to_str().unwrap(),
        "--population",
        population.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_ok(&output);

    let scores = std::fs::read_to_string(out_dir.join("scores.csv")).expect("scores");
    let lines: Vec<&str> = scores.lines().collect();
    assert_eq!(lines.len(), 2, "one event expected:\n{scores}");
    assert_eq!(lines[0], "system_id,event_id,start_hour,end_hour,rs");
    // 250 of 1000 out, scale 2 -> fraction 0.5 -> f = 0.5 all 8 hours.
    assert!(lines[1].starts_with("alpha,0,"), "{}", lines[1]);
    assert!(lines[1].ends_with(",0.5"), "{}", lines[1]);

    let events = std::fs::read_to_string(out_dir.join("events.csv")).expect("events");
    assert_eq!(events.lines().count(), 1 + 8, "8 hourly rows:\n{events}");
}

#[test]
fn ingest_noise_only_emits_nothing() {
    let dir = tempfile::tempdir().expect("tempdir");
    let config = toy_config(dir.path());
    // 20 of 1000 out, scale 2 -> fraction 0.04, below the 0.1 threshold.
    let rows = constant_outage(10, 20);
    let rows: Vec<(&str, &str, u64)> =
        rows.iter().map(|(t, s, o)| (t.as_str(), s.as_str(), *o)).collect();
    let (outages, population) = outage_fixture(dir.path(), &rows);
    let out_dir = dir.path().join("out");
    let output = run(&[
        "ingest",
        "--config",
        config.to_str().unwrap(),
        "--outages",
        outages.to_str().unwrap(),
        "--population",
        population.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_ok(&output);
    let scores = std::fs::read_to_string(out_dir.join("scores.csv")).expect("scores");
    assert_eq!(scores.lines().count(), 1, "header only:\n{scores}");
}

#[test]
fn ingest_parse_error_is_single_line_exit_2() {
    let dir = tempfile::tempdir().expect("tempdir");
    let (outages, population) =
        outage_fixture(dir.path(), &[("not-a-timestamp", "alpha", 10)]);
    let output = run(&[
        "ingest",
        "--outages",
        outages.to_str().unwrap(),
        "--population",
        population.to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(2));
    let err = stderr(&output);
    assert_eq!(err.trim_end().lines().count(), 1, "single line:\n{err}");
    assert!(err.starts_with("error[parse]:"), "{err}");
    assert!(err.contains("line"), "line-numbered: {err}");
}

#[test]
fn config_error_reports_field_path_and_exit_2() {
    let dir = tempfile::tempdir().expect("tempdir");
    let config = dir.path().join("bad.json");
    write(&config, r#"{"planning": {"target": 1.5}}"#);
    let output = run(&["dump-config", "--config", config.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(2));
    let err = stderr(&output);
    assert!(err.starts_with("error[config]:"), "{err}");
    assert!(err.contains("planning.target"), "{err}");
}

fn run_simulate(config: &Path, out_dir: &Path, episodes: &str) {
    let output = run(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--episodes",
        episodes,
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_ok(&output);
    assert!(stdout(&output).contains("effective seed: 11"));
}

#[test]
fn simulate_same_seed_is_byte_identical() {
    let dir = tempfile::tempdir().expect("tempdir");
    let config = toy_config(dir.path());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    run_simulate(&config, &a, "4");
    run_simulate(&config, &b, "4");
    for name in ["weather.csv", "labels.csv", "summary.csv", "ground_truth.csv"] {
        let left = std::fs::read(a.join(name)).expect("left file");
        let right = std::fs::read(b.join(name)).expect("right file");
        assert_eq!(left, right, "{name} differs between identical runs");
    }
}

#[test]
fn pipeline_simulate_train_evaluate_plan() {
    let dir = tempfile::tempdir().expect("tempdir");
    let config = toy_config(dir.path());
    let sim_dir = dir.path().join("sim");
    run_simulate(&config, &sim_dir, "8");

    let weather = sim_dir.join("weather.csv");
    let labels = sim_dir.join("labels.csv");
    let train_dir = dir.path().join("train");
    let output = run(&[
        "train",
        "--config",
        config.to_str().unwrap(),
        "--weather",
        weather.to_str().unwrap(),
        "--labels",
        labels.to_str().unwrap(),
        "--mode",
        "kfold",
        "--out",
        train_dir.to_str().unwrap(),
    ]);
    assert_ok(&output);
    let text = stdout(&output);
    assert!(text.contains("effective seed: 11"), "{text}");
    assert!(train_dir.join("checkpoint_fold0.json").exists());
    assert!(train_dir.join("checkpoint_fold1.json").exists());
    let history = std::fs::read_to_string(train_dir.join("loss_history.csv")).expect("history");
    assert_eq!(history.lines().next(), Some("epoch,train_mae,val_mae"));
    assert_eq!(history.lines().count(), 1 + 4, "4 averaged epochs:\n{history}");

    // Zero factors make the weighting a no-op: Ru and Rw columns agree.
    let profiles = dir.path().join("profiles.csv");
    let mut profile_text = String::from(
        "system_id,f01,f02,f03,f04,f05,f06,f07,f08,f09,f10,f11,f12,f13,f14,f15\n",
    );
    for system in ["0", "1"] {
        profile_text.push_str(system);
        profile_text.push_str(&",0".repeat(15));
        profile_text.push('\n');
    }
    write(&profiles, &profile_text);

    let eval_dir = dir.path().join("eval");
    let output = run(&[
        "evaluate",
        "--config",
        config.to_str().unwrap(),
        "--checkpoint",
        train_dir.join("checkpoint_fold0.json").to_str().unwrap(),
        "--benchmark",
        weather.to_str().unwrap(),
        "--profiles",
        profiles.to_str().unwrap(),
        "--ground-truth",
        sim_dir.join("ground_truth.csv").to_str().unwrap(),
        "--out",
        eval_dir.to_str().unwrap(),
    ]);
    assert_ok(&output);
    let report = std::fs::read_to_string(eval_dir.join("report.csv")).expect("report");
    let mut rows = report.lines();
    assert_eq!(
        rows.next(),
        Some("system_id,ru,rw,rank_ru,rank_rw,der_watts")
    );
    for row in rows {
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields[1], fields[2], "Ru != Rw on zero factors: {row}");
        assert!(fields[5].is_empty(), "der empty before planning: {row}");
    }
    // Two systems: the Ru-vs-Rw rho is undefined but reported as such.
    assert!(stdout(&output).contains("rho(Ru, Rw)"), "{}", stdout(&output));

    let plan_dir = dir.path().join("plan");
    let output = run(&[
        "plan",
        "--config",
        config.to_str().unwrap(),
        "--report",
        eval_dir.join("report.json").to_str().unwrap(),
        "--profiles",
        profiles.to_str().unwrap(),
        "--target",
        "0.95",
        "--np",
        "10",
        "--out",
        plan_dir.to_str().unwrap(),
    ]);
    assert_ok(&output);
    let plan = std::fs::read_to_string(plan_dir.join("plan.csv")).expect("plan");
    let lines: Vec<&str> = plan.lines().collect();
    assert_eq!(
        lines[0],
        "system_id,mean_rs,n_events,watts_unweighted,watts_weighted,saturated_events"
    );
    assert_eq!(lines.len(), 3, "one row per system:\n{plan}");
    for row in &lines[1..] {
        let fields: Vec<&str> = row.split(',').collect();
        // Zero factors: weighted target equals unweighted, identical watts.
        assert_eq!(fields[3], fields[4], "{row}");
    }
    assert!(plan_dir.join("report_planned.json").exists());
    let planned =
        std::fs::read_to_string(plan_dir.join("report_planned.json")).expect("planned");
    assert!(planned.contains("\"der_watts\":"), "{planned}");
}

#[test]
fn plan_from_scores_with_target_below_means_is_all_zero() {
    let dir = tempfile::tempdir().expect("tempdir");
    let scores = dir.path().join("scores.csv");
    write(
        &scores,
        "system_id,event_id,start_hour,end_hour,rs\n\
         a,0,0,7,0.9\n\
         a,1,10,17,0.8\n\
         b,0,0,7,0.95\n",
    );
    let out_dir = dir.path().join("out");
    let output = run(&[
        "plan",
        "--scores",
        scores.to_str().unwrap(),
        "--target",
        "0.5",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_ok(&output);
    let plan = std::fs::read_to_string(out_dir.join("plan.csv")).expect("plan");
    for row in plan.lines().skip(1) {
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields[3], "0", "all-zero plan expected: {row}");
    }
}

#[test]
fn plan_requires_exactly_one_input() {
    let output = run(&["plan", "--target", "0.9"]);
    assert_eq!(output.status.code(), Some(2));
    assert!(stderr(&output).starts_with("error[config]:"), "{}", stderr(&output));
}
