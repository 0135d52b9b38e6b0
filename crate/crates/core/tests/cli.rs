//! End-to-end runs of the binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_conformal-kit"))
        .args(args)
        .current_dir(dir)
        .env_remove("CONFORMAL_KIT_THREADS")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn ok(dir: &Path, args: &[&str]) {
    let out = run(dir, args);
    assert_eq!(code(&out), 0, "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn write(dir: &Path, name: &str, text: &str) {
    fs::write(dir.join(name), text).unwrap();
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap()
}

fn rows_of(text: &str, kind: &str) -> Vec<String> {
    text.lines().filter(|l| l.starts_with(&format!("{kind},"))).map(str::to_string).collect()
}

#[test]
fn marginal_three_rows_gives_one_critical_row() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    write(d, "train.csv", "x1,y\n0,0\n1,1\n2,2\n");
    write(d, "cal.csv", "x1,y\n0,0.5\n1,1.2\n2,1.0\n");
    write(d, "run.conf", "data.train = train.csv\ndata.calibration = cal.csv\nmodel.k = 1\nalpha = 0.5\n");
    ok(d, &["calibrate", "--config", "run.conf", "--out", "out"]);
    let cal = read(d, "out/calibration.csv");
    assert!(cal.starts_with("kind,stratum,value\n"));
    assert_eq!(rows_of(&cal, "critical"), vec!["critical,all,0.5"]);
    assert_eq!(rows_of(&cal, "score").len(), 3);
    let meta = read(d, "out/meta.csv");
    assert!(meta.contains("seed,0\n"));
}

#[test]
fn strict_infinite_band_and_roundtrip_evaluation() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    write(d, "train.csv", "x1,y\n0,0\n1,1\n2,2\n");
    write(d, "cal.csv", "x1,y\n0,0.5\n1,1.2\n");
    write(d, "run.conf", "data.train = train.csv\ndata.calibration = cal.csv\nmodel.k = 1\nalpha = 0.1\n");
    write(d, "test.csv", "x1,y\n0.2,0\n1.9,5\n");
    ok(d, &["calibrate", "--config", "run.conf", "--out", "c"]);
    assert_eq!(rows_of(&read(d, "c/calibration.csv"), "critical"), vec!["critical,all,inf"]);
    ok(d, &["predict", "--config", "run.conf", "--calibration", "c", "--test", "test.csv", "--out", "p"]);
    assert_eq!(read(d, "p/predictions.csv"), "row,lo,hi\n1,-inf,inf\n2,-inf,inf\n");
    ok(d, &["evaluate", "--predictions", "p/predictions.csv", "--truths", "test.csv", "--out", "e"]);
    let report = read(d, "e/report.csv");
    assert!(report.contains("coverage,all,1\n") && report.contains("infinite_regions,all,2\n"), "{report}");

    write(d, "short.csv", "x1,y\n0.2,0\n");
    let out = run(d, &["evaluate", "--predictions", "p/predictions.csv", "--truths", "short.csv", "--out", "e"]);
    assert_eq!(code(&out), 3);
}

fn classification_files(d: &Path) {
    // three well separated classes on x1
    let mut train = String::from("x1,label\n");
    let mut cal = String::from("x1,label\n");
    for i in 0..30 {
        let c = i % 3 + 1;
        let jitter = (i as f64 * 0.37).sin() * 0.2;
        train.push_str(&format!("{},{c}\n", c as f64 * 10.0 + jitter));
        cal.push_str(&format!("{},{c}\n", c as f64 * 10.0 - jitter));
    }
    write(d, "train.csv", &train);
    write(d, "cal.csv", &cal);
    write(d, "test.csv", "x1,label\n10,1\n30.1,3\n20,2\n");
}

#[test]
fn mondrian_writes_one_critical_row_per_class() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    classification_files(d);
    write(
        d,
        "run.conf",
        "data.train = train.csv\ndata.calibration = cal.csv\nstrategy = mondrian\nscore = softmax\nmodel.k = 3\nalpha = 0.2\n",
    );
    ok(d, &["calibrate", "--config", "run.conf", "--out", "c"]);
    let crit = rows_of(&read(d, "c/calibration.csv"), "critical");
    assert_eq!(crit.len(), 3);
    ok(d, &["predict", "--config", "run.conf", "--calibration", "c", "--test", "test.csv", "--out", "p"]);
    assert_eq!(read(d, "p/predictions.csv"), "row,labels\n1,1\n2,3\n3,2\n");
    ok(d, &["evaluate", "--predictions", "p/predictions.csv", "--truths", "test.csv", "--out", "e"]);
    assert!(read(d, "e/report.csv").contains("coverage,3,1\n"));
}

#[test]
fn empty_prediction_set_is_an_empty_field() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    classification_files(d);
    // a negative critical score rejects every label
    write(d, "run.conf", "data.train = train.csv\ndata.calibration = cal.csv\nscore = softmax\nmodel.k = 3\n");
    ok(d, &["calibrate", "--config", "run.conf", "--out", "c"]);
    write(d, "c/calibration.csv", "kind,stratum,value\ncritical,all,-1\n");
    ok(d, &["predict", "--config", "run.conf", "--calibration", "c", "--test", "test.csv", "--out", "p"]);
    assert_eq!(read(d, "p/predictions.csv"), "row,labels\n1,\n2,\n3,\n");
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    write(
        d,
        "run.conf",
        "seed = 5\ngenerator.family = type2\ngenerator.n = 300\nmodel.k = 8\nscore = normalized\nstrategy = cv+\nresample.folds = 4\n",
    );
    write(d, "test.csv", "x1\n2\n5\n9\n");
    for out in ["a", "b"] {
        ok(d, &["calibrate", "--config", "run.conf", "--out", out]);
        ok(d, &["predict", "--config", "run.conf", "--calibration", out, "--test", "test.csv", "--out", out]);
    }
    for f in ["calibration.csv", "meta.csv", "predictions.csv"] {
        assert_eq!(read(d, &format!("a/{f}")), read(d, &format!("b/{f}")), "{f}");
    }
    ok(d, &["--seed", "6", "calibrate", "--config", "run.conf", "--out", "c"]);
    assert_ne!(read(d, "a/calibration.csv"), read(d, "c/calibration.csv"));
    assert!(read(d, "c/meta.csv").contains("seed,6\n"));
}

#[test]
fn config_errors_exit_two_and_name_the_key() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    for (text, key) in [
        ("generator.family = type2\nmodel.k = many\n", "model.k"),
        ("generator.family = type2\nstrategy = magic\n", "strategy"),
        ("data.path = missing.csv\n", "data.path"),
        ("generator.family = type2\nmodel.kk = 3\n", "model.kk"),
    ] {
        write(d, "bad.conf", text);
        let out = run(d, &["calibrate", "--config", "bad.conf", "--out", "o"]);
        assert_eq!(code(&out), 2, "{text}");
        assert!(String::from_utf8_lossy(&out.stderr).contains(key), "{text}");
    }
    let out = run(d, &["experiment", "nonsense"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("table4_1"));

    let out = Command::new(env!("CARGO_BIN_EXE_conformal-kit"))
        .args(["experiment", "beta_band"])
        .current_dir(d)
        .env("CONFORMAL_KIT_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);
}

#[test]
fn data_errors_exit_three() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    write(d, "train.csv", "x1,y\n0,0\n1,oops\n");
    write(d, "cal.csv", "x1,y\n0,0\n");
    write(d, "run.conf", "data.train = train.csv\ndata.calibration = cal.csv\n");
    assert_eq!(code(&run(d, &["calibrate", "--config", "run.conf"])), 3);

    write(d, "train.csv", "x1,y\n0,0\n1,1\n");
    ok(d, &["calibrate", "--config", "run.conf", "--out", "c"]);
    write(d, "wide.csv", "x1,x2\n0,0\n");
    let out = run(d, &["predict", "--config", "run.conf", "--calibration", "c", "--test", "wide.csv"]);
    assert_eq!(code(&out), 3);
}

#[test]
fn monitor_logs_events_and_alerts_on_shift() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    write(d, "run.conf", "seed = 2\ngenerator.family = type2\ngenerator.n = 400\n");
    ok(d, &["calibrate", "--config", "run.conf", "--out", "c"]);
    write(d, "empty.csv", "score\n");
    ok(d, &["monitor", "--config", "run.conf", "--calibration", "c", "--stream", "empty.csv", "--out", "e"]);
    assert_eq!(read(d, "e/monitor.csv"), "index,p_value,wealth,alert\n");

    let stream: String = std::iter::once("score".to_string())
        .chain((0..60).map(|i| format!("{}", 50.0 + i as f64)))
        .collect::<Vec<_>>()
        .join("\n");
    write(d, "shift.csv", &stream);
    ok(d, &["monitor", "--config", "run.conf", "--calibration", "c", "--stream", "shift.csv", "--out", "m"]);
    let log = read(d, "m/monitor.csv");
    assert_eq!(log.lines().count(), 61);
    assert!(log.lines().any(|l| l.ends_with(",true")));
}

#[test]
fn experiment_writes_tables_and_readme() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    ok(d, &["--seed", "3", "experiment", "illustration", "--out", "x"]);
    let readme = read(d, "x/README.md");
    assert!(readme.contains("seed: 3"));
    let csvs: Vec<_> = fs::read_dir(d.join("x"))
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.path().extension().is_some_and(|x| x == "csv"))
        .collect();
    assert!(!csvs.is_empty());
}
