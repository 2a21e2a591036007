use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use droploop::Raster;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_droploop"));
    c.env_remove("DROPLOOP_OUT");
    c
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn droploop(out: &Path, args: &[&str]) -> Output {
    bin().arg("--out").arg(out).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_config(dir: &Path, json: &str) -> PathBuf {
    let p = dir.join("config.json");
    std::fs::write(&p, json).unwrap();
    p
}

/// The one entry directly under `out`.
fn only_dir(out: &Path) -> PathBuf {
    let entries: Vec<_> = std::fs::read_dir(out).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(entries.len(), 1, "{entries:?}");
    entries[0].clone()
}

#[test]
fn init_writes_the_plan() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o = droploop(&out, &["init", "--seed", "5"]);
    assert!(o.status.success());
    let path = PathBuf::from(stdout(&o).trim());
    let first = std::fs::read(&path).unwrap();
    let text = String::from_utf8(first.clone()).unwrap();
    assert_eq!(text.lines().count(), 13);
    assert!(text.starts_with("sample,pressure_mpa,frequency_hz,speed_mm_s\n"));

    assert!(droploop(&out, &["init", "--seed", "5"]).status.success());
    assert_eq!(std::fs::read(&path).unwrap(), first);

    let cfg = write_config(tmp.path(), r#"{"schema_version": 1, "init": {"n": 1}}"#);
    let o = droploop(&out, &["init", "--config", cfg.to_str().unwrap()]);
    let one = std::fs::read_to_string(stdout(&o).trim()).unwrap();
    assert_eq!(one.lines().count(), 2);
}

#[test]
fn score_rows_and_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let golden = fixtures().join("golden");
    let o = droploop(&out, &["score", golden.join("sim_p0.05_f30_v500.png").to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(stdout(&o), std::fs::read_to_string(golden.join("score.csv")).unwrap());

    let imgs = tmp.path().join("imgs");
    std::fs::create_dir_all(&imgs).unwrap();
    for i in 0..12 {
        Raster::filled(40, 40, 255).unwrap().write_png(&imgs.join(format!("blank-{i:02}.png"))).unwrap();
    }
    let csv = tmp.path().join("scores.csv");
    let o = droploop(&out, &["score", imgs.to_str().unwrap(), "--csv", csv.to_str().unwrap()]);
    assert!(o.status.success());
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 13);
    assert!(text.lines().skip(1).all(|l| l.ends_with(",1,1,1,")));

    std::fs::write(imgs.join("broken.png"), b"\x89PNG but not really").unwrap();
    let o = droploop(&out, &["score", imgs.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let rows = stdout(&o);
    assert_eq!(rows.lines().count(), 14);
    assert!(rows.lines().any(|l| l.starts_with("broken.png,,,,") && l.len() > "broken.png,,,,".len()));
}

#[test]
fn seeded_bo_run_converges_and_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o = droploop(&out, &["run", "--seed", "42"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let dir = only_dir(&out);
    assert!(dir.file_name().unwrap().to_string_lossy().starts_with("run-42-"));
    let summary = std::fs::read_to_string(dir.join("summary.txt")).unwrap();
    assert!(summary.contains("converged: true"));
    assert_eq!(stdout(&o).lines().last().unwrap(), format!("run directory: {}", dir.display()));
    for step in ["Read Images", "Compute Score", "Train Model", "Printer Set Up", "Print Droplets", "Image Droplets"] {
        assert_eq!(summary.matches(step).count(), 1);
    }
    assert!(summary.contains("Total per Update") && summary.contains("Total for Convergence"));

    let ledger = std::fs::read_to_string(dir.join("ledger.jsonl")).unwrap();
    let updates = ledger.lines().count();
    let samples = std::fs::read_to_string(dir.join("samples.csv")).unwrap();
    assert_eq!(samples.lines().count(), 1 + 12 + updates);

    let d = dir.to_str().unwrap();
    assert!(droploop(&out, &["report", d, "--kind", "acquisition"]).status.success());
    let acq = std::fs::read_dir(dir.join("report/acquisition")).unwrap().count();
    assert_eq!(acq, 2 * 3 * updates);

    assert!(droploop(&out, &["report", d, "--kind", "loss-delta", "--from", "2", "--to", "2"]).status.success());
    let same = std::fs::read_to_string(dir.join("report/loss-delta/delta-002-002-pressure-frequency.csv")).unwrap();
    assert!(same.lines().skip(1).all(|l| l.ends_with(",0")));
    assert!(droploop(&out, &["report", d, "--kind", "loss-delta"]).status.success());
    let deltas = std::fs::read_to_string(dir.join("report/loss-delta/deltas.csv")).unwrap();
    assert_eq!(deltas.lines().count(), updates);

    assert!(droploop(&out, &["report", d, "--kind", "manifold1d"]).status.success());
    let m = std::fs::read_to_string(dir.join("report/manifold1d/manifold1d.csv")).unwrap();
    assert_eq!(m.lines().count(), 1 + 3 * 101);

    let o = droploop(&out, &["report", d, "--kind", "loss-delta", "--from", "1", "--to", "99"]);
    assert_eq!(o.status.code(), Some(3));
    // everything stayed inside the run directory
    assert_eq!(only_dir(&out), dir);
}

#[test]
fn empty_replay_inbox_times_out_with_partial_state() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    std::fs::create_dir_all(tmp.path().join("inbox")).unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"{"schema_version": 1, "backend": {"kind": "replay", "inbox": "inbox", "timeout_s": 0.05}}"#,
    );
    let o = droploop(&out, &["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let dir = only_dir(&out);
    assert_eq!(std::fs::read_to_string(dir.join("ledger.jsonl")).unwrap(), "");
    assert!(std::fs::read_to_string(dir.join("summary.txt")).unwrap().contains("converged: false"));
    // a run with no updates has nothing to plot
    let o = droploop(&out, &["report", dir.to_str().unwrap(), "--kind", "acquisition"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn config_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    for json in [
        "{not json",
        r#"{"schema_version": 9}"#,
        r#"{"schema_version": 1, "policy": {"tol": 0}}"#,
        r#"{"schema_version": 1, "init": {"n": 1}}"#,
    ] {
        let cfg = write_config(tmp.path(), json);
        let o = droploop(&out, &["run", "--config", cfg.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(2), "{json}");
    }
    let o = droploop(&out, &["run", "--config", tmp.path().join("missing.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_run_directory_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let o = droploop(tmp.path(), &["report", tmp.path().join("nope").to_str().unwrap(), "--kind", "manifold1d"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn table_report_fits_the_reference_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let table = fixtures().join("table1.csv");
    let o = droploop(&out, &["report", "--kind", "acquisition", "--table", table.to_str().unwrap()]);
    assert!(o.status.success());
    let dir = only_dir(&out).join("report/acquisition");
    assert_eq!(std::fs::read_dir(&dir).unwrap().count(), 3 * 2 + 1);
    let s = std::fs::read_to_string(dir.join("suggestion.csv")).unwrap();
    let v: Vec<f64> = s.lines().nth(1).unwrap().split(',').map(|x| x.parse().unwrap()).collect();
    assert!(v[0] < (0.02 + 0.15) / 2.0 && v[1] > (15.0 + 40.0) / 2.0, "{s}");
}

#[test]
fn out_falls_back_to_the_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let o = bin().env("DROPLOOP_OUT", tmp.path()).args(["init", "--seed", "1"]).output().unwrap();
    assert!(o.status.success());
    assert!(PathBuf::from(stdout(&o).trim()).starts_with(tmp.path()));
}

#[test]
fn compare_runs_both_arms() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o = droploop(&out, &["compare", "--seed", "42"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let dir = only_dir(&out);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("comparison.json")).unwrap()).unwrap();
    let arms = report["arms"].as_array().unwrap();
    let names: Vec<_> = arms.iter().map(|a| a["optimizer"].as_str().unwrap()).collect();
    assert_eq!(names, ["bo", "sgd"]);
    for a in arms {
        assert_eq!(a["total_samples"].as_u64().unwrap(), 12 + a["updates"].as_u64().unwrap());
    }
    assert!(dir.join("bo/ledger.jsonl").exists() && dir.join("sgd/ledger.jsonl").exists());
}
