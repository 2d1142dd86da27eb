use std::path::Path;
use std::process::{Command, Output};

fn edgepool(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_edgepool")).args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SCENARIO: &str = "version = 1\nexperiment = \"flash_crowd\"\nrepetitions = 2\n\
[delay]\njitter_ms = 0.1\n[flash_crowd]\nue_counts = [20, 40]\nvehicles = 10\nmeasure_ms = 1000\n";

fn scenario(dir: &Path, text: &str) -> String {
    let p = dir.join("s.toml");
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn run_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = edgepool(&["run", "--scenario", &scenario(dir.path(), SCENARIO), "--out", out.to_str().unwrap(), "--seed", "5"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rtt = std::fs::read_to_string(out.join("rtt.csv")).unwrap();
    assert_eq!(rtt.lines().next(), Some("scheme,ue_count,run,mean_ms"));
    assert_eq!(rtt.lines().count(), 1 + 3 * 2 * 2);
    let manifest = std::fs::read_to_string(out.join("manifest.toml")).unwrap();
    assert!(manifest.contains("seeds = [5, 6]"), "{manifest}");

    let r = edgepool(&["report", "--out", out.to_str().unwrap()]);
    assert!(r.status.success(), "{}", stderr(&r));
    let text = String::from_utf8(r.stdout).unwrap();
    assert!(text.contains("far_edge / cloud rtt ratio"), "{text}");
}

#[test]
fn identical_invocations_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let s = scenario(dir.path(), SCENARIO);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = edgepool(&["run", "--scenario", &s, "--out", out.to_str().unwrap(), "--set", "flash_crowd.vehicles=3"]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for f in ["rtt.csv", "migrations.csv", "downtime.csv", "manifest.toml"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    // Replaying from the manifest reproduces the run.
    let c = dir.path().join("c");
    let o = edgepool(&["run", "--scenario", a.join("manifest.toml").to_str().unwrap(), "--out", c.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(std::fs::read(a.join("rtt.csv")).unwrap(), std::fs::read(c.join("rtt.csv")).unwrap());
}

#[test]
fn malformed_config_exits_2_without_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    for text in [
        SCENARIO.replace("jitter_ms", "jiter_ms"),
        SCENARIO.replace("version = 1", "version = 3"),
        "not [valid toml".to_owned(),
        SCENARIO.replace("vehicles = 10", "vehicles = -1"),
    ] {
        let o = edgepool(&["run", "--scenario", &scenario(dir.path(), &text), "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(2), "{text}: {}", stderr(&o));
        assert!(!out.exists());
    }
    let o = edgepool(&["run", "--scenario", &scenario(dir.path(), SCENARIO), "--out", out.to_str().unwrap(), "--set", "delay.radio_ms=-2"]);
    assert_eq!(o.status.code(), Some(2));
    let o = edgepool(&["run", "--scenario", "/nonexistent.toml", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn report_on_empty_dir_names_missing_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let o = edgepool(&["report", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("missing artifact"), "{}", stderr(&o));
}

#[test]
fn fit_errors() {
    let dir = tempfile::tempdir().unwrap();
    let parking = dir.path().join("p.csv");
    let wifi = dir.path().join("w.csv");
    let out = dir.path().join("rates.txt");
    std::fs::write(&wifi, "timestamp_iso8601\n2020-01-01T08:00:00\n").unwrap();
    let fit = || {
        edgepool(&["fit", "--parking", parking.to_str().unwrap(), "--wifi", wifi.to_str().unwrap(), "--out", out.to_str().unwrap()])
    };

    std::fs::write(&parking, "vehicle_id,enter_iso8601,leave_iso8601\n").unwrap();
    let o = fit();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("at least 2 samples"), "{}", stderr(&o));

    std::fs::write(&parking, "vehicle_id,enter_iso8601,leave_iso8601\na,2020-01-01T08:00:00,2020-01-01T09:00:00\nb,08:00,2020-01-01T09:00:00\n").unwrap();
    let o = fit();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains(":3:"), "{}", stderr(&o));
    assert!(!out.exists());

    std::fs::write(&parking, "vehicle_id,enter_iso8601,leave_iso8601\na,2020-01-01T08:00:00,2020-01-01T09:00:00\nb,2020-01-01T08:00:00,2020-01-01T11:00:00\n").unwrap();
    let o = fit();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(std::fs::read_to_string(&out).unwrap().contains("vehicles_per_hour"));
}
