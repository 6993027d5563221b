use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use slip_cli::commands::{energy_regions, CliError};
use slip_cli::{ResultStore, RunConfig};
use slip_core::observables::read_trajectory_csv;
use slip_core::regions::read_region_csv;
use slip_core::signal::{write_series_csv, TimeSeries};
use slip_core::SlipError;

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("slip-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn slip(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_slip")).args(args).output().expect("binary runs")
}

fn ok(out: &Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

fn small(out: &Path) -> Vec<String> {
    ["--energy", "840", "--grid", "21", "--resolution", "0.5", "--delta-alpha", "1,2", "--out"]
        .iter()
        .map(|s| s.to_string())
        .chain([out.display().to_string()])
        .collect()
}

fn run_small(cmd: &str, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![cmd.to_string()];
    args.extend(small(out));
    args.extend(extra.iter().map(|s| s.to_string()));
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    slip(&refs)
}

#[test]
fn regions_are_deterministic_and_nested() {
    let a = scratch("regions-a");
    let b = scratch("regions-b");
    ok(&run_small("regions", &a, &["--no-cache"]));
    ok(&run_small("regions", &b, &["--no-cache"]));
    let mut names: Vec<_> = fs::read_dir(a.join("regions")).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names.len(), 16);
    for n in &names {
        let x = fs::read(a.join("regions").join(n)).unwrap();
        let y = fs::read(b.join("regions").join(n)).unwrap();
        assert_eq!(x, y, "{n:?} differs between runs");
        let rows = read_region_csv(x.as_slice()).unwrap();
        assert_eq!(rows.len(), 21 * 21);
    }
    assert_eq!(fs::read(a.join("summary.csv")).unwrap(), fs::read(b.join("summary.csv")).unwrap());

    let mut rd = csv::Reader::from_path(a.join("summary.csv")).unwrap();
    let mut rows = 0;
    for rec in rd.records() {
        let rec = rec.unwrap();
        let viability: f64 = rec[3].parse().unwrap();
        let robust: f64 = rec[4].parse().unwrap();
        assert!(robust <= viability && viability <= 1.0, "{rec:?}");
        rows += 1;
    }
    assert_eq!(rows, 4);
}

#[test]
fn cached_grids_match_recomputation() {
    let dir = scratch("cache");
    let cfg = RunConfig {
        grid: slip_core::regions::GridSpec::square(15),
        angle_resolution_deg: 0.5,
        delta_alpha_deg: vec![1.0],
        ..Default::default()
    };
    let store = ResultStore::open(dir.join("cache")).unwrap();
    let fresh = energy_regions(&cfg, 830.0, Some(&store)).unwrap();
    assert!(store.misses() >= 1);
    let cached = energy_regions(&cfg, 830.0, Some(&store)).unwrap();
    assert_eq!(store.hits(), 8);
    let direct = energy_regions(&cfg, 830.0, None).unwrap();
    for (a, b) in [(&fresh[0], &cached[0]), (&fresh[0], &direct[0])] {
        assert_eq!(a.viability, b.viability);
        assert_eq!(a.robust, b.robust);
        assert_eq!(a.viable_to_robust, b.viable_to_robust);
        assert_eq!(a.robust_to_robust, b.robust_to_robust);
    }
}

#[test]
fn config_file_and_flag_override() {
    let dir = scratch("config");
    let cfg = dir.join("run.cfg");
    fs::write(&cfg, "[grid]\nsize = 11\nangle_resolution_deg = 1\n[sweep]\nenergy_start = 820\nenergy_stop = 830\nenergy_step = 10\n").unwrap();
    let out = dir.join("out");
    let o = slip(&["sweep-summary", "--params", cfg.to_str().unwrap(), "--delta-alpha", "2", "--out", out.to_str().unwrap()]);
    ok(&o);
    let text = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(text.lines().count(), 1 + 2 * 2);
    assert!(text.lines().skip(1).all(|l| l.split(',').nth(2) == Some("2.0")));
    let echoed = fs::read_to_string(out.join("run.cfg")).unwrap();
    assert_eq!(RunConfig::parse(&echoed).unwrap().grid.n_r, 11);
}

#[test]
fn bad_configuration_exits_with_2() {
    let dir = scratch("bad");
    let cfg = dir.join("bad.cfg");
    fs::write(&cfg, "[sweep]\nenergy_step = -5\n").unwrap();
    let o = slip(&["regions", "--params", cfg.to_str().unwrap(), "--out", dir.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("energy_step"));
    let o = slip(&["regions", "--grid", "0", "--out", dir.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let o = slip(&["transition", "--strategy", "sideways", "--out", dir.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    // below the minimum energy of the model
    let o = slip(&["regions", "--energy", "100", "--out", dir.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn infeasible_transition_exits_with_3() {
    let dir = scratch("infeasible");
    // no robust walking survives at this energy and Δα
    let o = slip(&[
        "transition", "--energy", "895", "--grid", "15", "--resolution", "0.5", "--delta-alpha", "3", "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("infeasible at stage"));
}

#[test]
fn exit_codes_follow_error_class() {
    assert_eq!(CliError::from(SlipError::Parse("x".into())).exit_code(), 2);
    assert_eq!(CliError::from(SlipError::Infeasible { stage: "s".into(), reason: "r".into() }).exit_code(), 3);
    assert_eq!(CliError::from(SlipError::NoConvergence { sweeps: 200, remaining: 3 }).exit_code(), 4);
    assert_eq!(CliError::from(SlipError::StepFailed { index: 1, kind: "fall".into() }).exit_code(), 4);
}

fn write_series(path: &Path, values: Vec<f64>) {
    let s = TimeSeries::with_units(100.0, 0.0, "m", values).unwrap();
    write_series_csv(&s, fs::File::create(path).unwrap()).unwrap();
}

#[test]
fn analyze_reports_splice_and_flat_series() {
    let dir = scratch("analyze");
    let splice = 1500;
    let (w1, w2) = (2.0 * PI * 1.0, 2.0 * PI * 1.4);
    let ts = splice as f64 / 100.0;
    let v = (0..3000)
        .map(|i| {
            let t = i as f64 / 100.0;
            if i < splice {
                1.0 + 0.04 * (w1 * t).cos()
            } else {
                1.0 + 0.04 * (w2 * (t - ts) + w1 * ts + PI / 2.0).cos()
            }
        })
        .collect();
    let input = dir.join("two.csv");
    write_series(&input, v);
    let o = slip(&["analyze", input.to_str().unwrap(), "--out", dir.to_str().unwrap()]);
    ok(&o);
    let json: serde_json::Value = serde_json::from_slice(&fs::read(dir.join("analysis.json")).unwrap()).unwrap();
    assert_eq!(json["status"], "ok");
    let idx = json["transition_index"].as_u64().unwrap() as i64;
    assert!((idx - splice as i64).abs() <= 3, "{idx}");
    assert!((json["phase_change_deg"].as_f64().unwrap() - 90.0).abs() < 2.0);

    let flat = dir.join("flat.csv");
    write_series(&flat, vec![0.95; 500]);
    let o = slip(&["analyze", flat.to_str().unwrap(), "--out", dir.to_str().unwrap()]);
    ok(&o);
    assert!(String::from_utf8_lossy(&o.stdout).contains("no transition detected"));
    let json: serde_json::Value = serde_json::from_slice(&fs::read(dir.join("analysis.json")).unwrap()).unwrap();
    assert_eq!(json["status"], "no-transition");
    assert!(json["transition_index"].is_null());

    let o = slip(&["analyze", dir.join("missing.csv").to_str().unwrap(), "--out", dir.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

fn transition_args(cmd: &str, out: &Path) -> Vec<String> {
    [cmd, "--energy", "840", "--grid", "51", "--resolution", "0.1", "--delta-alpha", "1", "--out"]
        .iter()
        .map(|s| s.to_string())
        .chain([out.display().to_string()])
        .collect()
}

#[test]
fn transition_and_hopping_outputs() {
    let dir = scratch("transition");
    let a = dir.join("a");
    let args = transition_args("transition", &a);
    let o = slip(&args.iter().map(String::as_str).collect::<Vec<_>>());
    ok(&o);
    for f in ["plan.json", "trajectory.csv", "observables.csv", "grf.csv", "run.cfg"] {
        assert!(a.join(f).exists(), "{f} missing");
    }

    // walking-level duty factor before the change, running-level after
    let mut rd = csv::Reader::from_path(a.join("observables.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = rd.records().map(Result::unwrap).collect();
    let duty = |r: &csv::StringRecord| r[11].parse::<f64>().unwrap();
    assert!(duty(&rows[0]) > 0.5, "{:?}", rows[0]);
    assert!(duty(rows.last().unwrap()) < 0.5, "{:?}", rows.last());
    assert_eq!(&rows[0][1], "walking");
    assert_eq!(&rows.last().unwrap()[1], "running");

    // replay reproduces the run byte for byte
    let b = dir.join("b");
    let mut replay = transition_args("transition", &b);
    replay.extend(["--replay".to_string(), a.join("plan.json").display().to_string()]);
    ok(&slip(&replay.iter().map(String::as_str).collect::<Vec<_>>()));
    for f in ["plan.json", "trajectory.csv", "observables.csv", "grf.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs on replay");
    }

    let traj = read_trajectory_csv(fs::File::open(a.join("trajectory.csv")).unwrap()).unwrap();
    assert!(traj.len() > 1000);

    // hopping: flight samples carry no load on either leg
    let h = dir.join("hop");
    let mut hop = transition_args("hopping", &h);
    hop.extend(["--cycles".to_string(), "3".to_string()]);
    ok(&slip(&hop.iter().map(String::as_str).collect::<Vec<_>>()));
    let mut rd = csv::Reader::from_path(h.join("grf.csv")).unwrap();
    let mut flight = 0;
    for rec in rd.records() {
        let rec = rec.unwrap();
        if &rec[2] == "flight" {
            flight += 1;
            assert_eq!((&rec[3], &rec[4]), ("0.0", "0.0"));
        }
    }
    assert!(flight > 0);
}
