use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn apcm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_apcm"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("plan.cfg");
    fs::write(&path, text).unwrap();
    path.display().to_string()
}

const TINY: &str = "\
[experiment]
scenarios = single_car
methods = none
speeds = 7.5
seeds = 4

[planner]
samples = 32

[sim]
tick_cap = 20
";

#[test]
fn unknown_method_is_a_config_error_listing_the_plugins() {
    let out = apcm(&["run", "--methods", "bogus", "-o", "unused"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    for name in ["proposed", "higgins", "andersen", "none", "nominal"] {
        assert!(err.contains(name), "{err}");
    }
}

#[test]
fn malformed_config_reports_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[experiment]\nseeds = 1..3\nthis line has no equals\n",
    );
    let out = apcm(&["run", "-c", &cfg, "-o", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[planner]\nsampels = 10\n");
    let out = apcm(&["run", "-c", &cfg, "-o", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sampels"));
}

#[test]
fn one_run_writes_one_tick_log_and_one_summary_row() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let out_dir = dir.path().join("out");
    let out = apcm(&["run", "-c", &cfg, "-o", out_dir.to_str().unwrap()]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let log = fs::read_to_string(out_dir.join("single_car/none/7.5/seed_4.csv")).unwrap();
    assert!(log.starts_with("tick,time,x,y,theta,v,"));
    assert_eq!(log.lines().count(), 21);
    let summary = fs::read_to_string(out_dir.join("summary.csv")).unwrap();
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("dense,7.5,none,1,"));
}

#[test]
fn seed_flag_overrides_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let out_dir = dir.path().join("out");
    let out = apcm(&[
        "run",
        "-c",
        &cfg,
        "-s",
        "7..8",
        "-o",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let run_dir = out_dir.join("single_car/none/7.5");
    assert!(run_dir.join("seed_7.csv").exists());
    assert!(run_dir.join("seed_8.csv").exists());
    assert!(!run_dir.join("seed_4.csv").exists());
}

#[test]
fn dump_apcm_writes_grid_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[planner]\nsamples = 32\n");
    let out = apcm(&[
        "dump-apcm",
        "-c",
        &cfg,
        "-s",
        "1",
        "--tick",
        "3",
        "-o",
        dir.path().to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let grid = fs::read_to_string(dir.path().join("apcm_tick_3.grid")).unwrap();
    let header: Vec<&str> = grid.lines().next().unwrap().split_whitespace().collect();
    assert_eq!(&header[..2], ["APCMGRID", "v1"]);
    let (w, h): (usize, usize) = (header[2].parse().unwrap(), header[3].parse().unwrap());
    let values: Vec<&str> = grid
        .lines()
        .skip(1)
        .flat_map(|l| l.split_whitespace())
        .collect();
    assert_eq!(values.len(), w * h);
    assert!(values
        .iter()
        .all(|v| v.split('.').nth(1).map(str::len) == Some(6)));
    assert!(dir.path().join("merged_tick_3.grid").exists());
}

#[test]
fn bench_rejects_tiny_grids_and_times_at_least_twenty_updates() {
    let out = apcm(&["bench", "-n", "2"]);
    assert_eq!(out.status.code(), Some(1));
    let out = apcm(&[
        "bench",
        "-n",
        "40",
        "-k",
        "40",
        "-m",
        "60",
        "-w",
        "2",
        "--updates",
        "5",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("updates 20"), "{stdout}");
    assert!(stdout.lines().any(|l| l.starts_with("2,")));
}
