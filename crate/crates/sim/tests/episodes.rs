use std::fs;
use std::path::Path;

use apcm_core::controller::VisibilityPlugin;
use apcm_sim::episode::{run_episode, spawn_phantoms, TickView};
use apcm_sim::metrics::mean_std;
use apcm_sim::output::{read_tick_log, tick_log_path};
use apcm_sim::runner::run_matrix;
use apcm_sim::{generate_scenario, ExperimentPlan, RunKey, ScenarioFamily};

fn small_plan() -> ExperimentPlan {
    let mut plan = ExperimentPlan {
        seeds: vec![1, 2],
        methods: vec![VisibilityPlugin::Proposed, VisibilityPlugin::None],
        workers: 2,
        ..Default::default()
    };
    plan.episode.planner.samples = 64;
    plan.episode.tick_cap = 60;
    plan
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().display().to_string();
                out.push((rel, fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn rerun_writes_identical_bytes() {
    let plan = small_plan();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_matrix(&plan, a.path(), |_, _| {}).unwrap();
    let mut single = plan.clone();
    single.workers = 1;
    run_matrix(&single, b.path(), |_, _| {}).unwrap();
    let (fa, fb) = (files(a.path()), files(b.path()));
    assert_eq!(fa.len(), 2 * 2 + 2);
    assert_eq!(fa, fb);
}

#[test]
fn summary_agrees_with_tick_logs() {
    let plan = small_plan();
    let dir = tempfile::tempdir().unwrap();
    let report = run_matrix(&plan, dir.path(), |_, _| {}).unwrap();
    assert_eq!(report.failures(), 0);
    for m in report.metrics() {
        let log =
            read_tick_log(fs::File::open(tick_log_path(dir.path(), &m.key)).unwrap()).unwrap();
        assert_eq!(log.len(), m.ticks);
        let window: Vec<_> = if log.iter().any(|t| t.in_window) {
            log.iter().filter(|t| t.in_window).collect()
        } else {
            log.iter().collect()
        };
        let disp: Vec<f64> = window.iter().map(|t| t.displacement).collect();
        let vel: Vec<f64> = window.iter().map(|t| t.v).collect();
        // Logs carry six decimals.
        assert!((mean_std(&disp).0 - m.displacement_moments().mean).abs() < 1e-6);
        assert!((mean_std(&vel).0 - m.velocity_moments().mean).abs() < 1e-6);
        assert_eq!(log.iter().filter(|t| t.collision).count(), m.collisions);
    }
    let summary = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    // Header plus one row per method (single car is one clutter label).
    assert_eq!(summary.lines().count(), 3);
    let runs = fs::read_to_string(dir.path().join("runs.csv")).unwrap();
    assert_eq!(runs.lines().count(), 5);
}

#[test]
fn failed_runs_are_recorded_and_the_rest_continue() {
    let mut plan = small_plan();
    plan.scenarios = vec![ScenarioFamily::Park];
    plan.scenario.density = 40.0;
    let dir = tempfile::tempdir().unwrap();
    let mut seen = 0;
    let report = run_matrix(&plan, dir.path(), |_, r| {
        assert!(r.is_err());
        seen += 1;
    })
    .unwrap();
    assert_eq!(seen, 4);
    assert_eq!(report.failures(), 4);
    let runs = fs::read_to_string(dir.path().join("runs.csv")).unwrap();
    assert_eq!(runs.lines().filter(|l| l.contains(",failed,")).count(), 4);
    let summary = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1);
}

#[test]
fn nominal_tracks_the_path_without_phantoms() {
    let mut plan = ExperimentPlan::default();
    plan.episode.planner.samples = 64;
    plan.episode.phantoms = false;
    let key = RunKey {
        scenario: ScenarioFamily::SingleCar,
        method: VisibilityPlugin::Nominal,
        speed: 7.5,
        seed: 3,
    };
    let env = generate_scenario(&plan.scenario_spec(&key)).unwrap();
    let ep = run_episode(&env, &plan.episode_config(&key), key.seed, None).unwrap();
    assert!(ep.reached_end);
    for t in &ep.ticks {
        assert!(
            t.lateral.abs() < 0.3,
            "tick {} lateral {}",
            t.tick,
            t.lateral
        );
        assert!((t.v - 7.5).abs() < 0.5, "tick {} v {}", t.tick, t.v);
        assert_eq!(t.phantoms, 0);
        assert_eq!(t.filter, "pass");
    }
}

#[test]
fn phantoms_sit_in_reachable_occluded_cells_and_never_collide() {
    let mut plan = ExperimentPlan::default();
    plan.episode.planner.samples = 64;
    let key = RunKey {
        scenario: ScenarioFamily::SingleCar,
        method: VisibilityPlugin::None,
        speed: 10.0,
        seed: 2,
    };
    let env = generate_scenario(&plan.scenario_spec(&key)).unwrap();
    let mut spawned = 0;
    let mut check = |v: &TickView<'_>| {
        let geo = v.reachable.geometry;
        let fresh = spawn_phantoms(v.reachable, &env, &[]);
        for p in &fresh {
            let cell = geo.world_to_cell(p.position).unwrap();
            assert!(v.reachable.entries.iter().any(|e| e.cell == cell));
            let value = v.merged.get(cell);
            assert!((0.4..=0.6).contains(&value));
        }
        spawned += fresh.len();
    };
    let ep = run_episode(&env, &plan.episode_config(&key), key.seed, Some(&mut check)).unwrap();
    assert!(spawned > 0);
    assert!(ep.ticks.iter().all(|t| !t.collision));
}
