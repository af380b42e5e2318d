//! Experiment matrix execution and weight calibration.

use std::fs;
use std::io::BufWriter;
use std::path::Path;
use std::sync::mpsc;

use apcm_core::controller::VisibilityPlugin;
use rayon::prelude::*;

use crate::episode::{run_episode, Episode, TickView};
use crate::metrics::{aggregate_metrics, mean_std, RunKey, RunMetrics, SummaryRow};
use crate::output::{
    run_dir, tick_log_path, write_runs, write_summary, write_tick_log, RunOutcome,
};
use crate::plan::ExperimentPlan;
use crate::scenario::{generate_scenario, ScenarioFamily};
use crate::SimError;

/// A finished episode plus any APCM dumps, as `(tick, dump text)`.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub episode: Episode,
    pub metrics: RunMetrics,
    pub dumps: Vec<(usize, String)>,
}

/// Generates the world and runs one episode of the matrix.
pub fn run_one(plan: &ExperimentPlan, key: &RunKey) -> Result<RunArtifacts, SimError> {
    let env = generate_scenario(&plan.scenario_spec(key))?;
    let cfg = plan.episode_config(key);
    let every = plan.dump_apcm_every;
    let mut dumps = Vec::new();
    let mut observe = |view: &TickView<'_>| {
        if every > 0 && view.tick.is_multiple_of(every) {
            if let Some(apcm) = view.apcm {
                dumps.push((view.tick, apcm.map.to_dump_string()));
            }
        }
    };
    let observer: Option<&mut dyn FnMut(&TickView<'_>)> =
        if every > 0 { Some(&mut observe) } else { None };
    let episode = run_episode(&env, &cfg, key.seed, observer)?;
    let metrics = episode.metrics(key.clone(), &env);
    Ok(RunArtifacts {
        episode,
        metrics,
        dumps,
    })
}

pub fn build_pool(workers: usize) -> Result<rayon::ThreadPool, SimError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| SimError::Config(format!("cannot start {workers} workers: {e}")))
}

#[derive(Debug, Clone)]
pub struct MatrixReport {
    /// In matrix order.
    pub outcomes: Vec<RunOutcome>,
    pub summary: Vec<SummaryRow>,
}

impl MatrixReport {
    pub fn failures(&self) -> usize {
        self.outcomes
            .iter()
            .filter(|o| matches!(o, RunOutcome::Failed { .. }))
            .count()
    }

    pub fn metrics(&self) -> impl Iterator<Item = &RunMetrics> {
        self.outcomes.iter().filter_map(|o| match o {
            RunOutcome::Ok(m) => Some(m),
            RunOutcome::Failed { .. } => None,
        })
    }
}

fn write_file(
    path: &Path,
    write: impl FnOnce(BufWriter<fs::File>) -> Result<(), SimError>,
) -> Result<(), SimError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    write(BufWriter::new(fs::File::create(path)?))
}

/// Runs every key of the plan on a worker pool. Episodes send their results
/// to this thread, which alone writes files: one tick log per run as it
/// arrives, then `runs.csv` and `summary.csv` in matrix order. A failed run
/// is recorded and the rest continue.
pub fn run_matrix(
    plan: &ExperimentPlan,
    outdir: &Path,
    mut progress: impl FnMut(&RunKey, &Result<RunMetrics, String>),
) -> Result<MatrixReport, SimError> {
    plan.validate()?;
    let keys = plan.keys();
    let pool = build_pool(plan.workers)?;
    fs::create_dir_all(outdir)?;
    let mut outcomes: Vec<Option<RunOutcome>> = vec![None; keys.len()];

    let (tx, rx) = mpsc::channel::<(usize, Result<RunArtifacts, SimError>)>();
    std::thread::scope(|scope| -> Result<(), SimError> {
        let keys_ref = &keys;
        scope.spawn(move || {
            pool.install(|| {
                keys_ref
                    .par_iter()
                    .enumerate()
                    .with_max_len(1)
                    .for_each_with(tx, |tx, (i, key)| {
                        let _ = tx.send((i, run_one(plan, key)));
                    });
            });
        });
        for (i, result) in rx {
            let key = &keys[i];
            let outcome = match result {
                Ok(art) => {
                    write_file(&tick_log_path(outdir, key), |w| {
                        write_tick_log(w, &art.episode.ticks)
                    })?;
                    for (tick, text) in &art.dumps {
                        let path = run_dir(outdir, key)
                            .join(format!("seed_{}_apcm", key.seed))
                            .join(format!("tick_{tick:04}.grid"));
                        write_file(&path, |mut w| {
                            use std::io::Write;
                            w.write_all(text.as_bytes())?;
                            Ok(())
                        })?;
                    }
                    progress(key, &Ok(art.metrics.clone()));
                    RunOutcome::Ok(art.metrics)
                }
                Err(e) => {
                    let error = e.to_string();
                    progress(key, &Err(error.clone()));
                    RunOutcome::Failed {
                        key: key.clone(),
                        error,
                    }
                }
            };
            outcomes[i] = Some(outcome);
        }
        Ok(())
    })?;

    let outcomes: Vec<RunOutcome> = outcomes
        .into_iter()
        .map(|o| o.expect("every run reports back"))
        .collect();
    let ok: Vec<RunMetrics> = outcomes
        .iter()
        .filter_map(|o| match o {
            RunOutcome::Ok(m) => Some(m.clone()),
            RunOutcome::Failed { .. } => None,
        })
        .collect();
    let summary = aggregate_metrics(&ok);
    write_file(&outdir.join("runs.csv"), |w| write_runs(w, &outcomes))?;
    write_file(&outdir.join("summary.csv"), |w| write_summary(w, &summary))?;
    Ok(MatrixReport { outcomes, summary })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationRow {
    pub scale: f64,
    /// Peak displacement toward the road center, mean over seeds.
    pub peak_mean: f64,
    pub peak_std: f64,
    pub displacement_mean: f64,
    pub v_mean: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub method: VisibilityPlugin,
    pub target: f64,
    pub rows: Vec<CalibrationRow>,
    pub best_scale: f64,
    pub best_peak: f64,
    /// Whether the best peak lies within the tolerance of the target.
    pub within_tolerance: bool,
}

/// Sweeps `scales` for `method` on the single-car scenario and picks the
/// scale whose mean peak displacement is nearest `target`. A zero target
/// needs no sweep: every plugin's term is linear in its scale, so scale 0
/// removes it.
pub fn calibrate(
    plan: &ExperimentPlan,
    method: VisibilityPlugin,
    scales: &[f64],
    speed: f64,
    seeds: &[u64],
    target: f64,
    tolerance: f64,
) -> Result<Calibration, SimError> {
    if target == 0.0 {
        return Ok(Calibration {
            method,
            target,
            rows: Vec::new(),
            best_scale: 0.0,
            best_peak: 0.0,
            within_tolerance: true,
        });
    }
    if scales.is_empty() || seeds.is_empty() {
        return Err(SimError::Config(
            "calibration needs scales and seeds".into(),
        ));
    }
    let mut rows = Vec::with_capacity(scales.len());
    for &scale in scales {
        let mut p = plan.clone();
        p.scales.insert(method, scale);
        let runs: Vec<RunMetrics> = seeds
            .par_iter()
            .map(|&seed| {
                let key = RunKey {
                    scenario: ScenarioFamily::SingleCar,
                    method,
                    speed,
                    seed,
                };
                run_one(&p, &key).map(|a| a.metrics)
            })
            .collect::<Result<_, _>>()?;
        let peaks: Vec<f64> = runs.iter().map(|r| r.peak_displacement).collect();
        let (peak_mean, peak_std) = mean_std(&peaks);
        let disp: Vec<f64> = runs
            .iter()
            .flat_map(|r| r.displacement.iter().copied())
            .collect();
        let vel: Vec<f64> = runs
            .iter()
            .flat_map(|r| r.velocity.iter().copied())
            .collect();
        rows.push(CalibrationRow {
            scale,
            peak_mean,
            peak_std,
            displacement_mean: mean_std(&disp).0,
            v_mean: mean_std(&vel).0,
        });
    }
    let best = rows
        .iter()
        .min_by(|a, b| {
            (a.peak_mean - target)
                .abs()
                .total_cmp(&(b.peak_mean - target).abs())
        })
        .expect("non-empty sweep");
    Ok(Calibration {
        method,
        target,
        best_scale: best.scale,
        best_peak: best.peak_mean,
        within_tolerance: (best.peak_mean - target).abs() <= tolerance,
        rows,
    })
}
