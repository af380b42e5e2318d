//! `apcm`: run experiment matrices, calibrate visibility weights, time the
//! cost-map kernel and dump cost maps.
//!
//! Exit codes: 0 success, 1 configuration error, 2 runtime error.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, Context};
use apcm_core::controller::VisibilityPlugin;
use apcm_sim::bench::{time_updates, workload};
use apcm_sim::config::parse_range;
use apcm_sim::episode::{run_episode, TickView};
use apcm_sim::output::{speed_label, RunOutcome};
use apcm_sim::plan::ExperimentPlan;
use apcm_sim::runner::{calibrate, run_matrix};
use apcm_sim::{generate_scenario, RunKey, ScenarioFamily, SimError};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "apcm",
    version,
    about = "Alternate perspective cost map experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment config file (sectioned key = value).
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Seeds, `lo..hi` inclusive or a comma list; overrides the config.
    #[arg(short, long)]
    seeds: Option<String>,
    /// Worker threads, 0 = one per core; overrides the config.
    #[arg(short, long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scenario x method x speed x seed matrix and write CSVs.
    Run {
        #[command(flatten)]
        common: Common,
        /// Output directory.
        #[arg(short, long, default_value = "results")]
        out: PathBuf,
        /// Comma list of methods; overrides the config.
        #[arg(long)]
        methods: Option<String>,
        /// Comma list of scenarios; overrides the config.
        #[arg(long)]
        scenarios: Option<String>,
        /// Comma list of speeds; overrides the config.
        #[arg(long)]
        speeds: Option<String>,
    },
    /// Sweep visibility weights on the single-car scenario.
    Calibrate {
        #[command(flatten)]
        common: Common,
        /// Target peak displacement toward the road center, meters.
        #[arg(long, default_value_t = 2.0)]
        target: f64,
        #[arg(long, default_value_t = 0.3)]
        tolerance: f64,
        #[arg(long, default_value_t = 7.5)]
        speed: f64,
        /// Comma list of methods to calibrate.
        #[arg(long, default_value = "proposed,higgins,andersen")]
        methods: String,
        /// Comma list of scales to try for every method; defaults per method.
        #[arg(long)]
        scales: Option<String>,
        /// Write the sweep table here as CSV.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Time update_apcm on a synthetic grid.
    Bench {
        /// Grid side in cells.
        #[arg(short = 'n', long, default_value_t = 200)]
        size: usize,
        /// Source cells.
        #[arg(short = 'k', long, default_value_t = 600)]
        sources: usize,
        /// Target cells.
        #[arg(short = 'm', long, default_value_t = 2000)]
        targets: usize,
        /// Timed updates per configuration (at least 20).
        #[arg(long, default_value_t = 20)]
        updates: usize,
        /// Worker count of the multi-thread figure, 0 = one per core.
        #[arg(short, long, default_value_t = 0)]
        workers: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Write the APCM (and merged map) of one tick of one episode.
    DumpApcm {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "single_car")]
        scenario: String,
        #[arg(long, default_value_t = 7.5)]
        speed: f64,
        #[arg(long, default_value_t = 0)]
        tick: usize,
        /// Output directory; `apcm_tick_<n>.grid` and `merged_tick_<n>.grid`.
        #[arg(short, long, default_value = ".")]
        out: PathBuf,
    },
}

/// Error tagged with its exit code.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

fn config_error(e: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: 1,
        error: e.into(),
    }
}

fn runtime_error(e: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: 2,
        error: e.into(),
    }
}

fn classify(e: SimError) -> Failure {
    if e.is_config() {
        config_error(e)
    } else {
        runtime_error(e)
    }
}

fn load_plan(common: &Common) -> Result<ExperimentPlan, Failure> {
    let mut plan = match &common.config {
        Some(path) => ExperimentPlan::load(path).map_err(config_error)?,
        None => ExperimentPlan::default(),
    };
    if let Some(s) = &common.seeds {
        plan.seeds = parse_range(s).map_err(|m| config_error(anyhow!("--seeds: {m}")))?;
    }
    if let Some(w) = common.workers {
        plan.workers = w;
    }
    plan.validate().map_err(config_error)?;
    Ok(plan)
}

fn parse_list<T: std::str::FromStr>(flag: &str, text: &str) -> Result<Vec<T>, Failure>
where
    T::Err: std::fmt::Display,
{
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<T>()
                .map_err(|e| config_error(anyhow!("--{flag}: {e}")))
        })
        .collect()
}

fn cmd_run(
    common: &Common,
    out: &Path,
    methods: &Option<String>,
    scenarios: &Option<String>,
    speeds: &Option<String>,
) -> Result<(), Failure> {
    let mut plan = load_plan(common)?;
    if let Some(m) = methods {
        plan.methods = parse_list("methods", m)?;
    }
    if let Some(s) = scenarios {
        plan.scenarios = parse_list("scenarios", s)?;
    }
    if let Some(v) = speeds {
        plan.speeds = parse_list("speeds", v)?;
    }
    plan.validate().map_err(config_error)?;
    let total = plan.keys().len();
    let started = Instant::now();
    let mut done = 0usize;
    let report = run_matrix(&plan, out, |key, result| {
        done += 1;
        match result {
            Ok(m) => eprintln!(
                "[{done}/{total}] {} {} {} seed {}: ticks {} collisions {} ({:.0}s)",
                key.scenario,
                key.method,
                speed_label(key.speed),
                key.seed,
                m.ticks,
                m.collisions,
                started.elapsed().as_secs_f64()
            ),
            Err(e) => eprintln!(
                "[{done}/{total}] {} {} {} seed {}: FAILED: {e}",
                key.scenario,
                key.method,
                speed_label(key.speed),
                key.seed
            ),
        }
    })
    .map_err(classify)?;

    println!("clutter,speed,method,runs,displacement_mean,v_mean,min_distance_mean,collisions");
    for r in &report.summary {
        println!(
            "{},{},{},{},{:.3},{:.3},{:.3},{}",
            r.clutter,
            speed_label(r.speed),
            r.method,
            r.runs,
            r.displacement.mean,
            r.velocity.mean,
            r.min_distance.mean,
            r.collisions
        );
    }
    let failures = report.failures();
    if failures > 0 {
        for o in &report.outcomes {
            if let RunOutcome::Failed { key, error } = o {
                eprintln!(
                    "failed: {} {} {} seed {}: {error}",
                    key.scenario,
                    key.method,
                    speed_label(key.speed),
                    key.seed
                );
            }
        }
        return Err(runtime_error(anyhow!("{failures} of {total} runs failed")));
    }
    Ok(())
}

fn default_scales(method: VisibilityPlugin) -> Vec<f64> {
    match method {
        VisibilityPlugin::Proposed => vec![0.0, 10.0, 20.0, 40.0, 60.0, 80.0],
        VisibilityPlugin::Higgins => vec![0.0, 1e-3, 3e-3, 5e-3, 7e-3, 1e-2],
        VisibilityPlugin::Andersen => vec![0.0, 5.0, 10.0, 14.0, 20.0],
        VisibilityPlugin::None | VisibilityPlugin::Nominal => vec![0.0],
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_calibrate(
    common: &Common,
    target: f64,
    tolerance: f64,
    speed: f64,
    methods: &str,
    scales: &Option<String>,
    out: &Option<PathBuf>,
) -> Result<(), Failure> {
    let plan = load_plan(common)?;
    if !(0.0..).contains(&target) || !(0.0..).contains(&tolerance) {
        return Err(config_error(anyhow!(
            "target and tolerance must be non-negative"
        )));
    }
    let methods: Vec<VisibilityPlugin> = parse_list("methods", methods)?;
    let custom: Option<Vec<f64>> = scales
        .as_deref()
        .map(|s| parse_list("scales", s))
        .transpose()?;
    let pool = apcm_sim::runner::build_pool(plan.workers).map_err(config_error)?;
    let mut table = String::from("method,scale,peak_mean,peak_std,displacement_mean,v_mean\n");
    for method in methods {
        let sweep = custom.clone().unwrap_or_else(|| default_scales(method));
        let cal = pool
            .install(|| calibrate(&plan, method, &sweep, speed, &plan.seeds, target, tolerance))
            .map_err(classify)?;
        for r in &cal.rows {
            table.push_str(&format!(
                "{},{},{:.6},{:.6},{:.6},{:.6}\n",
                method, r.scale, r.peak_mean, r.peak_std, r.displacement_mean, r.v_mean
            ));
        }
        println!(
            "{method}: scale {} gives peak {:.3} m (target {target} m)",
            cal.best_scale, cal.best_peak
        );
        if !cal.within_tolerance {
            eprintln!(
                "warning: {method} sweep never came within {tolerance} m of the target; best effort reported"
            );
        }
    }
    print!("{table}");
    if let Some(path) = out {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(runtime_error)?;
        }
        std::fs::write(path, &table)
            .with_context(|| format!("writing {}", path.display()))
            .map_err(runtime_error)?;
    }
    Ok(())
}

fn cmd_bench(
    size: usize,
    sources: usize,
    targets: usize,
    updates: usize,
    workers: usize,
    seed: u64,
) -> Result<(), Failure> {
    let w = workload(size, sources, targets, seed).map_err(config_error)?;
    let updates = updates.max(20);
    let multi = if workers == 0 {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    } else {
        workers
    };
    println!(
        "grid {size}x{size}, sources {}, targets {}, updates {updates}",
        w.sources.len(),
        w.targets.len()
    );
    println!("workers,mean_ms,std_ms,rays_per_second");
    let mut configs = vec![1];
    if multi != 1 {
        configs.push(multi);
    }
    for n in configs {
        let t = time_updates(&w, n, updates).map_err(runtime_error)?;
        println!(
            "{},{:.3},{:.3},{:.0}",
            t.workers, t.mean_ms, t.std_ms, t.rays_per_second
        );
    }
    Ok(())
}

fn cmd_dump(
    common: &Common,
    scenario: &str,
    speed: f64,
    tick: usize,
    out: &PathBuf,
) -> Result<(), Failure> {
    let plan = load_plan(common)?;
    let family: ScenarioFamily = scenario.parse().map_err(config_error)?;
    let seed = plan.seeds[0];
    let key = RunKey {
        scenario: family,
        method: VisibilityPlugin::Proposed,
        speed,
        seed,
    };
    let env = generate_scenario(&plan.scenario_spec(&key)).map_err(classify)?;
    let mut cfg = plan.episode_config(&key);
    cfg.tick_cap = tick + 1;
    let mut captured: Option<(String, String)> = None;
    let mut observe = |view: &TickView<'_>| {
        if view.tick == tick {
            if let Some(apcm) = view.apcm {
                captured = Some((apcm.map.to_dump_string(), view.merged.to_dump_string()));
            }
        }
    };
    run_episode(&env, &cfg, seed, Some(&mut observe)).map_err(classify)?;
    let (apcm, merged) =
        captured.ok_or_else(|| runtime_error(anyhow!("episode ended before tick {tick}")))?;
    std::fs::create_dir_all(out).map_err(runtime_error)?;
    for (name, text) in [("apcm", apcm), ("merged", merged)] {
        let path = out.join(format!("{name}_tick_{tick}.grid"));
        std::fs::write(&path, text)
            .with_context(|| format!("writing {}", path.display()))
            .map_err(runtime_error)?;
        println!("{}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Run {
            common,
            out,
            methods,
            scenarios,
            speeds,
        } => cmd_run(common, out, methods, scenarios, speeds),
        Command::Calibrate {
            common,
            target,
            tolerance,
            speed,
            methods,
            scales,
            out,
        } => cmd_calibrate(common, *target, *tolerance, *speed, methods, scales, out),
        Command::Bench {
            size,
            sources,
            targets,
            updates,
            workers,
            seed,
        } => cmd_bench(*size, *sources, *targets, *updates, *workers, *seed),
        Command::DumpApcm {
            common,
            scenario,
            speed,
            tick,
            out,
        } => cmd_dump(common, scenario, *speed, *tick, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let _ = std::io::stdout().flush();
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
