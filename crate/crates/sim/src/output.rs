//! CSV writers and readers.
//!
//! Floats are written with six decimals so reruns compare byte for byte.
//! Column orders are [`TICK_COLUMNS`], [`SUMMARY_COLUMNS`] and [`RUN_COLUMNS`].

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use crate::metrics::{
    Moments, RunKey, RunMetrics, SummaryRow, TickRecord, SUMMARY_COLUMNS, TICK_COLUMNS,
};
use crate::SimError;

fn num(x: f64) -> String {
    format!("{x:.6}")
}

fn flag(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

/// Speed directory name, one decimal: `7.5`, `10.0`.
pub fn speed_label(v: f64) -> String {
    format!("{v:.1}")
}

/// `<outdir>/<scenario>/<method>/<speed>`.
pub fn run_dir(outdir: &Path, key: &RunKey) -> PathBuf {
    outdir
        .join(key.scenario.name())
        .join(key.method.name())
        .join(speed_label(key.speed))
}

pub fn tick_log_path(outdir: &Path, key: &RunKey) -> PathBuf {
    run_dir(outdir, key).join(format!("seed_{}.csv", key.seed))
}

pub fn write_tick_log<W: Write>(out: W, ticks: &[TickRecord]) -> Result<(), SimError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TICK_COLUMNS)?;
    for t in ticks {
        w.write_record([
            t.tick.to_string(),
            num(t.time),
            num(t.x),
            num(t.y),
            num(t.theta),
            num(t.v),
            num(t.arc),
            num(t.lateral),
            num(t.displacement),
            num(t.a_requested),
            num(t.delta_requested),
            num(t.a_command),
            num(t.delta_command),
            t.filter.to_string(),
            t.ttc.map(num).unwrap_or_default(),
            num(t.plugin_cost),
            num(t.nearest_obstacle),
            t.uncertain.to_string(),
            t.reachable.to_string(),
            t.sources.to_string(),
            t.phantoms.to_string(),
            flag(t.collision).to_string(),
            flag(t.in_window).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Columns needed to recompute the run metrics from a tick log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoggedTick {
    pub v: f64,
    pub displacement: f64,
    pub nearest_obstacle: f64,
    pub collision: bool,
    pub in_window: bool,
}

pub fn read_tick_log<R: Read>(input: R) -> Result<Vec<LoggedTick>, SimError> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != TICK_COLUMNS {
        return Err(SimError::Config("tick log header does not match".into()));
    }
    let col = |name: &str| TICK_COLUMNS.iter().position(|c| *c == name).unwrap();
    let (iv, id, io, ic, iw) = (
        col("v"),
        col("displacement"),
        col("nearest_obstacle"),
        col("collision"),
        col("in_window"),
    );
    let parse = |s: &str| -> Result<f64, SimError> {
        s.parse()
            .map_err(|e| SimError::Config(format!("bad number `{s}` in tick log: {e}")))
    };
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        out.push(LoggedTick {
            v: parse(&rec[iv])?,
            displacement: parse(&rec[id])?,
            nearest_obstacle: parse(&rec[io])?,
            collision: &rec[ic] == "1",
            in_window: &rec[iw] == "1",
        });
    }
    Ok(out)
}

fn moments(m: &Moments) -> [String; 2] {
    [num(m.mean), num(m.std)]
}

pub fn write_summary<W: Write>(out: W, rows: &[SummaryRow]) -> Result<(), SimError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_COLUMNS)?;
    for r in rows {
        let mut rec = vec![
            r.clutter.name().to_string(),
            speed_label(r.speed),
            r.method.name().to_string(),
            r.runs.to_string(),
            r.displacement.count.to_string(),
        ];
        rec.extend(moments(&r.displacement));
        rec.extend(moments(&r.velocity));
        rec.extend(moments(&r.min_distance));
        rec.push(num(r.min_distance_min));
        rec.push(r.collisions.to_string());
        w.write_record(rec)?;
    }
    w.flush()?;
    Ok(())
}

pub const RUN_COLUMNS: [&str; 18] = [
    "scenario",
    "method",
    "speed",
    "seed",
    "status",
    "error",
    "clutter",
    "ticks",
    "reached_end",
    "displacement_mean",
    "displacement_std",
    "v_mean",
    "v_std",
    "min_distance_mean",
    "min_distance_std",
    "min_distance_min",
    "peak_displacement",
    "collisions",
];

/// Per-run outcome for `runs.csv`.
#[derive(Debug, Clone)]
pub enum RunOutcome {
    Ok(RunMetrics),
    Failed { key: RunKey, error: String },
}

pub fn write_runs<W: Write>(out: W, runs: &[RunOutcome]) -> Result<(), SimError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RUN_COLUMNS)?;
    for r in runs {
        let key = match r {
            RunOutcome::Ok(m) => &m.key,
            RunOutcome::Failed { key, .. } => key,
        };
        let mut rec = vec![
            key.scenario.name().to_string(),
            key.method.name().to_string(),
            speed_label(key.speed),
            key.seed.to_string(),
        ];
        match r {
            RunOutcome::Ok(m) => {
                rec.extend([
                    "ok".to_string(),
                    String::new(),
                    m.clutter.name().to_string(),
                ]);
                rec.push(m.ticks.to_string());
                rec.push(flag(m.reached_end).to_string());
                rec.extend(moments(&m.displacement_moments()));
                rec.extend(moments(&m.velocity_moments()));
                rec.extend(moments(&m.min_distance_moments()));
                rec.push(num(m.min_distance_overall));
                rec.push(num(m.peak_displacement));
                rec.push(m.collisions.to_string());
            }
            RunOutcome::Failed { error, .. } => {
                rec.extend(["failed".to_string(), error.clone()]);
                rec.extend(std::iter::repeat_n(String::new(), RUN_COLUMNS.len() - 6));
            }
        }
        w.write_record(rec)?;
    }
    w.flush()?;
    Ok(())
}
