//! Per-run metrics and the pooled summary table.

use std::collections::BTreeMap;

use apcm_core::controller::VisibilityPlugin;

use crate::scenario::{ClutterLabel, ScenarioFamily};

/// Mean and population standard deviation; `(NaN, NaN)` when empty.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

impl Moments {
    pub fn of(xs: &[f64]) -> Self {
        let (mean, std) = mean_std(xs);
        Self {
            mean,
            std,
            count: xs.len(),
        }
    }
}

/// One simulated tick, in tick-log column order.
#[derive(Debug, Clone, PartialEq)]
pub struct TickRecord {
    pub tick: usize,
    pub time: f64,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub v: f64,
    /// Arc length of the AV's projection on the nominal path.
    pub arc: f64,
    /// Signed offset from the nominal path, positive to the left.
    pub lateral: f64,
    /// Offset with the road-center convention: negative toward the center.
    pub displacement: f64,
    pub a_requested: f64,
    pub delta_requested: f64,
    pub a_command: f64,
    pub delta_command: f64,
    pub filter: &'static str,
    pub ttc: Option<f64>,
    /// Visibility term of the current state under the run's plugin.
    pub plugin_cost: f64,
    /// Distance to the nearest parked car.
    pub nearest_obstacle: f64,
    pub uncertain: usize,
    pub reachable: usize,
    pub sources: usize,
    pub phantoms: usize,
    pub collision: bool,
    /// Whether the tick counts toward the run metrics.
    pub in_window: bool,
}

/// Tick-log header, matching [`TickRecord`] field order.
pub const TICK_COLUMNS: [&str; 23] = [
    "tick",
    "time",
    "x",
    "y",
    "theta",
    "v",
    "arc",
    "lateral",
    "displacement",
    "a_requested",
    "delta_requested",
    "a_command",
    "delta_command",
    "filter",
    "ttc",
    "plugin_cost",
    "nearest_obstacle",
    "uncertain",
    "reachable",
    "sources",
    "phantoms",
    "collision",
    "in_window",
];

/// Identifies one episode of the experiment matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct RunKey {
    pub scenario: ScenarioFamily,
    pub method: VisibilityPlugin,
    pub speed: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub key: RunKey,
    pub clutter: ClutterLabel,
    pub ticks: usize,
    /// Per-tick series over the metric window.
    pub displacement: Vec<f64>,
    pub velocity: Vec<f64>,
    /// Distance to the nearest parked car at each tick.
    pub min_distance: Vec<f64>,
    /// Smallest distance to any car over the whole run.
    pub min_distance_overall: f64,
    /// Largest displacement toward the road center, as a positive number.
    pub peak_displacement: f64,
    pub collisions: usize,
    pub reached_end: bool,
}

impl RunMetrics {
    /// Derives the metrics from a tick log. Ticks outside the window are
    /// skipped unless the window is empty, in which case all ticks count.
    pub fn from_ticks(
        key: RunKey,
        clutter: ClutterLabel,
        ticks: &[TickRecord],
        reached_end: bool,
    ) -> Self {
        let any_window = ticks.iter().any(|t| t.in_window);
        let used: Vec<&TickRecord> = ticks
            .iter()
            .filter(|t| t.in_window || !any_window)
            .collect();
        let min_distance_overall = ticks
            .iter()
            .map(|t| t.nearest_obstacle)
            .fold(f64::INFINITY, f64::min);
        let peak = ticks.iter().map(|t| -t.displacement).fold(0.0f64, f64::max);
        Self {
            key,
            clutter,
            ticks: ticks.len(),
            displacement: used.iter().map(|t| t.displacement).collect(),
            velocity: used.iter().map(|t| t.v).collect(),
            min_distance: used.iter().map(|t| t.nearest_obstacle).collect(),
            min_distance_overall,
            peak_displacement: peak,
            collisions: ticks.iter().filter(|t| t.collision).count(),
            reached_end,
        }
    }

    pub fn displacement_moments(&self) -> Moments {
        Moments::of(&self.displacement)
    }

    pub fn velocity_moments(&self) -> Moments {
        Moments::of(&self.velocity)
    }

    pub fn min_distance_moments(&self) -> Moments {
        Moments::of(&self.min_distance)
    }
}

/// One row of the summary table.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub clutter: ClutterLabel,
    pub speed: f64,
    pub method: VisibilityPlugin,
    pub runs: usize,
    pub displacement: Moments,
    pub velocity: Moments,
    pub min_distance: Moments,
    /// Smallest distance to any car over all runs of the group.
    pub min_distance_min: f64,
    pub collisions: usize,
}

pub const SUMMARY_COLUMNS: [&str; 13] = [
    "clutter",
    "speed",
    "method",
    "runs",
    "ticks",
    "displacement_mean",
    "displacement_std",
    "v_mean",
    "v_std",
    "min_distance_mean",
    "min_distance_std",
    "min_distance_min",
    "collisions",
];

/// Speeds are grouped by their value in centimetres per second.
fn speed_key(v: f64) -> i64 {
    (v * 100.0).round() as i64
}

/// Pools the per-tick series of every run in a (clutter, speed, method) group.
/// Rows are ordered by clutter label, speed, then method.
pub fn aggregate_metrics(runs: &[RunMetrics]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(ClutterLabel, i64, VisibilityPlugin), Vec<&RunMetrics>> =
        BTreeMap::new();
    for r in runs {
        groups
            .entry((r.clutter, speed_key(r.key.speed), r.key.method))
            .or_default()
            .push(r);
    }
    groups
        .into_iter()
        .map(|((clutter, _, method), members)| {
            let pool = |f: fn(&RunMetrics) -> &Vec<f64>| {
                members
                    .iter()
                    .flat_map(|r| f(r).iter().copied())
                    .collect::<Vec<f64>>()
            };
            SummaryRow {
                clutter,
                speed: members[0].key.speed,
                method,
                runs: members.len(),
                displacement: Moments::of(&pool(|r| &r.displacement)),
                velocity: Moments::of(&pool(|r| &r.velocity)),
                min_distance: Moments::of(&pool(|r| &r.min_distance)),
                min_distance_min: members
                    .iter()
                    .map(|r| r.min_distance_overall)
                    .fold(f64::INFINITY, f64::min),
                collisions: members.iter().map(|r| r.collisions).sum(),
            }
        })
        .collect()
}
