//! Scenario simulator and experiment runner for the APCM planner.

pub mod bench;
pub mod config;
pub mod episode;
pub mod metrics;
pub mod output;
pub mod plan;
pub mod runner;
pub mod scenario;

use thiserror::Error;

pub use episode::{run_episode, Episode, EpisodeConfig};
pub use metrics::{aggregate_metrics, RunKey, RunMetrics, SummaryRow, TickRecord};
pub use plan::ExperimentPlan;
pub use scenario::{
    clutter_measure, generate_scenario, ClutterLabel, ClutterMeasure, Environment, ScenarioFamily,
    ScenarioSpec,
};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] apcm_core::Error),
    #[error("cannot place parked cars for {family} (row {row}: {placed} of {requested} placed)")]
    InfeasibleDensity {
        family: &'static str,
        row: usize,
        placed: usize,
        requested: usize,
    },
    #[error("planner failed at tick {tick}: {source}")]
    Planner {
        tick: usize,
        source: apcm_core::Error,
    },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl From<config::ConfigError> for SimError {
    fn from(e: config::ConfigError) -> Self {
        SimError::Config(e.to_string())
    }
}

impl SimError {
    /// True for errors caused by the inputs rather than the run.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            SimError::Config(_) | SimError::InfeasibleDensity { .. }
        )
    }
}
