//! MPPI planner with pluggable visibility costs and a time-to-collision
//! safety filter.

mod config;
mod cost;
mod mppi;
mod safety;

pub use config::{PlannerConfig, VisibilityPlugin};
pub use cost::{
    stage_cost, vis_cost_andersen, vis_cost_higgins, vis_cost_none, vis_cost_proposed, CostContext,
    Obstacle,
};
pub use mppi::{mppi_plan, shift_tape, Plan};
pub use safety::{
    braking_path, first_interception, safety_filter, safety_filter_with_steering, FilterAction,
    FilterDecision, PhantomAgent, SafetyConfig,
};
