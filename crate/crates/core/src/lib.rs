//! Alternate perspective cost maps for occlusion-aware planning.
//!
//! The pipeline per planning tick: threshold the merged occupancy map into an
//! uncertain set, keep the cells a hidden agent could reach the planned path
//! from, ray-cast from candidate AV positions to those cells, and hand the
//! normalized map to an MPPI planner as a visibility reward.

// Validation uses `!(x > 0)` on purpose so NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod controller;
pub mod error;
pub mod geometry;
pub mod grid;
pub mod reachability;
pub mod scalar;
pub mod sensor;
pub mod vehicle;
pub mod visibility;

pub use error::{Error, Result};
pub use scalar::Real;

/// Concrete `f64` aliases.
pub mod f64 {
    pub type Vec2 = crate::geometry::Vec2<f64>;
    pub type Polyline = crate::geometry::Polyline<f64>;
    pub type ConvexPolygon = crate::geometry::ConvexPolygon<f64>;
    pub type GridGeometry = crate::grid::GridGeometry<f64>;
    pub type OccupancyGrid = crate::grid::OccupancyGrid<f64>;
    pub type UncertainSet = crate::grid::UncertainSet<f64>;
    pub type ReachableOccludedSet = crate::reachability::ReachableOccludedSet<f64>;
    pub type PerspectiveCostMap = crate::visibility::PerspectiveCostMap<f64>;
    pub type VehicleState = crate::vehicle::VehicleState<f64>;
    pub type Control = crate::vehicle::Control<f64>;
    pub type VehicleParams = crate::vehicle::VehicleParams<f64>;
    pub type PlannerConfig = crate::controller::PlannerConfig<f64>;
}

/// Concrete `f32` aliases.
pub mod f32 {
    pub type Vec2 = crate::geometry::Vec2<f32>;
    pub type Polyline = crate::geometry::Polyline<f32>;
    pub type ConvexPolygon = crate::geometry::ConvexPolygon<f32>;
    pub type GridGeometry = crate::grid::GridGeometry<f32>;
    pub type OccupancyGrid = crate::grid::OccupancyGrid<f32>;
    pub type UncertainSet = crate::grid::UncertainSet<f32>;
    pub type ReachableOccludedSet = crate::reachability::ReachableOccludedSet<f32>;
    pub type PerspectiveCostMap = crate::visibility::PerspectiveCostMap<f32>;
    pub type VehicleState = crate::vehicle::VehicleState<f32>;
    pub type Control = crate::vehicle::Control<f32>;
    pub type VehicleParams = crate::vehicle::VehicleParams<f32>;
    pub type PlannerConfig = crate::controller::PlannerConfig<f32>;
}
