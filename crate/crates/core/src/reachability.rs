//! Reachable occluded set: uncertain cells from which a hidden agent moving at
//! its class speed could reach some point of the planned trajectory in time.
//!
//! Step `n` of the trajectory is reached from cell center `z` when
//! `|x_n - z| <= n * dt * v_max`; the step index is converted to elapsed time
//! with the trajectory's `dt`.

use rayon::prelude::*;

use crate::geometry::Vec2;
use crate::grid::{CellIndex, GridGeometry, UncertainSet};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AgentKind {
    Pedestrian,
    Bike,
    Car,
    Custom,
}

impl AgentKind {
    pub fn name(self) -> &'static str {
        match self {
            AgentKind::Pedestrian => "pedestrian",
            AgentKind::Bike => "bike",
            AgentKind::Car => "car",
            AgentKind::Custom => "custom",
        }
    }
}

/// A class of hidden agent and its maximum speed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentClass<T> {
    pub kind: AgentKind,
    pub v_max: T,
}

impl<T: Real> AgentClass<T> {
    /// Returns `None` unless `v_max > 0`.
    pub fn new(kind: AgentKind, v_max: T) -> Option<Self> {
        (v_max > T::zero() && v_max.is_finite()).then_some(Self { kind, v_max })
    }

    /// Running pedestrian, 1.9 m/s.
    pub fn pedestrian() -> Self {
        Self {
            kind: AgentKind::Pedestrian,
            v_max: T::lit(1.9),
        }
    }
}

/// Future AV positions `x_{t+1} .. x_{t+T}`, one per step of length `dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannedTrajectory<T> {
    points: Vec<Vec2<T>>,
    dt: T,
}

impl<T: Real> PlannedTrajectory<T> {
    /// Returns `None` for an empty trajectory or non-positive `dt`.
    pub fn new(points: Vec<Vec2<T>>, dt: T) -> Option<Self> {
        (!points.is_empty() && dt > T::zero()).then_some(Self { points, dt })
    }

    /// Point of step `n` (1-based).
    pub fn step(&self, n: usize) -> Vec2<T> {
        self.points[n - 1]
    }

    pub fn points(&self) -> &[Vec2<T>] {
        &self.points
    }

    pub fn horizon(&self) -> usize {
        self.points.len()
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    /// The first `horizon` steps.
    pub fn prefix(&self, horizon: usize) -> Option<Self> {
        Self::new(
            self.points[..horizon.min(self.points.len())].to_vec(),
            self.dt,
        )
    }
}

/// One member of the reachable occluded set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReachedCell {
    pub cell: CellIndex,
    /// Earliest trajectory step (1-based) some agent class can reach.
    pub step: usize,
    /// Index into [`ReachableOccludedSet::agents`] of the class achieving `step`.
    pub agent: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReachableOccludedSet<T> {
    pub geometry: GridGeometry<T>,
    pub agents: Vec<AgentClass<T>>,
    /// Row-major, one entry per cell.
    pub entries: Vec<ReachedCell>,
}

impl<T: Real> ReachableOccludedSet<T> {
    pub fn empty(geometry: GridGeometry<T>) -> Self {
        Self {
            geometry,
            agents: Vec::new(),
            entries: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn cells(&self) -> impl Iterator<Item = CellIndex> + '_ {
        self.entries.iter().map(|e| e.cell)
    }

    pub fn contains(&self, cell: CellIndex) -> bool {
        self.entries.binary_search_by(|e| e.cell.cmp(&cell)).is_ok()
    }

    /// Membership mask as a 0/1 vector over the grid, row-major.
    pub fn mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.geometry.len()];
        for e in &self.entries {
            mask[self.geometry.linear(e.cell)] = true;
        }
        mask
    }
}

#[inline]
fn within_reach<T: Real>(dist: T, reach: T) -> bool {
    dist <= reach * (T::one() + T::epsilon() * T::lit(16.0))
}

/// Uncertain cells whose center lies within `n * dt * v_max` of `x_n`.
pub fn reach_step<T: Real>(
    uncertain: &UncertainSet<T>,
    x_n: Vec2<T>,
    n: usize,
    agent: &AgentClass<T>,
    dt: T,
) -> Vec<CellIndex> {
    assert!(n >= 1, "trajectory steps are 1-based");
    let reach = T::from_count(n) * dt * agent.v_max;
    let g = &uncertain.geometry;
    uncertain
        .cells
        .iter()
        .copied()
        .filter(|&c| within_reach(g.cell_center(c).distance(x_n), reach))
        .collect()
}

/// Union over steps `1..=T` and agent classes of [`reach_step`], annotated
/// with the earliest step. An empty agent list gives an empty set.
pub fn reachable_occluded<T: Real>(
    uncertain: &UncertainSet<T>,
    traj: &PlannedTrajectory<T>,
    agents: &[AgentClass<T>],
) -> ReachableOccludedSet<T> {
    let g = uncertain.geometry;
    if agents.is_empty() || uncertain.is_empty() {
        return ReachableOccludedSet {
            geometry: g,
            agents: agents.to_vec(),
            entries: Vec::new(),
        };
    }
    let dt = traj.dt();
    let horizon = traj.horizon();
    let fastest = agents.iter().map(|a| a.v_max).fold(T::zero(), T::max);
    let max_reach = T::from_count(horizon) * dt * fastest;
    let (mut lo, mut hi) = (
        Vec2::new(T::infinity(), T::infinity()),
        Vec2::new(T::neg_infinity(), T::neg_infinity()),
    );
    for p in traj.points() {
        lo = Vec2::new(lo.x.min(p.x), lo.y.min(p.y));
        hi = Vec2::new(hi.x.max(p.x), hi.y.max(p.y));
    }
    let slack = max_reach * (T::one() + T::lit(1e-6)) + g.resolution;
    lo = lo - Vec2::new(slack, slack);
    hi = hi + Vec2::new(slack, slack);

    let entries: Vec<ReachedCell> = uncertain
        .cells
        .par_iter()
        .filter_map(|&cell| {
            let z = g.cell_center(cell);
            if z.x < lo.x || z.y < lo.y || z.x > hi.x || z.y > hi.y {
                return None;
            }
            let mut best: Option<ReachedCell> = None;
            for (n, &x_n) in traj.points().iter().enumerate() {
                let step = n + 1;
                let dist = z.distance(x_n);
                let elapsed = T::from_count(step) * dt;
                if let Some(agent) = agents
                    .iter()
                    .position(|a| within_reach(dist, elapsed * a.v_max))
                {
                    best = Some(ReachedCell { cell, step, agent });
                    break;
                }
            }
            best
        })
        .collect();
    ReachableOccludedSet {
        geometry: g,
        agents: agents.to_vec(),
        entries,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{threshold_uncertain, OccupancyGrid};

    fn geom() -> GridGeometry<f64> {
        GridGeometry::new(20, 20, 0.4, Vec2::new(0.0, 0.0)).unwrap()
    }

    fn all_uncertain() -> UncertainSet<f64> {
        threshold_uncertain(&OccupancyGrid::unknown(geom()), (0.4, 0.6)).unwrap()
    }

    #[test]
    fn reach_step_boundary_is_inclusive() {
        let u = all_uncertain();
        let ped = AgentClass::pedestrian();
        let cell = CellIndex::new(5, 5);
        let x1 = geom().cell_center(cell) + Vec2::new(0.19, 0.0);
        assert!(reach_step(&u, x1, 1, &ped, 0.1).contains(&cell));
        // zero distance always reachable
        let x0 = geom().cell_center(cell);
        assert!(reach_step(&u, x0, 1, &ped, 0.1).contains(&cell));
        // 10 m away at n = 1 is not
        let far = geom().cell_center(cell) + Vec2::new(0.0, 10.0);
        assert!(!reach_step(&u, far, 1, &ped, 0.1).contains(&cell));
    }

    #[test]
    fn empty_inputs() {
        let traj = PlannedTrajectory::new(vec![Vec2::new(4.0, 4.0)], 0.1).unwrap();
        let empty = UncertainSet {
            geometry: geom(),
            cells: vec![],
        };
        assert!(reachable_occluded(&empty, &traj, &[AgentClass::pedestrian()]).is_empty());
        assert!(reachable_occluded(&all_uncertain(), &traj, &[]).is_empty());
        assert!(PlannedTrajectory::<f64>::new(vec![], 0.1).is_none());
        assert!(AgentClass::new(AgentKind::Car, 0.0).is_none());
    }

    #[test]
    fn single_step_matches_reach_step() {
        let u = all_uncertain();
        let x1 = Vec2::new(4.1, 3.9);
        let traj = PlannedTrajectory::new(vec![x1], 1.0).unwrap();
        let ped = AgentClass::pedestrian();
        let set = reachable_occluded(&u, &traj, &[ped]);
        let direct = reach_step(&u, x1, 1, &ped, 1.0);
        assert_eq!(set.cells().collect::<Vec<_>>(), direct);
        assert!(set.entries.iter().all(|e| e.step == 1 && e.agent == 0));
    }

    #[test]
    fn class_union_and_provenance() {
        let u = all_uncertain();
        let pts = (1..=5)
            .map(|i| Vec2::new(1.0 + i as f64 * 0.5, 4.0))
            .collect();
        let traj = PlannedTrajectory::new(pts, 0.1).unwrap();
        let ped = AgentClass::pedestrian();
        let car = AgentClass::new(AgentKind::Car, 8.3).unwrap();
        let both = reachable_occluded(&u, &traj, &[ped, car]);
        let p = reachable_occluded(&u, &traj, &[ped]);
        let c = reachable_occluded(&u, &traj, &[car]);
        let mut union: Vec<_> = p.cells().chain(c.cells()).collect();
        union.sort();
        union.dedup();
        assert_eq!(both.cells().collect::<Vec<_>>(), union);
        for e in &both.entries {
            let from_car = c.entries.iter().find(|x| x.cell == e.cell).map(|x| x.step);
            let from_ped = p.entries.iter().find(|x| x.cell == e.cell).map(|x| x.step);
            let earliest = from_car.into_iter().chain(from_ped).min().unwrap();
            assert_eq!(e.step, earliest);
        }
    }
}
