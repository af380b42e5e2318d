//! Reachable occluded sets against an exhaustive triple loop.

use apcm_core::geometry::Vec2;
use apcm_core::grid::{threshold_uncertain, CellIndex, GridGeometry, OccupancyGrid, UncertainSet};
use apcm_core::reachability::{reachable_occluded, AgentClass, AgentKind, PlannedTrajectory};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Earliest step per cell by checking every (cell, step, class) triple.
fn brute_force(
    uncertain: &UncertainSet<f64>,
    traj: &PlannedTrajectory<f64>,
    agents: &[AgentClass<f64>],
) -> Vec<(CellIndex, usize)> {
    let g = uncertain.geometry;
    let mut out = Vec::new();
    for &cell in &uncertain.cells {
        let z = g.cell_center(cell);
        let mut earliest = None;
        for n in 1..=traj.horizon() {
            for a in agents {
                let x = traj.step(n);
                let ratio = ((x.x - z.x).powi(2) + (x.y - z.y).powi(2)).sqrt()
                    / (n as f64 * traj.dt() * a.v_max);
                if ratio <= 1.0 && earliest.is_none() {
                    earliest = Some(n);
                }
            }
        }
        if let Some(n) = earliest {
            out.push((cell, n));
        }
    }
    out
}

fn instance(seed: u64) -> (UncertainSet<f64>, PlannedTrajectory<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = GridGeometry::new(50, 50, 0.4, Vec2::new(-3.0, 1.0)).unwrap();
    let values = (0..g.len())
        .map(|_| {
            if rng.random_bool(0.4) {
                0.5
            } else {
                rng.random_range(0..2) as f64
            }
        })
        .collect();
    let occ = OccupancyGrid::from_values(g, values).unwrap();
    let uncertain = threshold_uncertain(&occ, (0.4, 0.6)).unwrap();
    let horizon = rng.random_range(1..=25);
    let mut p = Vec2::new(rng.random_range(-3.0..17.0), rng.random_range(1.0..21.0));
    let heading: f64 = rng.random_range(-3.1..3.1);
    let pts = (0..horizon)
        .map(|_| {
            p = p + Vec2::from_angle(heading) * 0.75;
            p
        })
        .collect();
    (uncertain, PlannedTrajectory::new(pts, 0.1).unwrap())
}

#[test]
fn matches_brute_force_on_seeded_instances() {
    let agents = [
        AgentClass::pedestrian(),
        AgentClass::new(AgentKind::Bike, 5.0).unwrap(),
    ];
    for seed in 0..50 {
        let (uncertain, traj) = instance(seed);
        let fast = reachable_occluded(&uncertain, &traj, &agents);
        let slow = brute_force(&uncertain, &traj, &agents);
        let got: Vec<(CellIndex, usize)> = fast.entries.iter().map(|e| (e.cell, e.step)).collect();
        assert_eq!(got, slow, "seed {seed}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn monotone_in_horizon_and_speed(seed in any::<u64>(), boost in 0.0f64..3.0) {
        let (uncertain, traj) = instance(seed);
        let ped = AgentClass::pedestrian();
        let full = reachable_occluded(&uncertain, &traj, &[ped]);
        if traj.horizon() > 1 {
            let shorter = reachable_occluded(&uncertain, &traj.prefix(traj.horizon() - 1).unwrap(), &[ped]);
            prop_assert!(shorter.cells().all(|c| full.contains(c)));
        }
        let faster = AgentClass::new(AgentKind::Pedestrian, ped.v_max + boost).unwrap();
        let wide = reachable_occluded(&uncertain, &traj, &[faster]);
        prop_assert!(full.cells().all(|c| wide.contains(c)));
        prop_assert!(wide.cells().all(|c| uncertain.cells.binary_search(&c).is_ok()));
    }
}
