//! Properties of the perspective cost map builder.

use apcm_core::geometry::{Polyline, Vec2};
use apcm_core::grid::{CellIndex, GridGeometry, OccupancyGrid};
use apcm_core::reachability::{AgentClass, ReachableOccludedSet, ReachedCell};
use apcm_core::visibility::{
    cast_ray, select_observation_cells, update_apcm, update_apcm_with_workers, ObservationSet,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn targets(g: GridGeometry<f64>, mut cells: Vec<CellIndex>) -> ReachableOccludedSet<f64> {
    cells.sort();
    cells.dedup();
    ReachableOccludedSet {
        geometry: g,
        agents: vec![AgentClass::pedestrian()],
        entries: cells
            .into_iter()
            .map(|cell| ReachedCell {
                cell,
                step: 1,
                agent: 0,
            })
            .collect(),
    }
}

fn random_scene(
    seed: u64,
    n: usize,
) -> (
    OccupancyGrid<f64>,
    ObservationSet<f64>,
    ReachableOccludedSet<f64>,
) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = GridGeometry::new(n, n, 0.4, Vec2::new(0.0, 0.0)).unwrap();
    let values = (0..g.len())
        .map(|_| match rng.random_range(0..10) {
            0 => 1.0,
            1 | 2 => 0.5,
            _ => 0.0,
        })
        .collect();
    let occ = OccupancyGrid::from_values(g, values).unwrap();
    let mid = n as f64 * 0.2;
    let nominal = Polyline::new(vec![Vec2::new(0.0, mid), Vec2::new(n as f64 * 0.4, mid)]);
    let sources = select_observation_cells(&g, &nominal, 3.2, Vec2::new(1.0, mid), 25, 0.1, 5.0);
    let tcells = (0..n * 2)
        .map(|_| CellIndex::new(rng.random_range(0..n), rng.random_range(0..n)))
        .collect();
    (occ, sources, targets(g, tcells))
}

#[test]
fn free_space_gives_ones_then_zeros() {
    for seed in 0..5 {
        let (occ, sources, t) = random_scene(seed, 48);
        let free = OccupancyGrid::filled(*occ.geometry(), 0.0).unwrap();
        let apcm = update_apcm(&sources, &t, &free);
        assert_eq!(apcm.raw.len(), sources.len());
        assert!(apcm.raw.iter().all(|&v| v == 1.0));
        assert!(apcm.map.values().iter().all(|&v| v == 0.0));
    }
}

#[test]
fn bitwise_identical_across_worker_counts() {
    let (occ, sources, t) = random_scene(3, 64);
    let one = update_apcm_with_workers(&sources, &t, &occ, 1).unwrap();
    for workers in [2, 4, 8] {
        let other = update_apcm_with_workers(&sources, &t, &occ, workers).unwrap();
        let a: Vec<u64> = one.map.values().iter().map(|v| v.to_bits()).collect();
        let b: Vec<u64> = other.map.values().iter().map(|v| v.to_bits()).collect();
        assert_eq!(a, b, "workers {workers}");
        assert_eq!(one.raw, other.raw);
    }
}

#[test]
fn values_in_range_and_zero_off_sources() {
    for seed in 0..5 {
        let (occ, sources, t) = random_scene(seed, 40);
        let apcm = update_apcm(&sources, &t, &occ);
        for cell in occ.cells() {
            let v = apcm.map.get(cell);
            assert!((0.0..=1.0).contains(&v));
            if !sources.cells.contains(&cell) {
                assert_eq!(v, 0.0);
            }
        }
        assert!(apcm.raw.iter().all(|v| (0.0..=1.0).contains(v)));
    }
}

#[test]
fn mirrored_scene_gives_mirrored_map() {
    let n = 40;
    let (occ, _, t) = random_scene(9, n);
    let g = *occ.geometry();
    let flip = |c: CellIndex| CellIndex::new(c.col, n - 1 - c.row);
    let mut mirrored = OccupancyGrid::filled(g, 0.0).unwrap();
    for c in occ.cells() {
        mirrored.set(flip(c), occ.get(c));
    }
    // Nominal along the horizontal center line, which the flip maps to itself.
    let mid = n as f64 * 0.2;
    let nominal = Polyline::new(vec![Vec2::new(0.0, mid), Vec2::new(16.0, mid)]);
    let sources = select_observation_cells(&g, &nominal, 3.2, Vec2::new(1.0, mid), 25, 0.1, 5.0);
    let flipped_sources: Vec<CellIndex> = sources.cells.iter().map(|&c| flip(c)).collect();
    let mut sorted = flipped_sources.clone();
    sorted.sort();
    assert_eq!(sorted, sources.cells);
    let t_m = targets(g, t.cells().map(flip).collect());
    let a = update_apcm(&sources, &t, &occ);
    let b = update_apcm(&sources, &t_m, &mirrored);
    for c in occ.cells() {
        assert!((a.map.get(c) - b.map.get(flip(c))).abs() < 1e-12, "{c:?}");
    }
}

#[test]
fn joint_coverage_within_disjointness_bounds() {
    let n = 32;
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let g = GridGeometry::new(n, n, 0.4, Vec2::new(0.0, 0.0)).unwrap();
        let values = (0..g.len())
            .map(|_| if rng.random_bool(0.12) { 1.0 } else { 0.0 })
            .collect();
        let occ = OccupancyGrid::from_values(g, values).unwrap();
        let t = targets(
            g,
            (0..60)
                .map(|_| CellIndex::new(rng.random_range(0..n), rng.random_range(0..n)))
                .collect(),
        );
        let sources = ObservationSet {
            cells: (0..6).map(|i| CellIndex::new(2 + 5 * i, 16)).collect(),
            lane_half_width: 1.6,
            horizon_reach: 12.0,
        };
        let apcm = update_apcm(&sources, &t, &occ);
        let seen = |s: CellIndex| -> Vec<bool> {
            t.cells().map(|u| cast_ray(s, u, &occ) >= 1.0).collect()
        };
        let m = t.len() as f64;
        for i in 0..sources.len() {
            for j in 0..sources.len() {
                let (a, b) = (seen(sources.cells[i]), seen(sources.cells[j]));
                let joint = a.iter().zip(&b).filter(|(x, y)| **x || **y).count() as f64 / m;
                let (si, sj) = (apcm.raw[i], apcm.raw[j]);
                assert!(joint >= si.max(sj) - 1e-12 && joint <= si + sj + 1e-12);
            }
        }
    }
}
