//! Synthetic APCM workloads for timing.

use std::time::Instant;

use apcm_core::f64::{GridGeometry, OccupancyGrid, ReachableOccludedSet, Vec2};
use apcm_core::grid::CellIndex;
use apcm_core::reachability::{AgentClass, ReachedCell};
use apcm_core::visibility::{update_apcm, ObservationSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::metrics::mean_std;
use crate::SimError;

/// An `n` x `n` grid at 0.4 m with scattered car-sized blocks and unknown
/// patches, `k` source cells along a band through the middle and `m` target
/// cells drawn from the unknown cells.
pub struct Workload {
    pub grid: OccupancyGrid,
    pub sources: ObservationSet<f64>,
    pub targets: ReachableOccludedSet,
}

pub fn workload(n: usize, k: usize, m: usize, seed: u64) -> Result<Workload, SimError> {
    if n < 4 || k == 0 || m == 0 {
        return Err(SimError::Config(
            "bench needs n >= 4 and positive k, m".into(),
        ));
    }
    let geo = GridGeometry::new(n, n, 0.4, Vec2::new(0.0, 0.0))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = vec![0.0; geo.len()];
    let mid = n / 2;
    let band = (n / 20).max(1);
    // Blocks of 12 x 5 cells, kept off the source band, with unknown shadows.
    let blocks = n * n / 800;
    for _ in 0..blocks {
        let c = rng.random_range(0..n.saturating_sub(12).max(1));
        let r = rng.random_range(0..n.saturating_sub(5).max(1));
        if r + 5 + 2 >= mid - band && r <= mid + band + 2 {
            continue;
        }
        for row in r..(r + 5).min(n) {
            for col in c..(c + 12).min(n) {
                values[row * n + col] = 1.0;
            }
        }
        let shadow = if r < mid {
            r.saturating_sub(6)..r
        } else {
            (r + 5).min(n)..(r + 11).min(n)
        };
        for row in shadow {
            for col in c..(c + 12).min(n) {
                if values[row * n + col] == 0.0 {
                    values[row * n + col] = 0.5;
                }
            }
        }
    }
    let unknown: Vec<usize> = (0..geo.len()).filter(|&i| values[i] == 0.5).collect();
    let mut picked = Vec::new();
    let mut flags = vec![false; geo.len()];
    if unknown.is_empty() {
        return Err(SimError::Config("bench grid has no unknown cells".into()));
    }
    while picked.len() < m.min(unknown.len()) {
        let i = unknown[rng.random_range(0..unknown.len())];
        if !flags[i] {
            flags[i] = true;
            picked.push(i);
        }
    }
    picked.sort_unstable();
    let grid = OccupancyGrid::from_values(geo, values)?;

    let mut cells = Vec::new();
    'rows: for row in (mid - band)..=(mid + band).min(n - 1) {
        for col in 0..n {
            if cells.len() == k {
                break 'rows;
            }
            cells.push(CellIndex::new(col, row));
        }
    }
    cells.sort();
    let sources = ObservationSet {
        cells,
        lane_half_width: 2.0,
        horizon_reach: 25.0,
    };
    let targets = ReachableOccludedSet {
        geometry: geo,
        agents: vec![AgentClass::pedestrian()],
        entries: picked
            .into_iter()
            .map(|i| ReachedCell {
                cell: geo.cell_at(i),
                step: 1,
                agent: 0,
            })
            .collect(),
    };
    Ok(Workload {
        grid,
        sources,
        targets,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Timing {
    pub workers: usize,
    pub updates: usize,
    pub mean_ms: f64,
    pub std_ms: f64,
    /// Source-target rays per second.
    pub rays_per_second: f64,
}

/// Times `updates` calls of `update_apcm` on a pool of `workers` threads.
pub fn time_updates(w: &Workload, workers: usize, updates: usize) -> Result<Timing, SimError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| SimError::Config(e.to_string()))?;
    let mut ms = Vec::with_capacity(updates);
    pool.install(|| {
        for _ in 0..updates.max(1) {
            let t = Instant::now();
            let map = update_apcm(&w.sources, &w.targets, &w.grid);
            ms.push(t.elapsed().as_secs_f64() * 1e3);
            std::hint::black_box(map);
        }
    });
    let (mean_ms, std_ms) = mean_std(&ms);
    let rays = (w.sources.len() * w.targets.len()) as f64;
    Ok(Timing {
        workers: workers.max(1),
        updates: ms.len(),
        mean_ms,
        std_ms,
        rays_per_second: rays / (mean_ms / 1e3),
    })
}
