//! Probabilistic ray casting and the alternate perspective cost map (APCM).
//!
//! Each observation cell (source) gets the mean probability of seeing the
//! reachable occluded cells (targets) through the merged occupancy map; the
//! per-source means are then min-max normalized into the map.

use rayon::prelude::*;

use crate::geometry::{Polyline, Vec2};
use crate::grid::{CellIndex, GridGeometry, OccupancyGrid};
use crate::reachability::ReachableOccludedSet;
use crate::scalar::Real;

/// Targets are summed in fixed blocks of this size; block sums are then
/// combined pairwise. Both orders are independent of the worker count.
const TARGET_BLOCK: usize = 256;

/// Cells strictly between two cells on an integer midpoint Bresenham line.
///
/// The major axis advances one cell per step; the minor axis advances when the
/// accumulated error is non-negative, so exact half-way ties step toward the
/// target along the minor axis.
#[derive(Debug, Clone)]
pub struct Interior {
    col: i64,
    row: i64,
    step_major: (i64, i64),
    step_minor: (i64, i64),
    two_minor: i64,
    two_major: i64,
    err: i64,
    remaining: usize,
}

impl Interior {
    pub fn new(src: CellIndex, trg: CellIndex) -> Self {
        let dc = trg.col as i64 - src.col as i64;
        let dr = trg.row as i64 - src.row as i64;
        let (sc, sr) = (dc.signum(), dr.signum());
        let (major, minor, step_major, step_minor) = if dc.abs() >= dr.abs() {
            (dc.abs(), dr.abs(), (sc, 0), (0, sr))
        } else {
            (dr.abs(), dc.abs(), (0, sr), (sc, 0))
        };
        Self {
            col: src.col as i64,
            row: src.row as i64,
            step_major,
            step_minor,
            two_minor: 2 * minor,
            two_major: 2 * major,
            err: 2 * minor - major,
            remaining: (major - 1).max(0) as usize,
        }
    }
}

impl Iterator for Interior {
    type Item = CellIndex;

    #[inline]
    fn next(&mut self) -> Option<CellIndex> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        if self.err >= 0 {
            self.col += self.step_minor.0;
            self.row += self.step_minor.1;
            self.err -= self.two_major;
        }
        self.err += self.two_minor;
        self.col += self.step_major.0;
        self.row += self.step_major.1;
        Some(CellIndex::new(self.col as usize, self.row as usize))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        (self.remaining, Some(self.remaining))
    }
}

impl ExactSizeIterator for Interior {}

/// Bresenham cells between `src` and `trg`, both excluded. Empty when the
/// cells coincide or touch.
pub fn trace_cells(src: CellIndex, trg: CellIndex) -> Vec<CellIndex> {
    Interior::new(src, trg).collect()
}

/// Probability that `trg` is seen from `src`: the product of `1 - occ` over
/// the cells strictly between them, in trace order.
pub fn cast_ray<T: Real>(src: CellIndex, trg: CellIndex, occ: &OccupancyGrid<T>) -> T {
    let mut p = T::one();
    for c in Interior::new(src, trg) {
        p = p * (T::one() - occ.get(c));
    }
    p
}

/// Same product over a precomputed `1 - occ` buffer, walking linear
/// indices. Stops once the product is zero, which cannot change the result.
#[inline]
fn cast_ray_free<T: Real>(src: CellIndex, trg: CellIndex, free: &[T], width: usize) -> T {
    let it = Interior::new(src, trg);
    let w = width as i64;
    let major = it.step_major.0 + it.step_major.1 * w;
    let minor = it.step_minor.0 + it.step_minor.1 * w;
    let mut idx = it.row * w + it.col;
    let mut err = it.err;
    let mut p = T::one();
    for _ in 0..it.remaining {
        if err >= 0 {
            idx += minor;
            err -= it.two_major;
        }
        err += it.two_minor;
        idx += major;
        p = p * free[idx as usize];
        if p == T::zero() {
            break;
        }
    }
    p
}

/// Mean visibility of `targets` from `src`; `None` when there are no targets.
pub fn perspective_value<T: Real>(
    src: CellIndex,
    targets: &ReachableOccludedSet<T>,
    occ: &OccupancyGrid<T>,
) -> Option<T> {
    if targets.is_empty() {
        return None;
    }
    let free: Vec<T> = occ.values().iter().map(|&v| T::one() - v).collect();
    let cells: Vec<CellIndex> = targets.cells().collect();
    Some(source_sum(src, &cells, &free, occ.width()) / T::from_count(cells.len()))
}

/// Candidate positions for the AV: cells within `d / 2` of the nominal path
/// and at most `horizon_reach` meters ahead of the current position along it.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet<T> {
    /// Row-major.
    pub cells: Vec<CellIndex>,
    pub lane_half_width: T,
    pub horizon_reach: T,
}

impl<T: Real> ObservationSet<T> {
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

/// Selects observation cells on `geometry`.
///
/// The reach is `v_cap * horizon * dt`; `position` is projected onto `nominal`
/// to find where the window starts.
pub fn select_observation_cells<T: Real>(
    geometry: &GridGeometry<T>,
    nominal: &Polyline<T>,
    lane_width: T,
    position: Vec2<T>,
    horizon: usize,
    dt: T,
    v_cap: T,
) -> ObservationSet<T> {
    let half = lane_width * T::lit(0.5);
    let reach = v_cap * T::from_count(horizon) * dt;
    let mut set = ObservationSet {
        cells: Vec::new(),
        lane_half_width: half,
        horizon_reach: reach,
    };
    if horizon == 0 || !(lane_width > T::zero()) {
        return set;
    }
    let s0 = nominal.project(position).arc;
    let s1 = s0 + reach;

    // Bounding box of the path section plus the band.
    let mut lo = nominal.point_at(s0.min(nominal.length()));
    let mut hi = lo;
    let mut extend = |p: Vec2<T>| {
        lo = Vec2::new(lo.x.min(p.x), lo.y.min(p.y));
        hi = Vec2::new(hi.x.max(p.x), hi.y.max(p.y));
    };
    extend(nominal.point_at(s1.min(nominal.length())));
    let pts = nominal.points();
    let mut arc = T::zero();
    for (i, &p) in pts.iter().enumerate() {
        if i > 0 {
            arc = arc + pts[i - 1].distance(p);
        }
        if arc >= s0 && arc <= s1 {
            extend(p);
        }
    }
    let pad = Vec2::new(half + geometry.resolution, half + geometry.resolution);
    let Some((c0, c1)) = geometry.cell_range(lo - pad, hi + pad) else {
        return set;
    };
    for row in c0.row..=c1.row {
        for col in c0.col..=c1.col {
            let cell = CellIndex::new(col, row);
            let proj = nominal.project(geometry.cell_center(cell));
            if proj.lateral.abs() <= half && proj.arc >= s0 && proj.arc <= s1 {
                set.cells.push(cell);
            }
        }
    }
    set
}

/// Min-max scaling to `[0, 1]`; all zeros when the values are uniform.
pub fn normalize<T: Real>(values: &[T]) -> Vec<T> {
    let Some(&first) = values.first() else {
        return Vec::new();
    };
    let (lo, hi) = values
        .iter()
        .fold((first, first), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if hi == lo {
        return vec![T::zero(); values.len()];
    }
    let span = hi - lo;
    values
        .iter()
        .map(|&v| ((v - lo) / span).max(T::zero()).min(T::one()))
        .collect()
}

/// The APCM together with the per-source values it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct PerspectiveCostMap<T> {
    /// Normalized reward per cell; zero outside the sources.
    pub map: OccupancyGrid<T>,
    pub sources: Vec<CellIndex>,
    /// Mean visibility per source before normalization. Empty when there
    /// were no targets.
    pub raw: Vec<T>,
}

impl<T: Real> PerspectiveCostMap<T> {
    pub fn zeros(geometry: GridGeometry<T>) -> Self {
        Self {
            map: OccupancyGrid::filled(geometry, T::zero()).expect("zero is a valid occupancy"),
            sources: Vec::new(),
            raw: Vec::new(),
        }
    }

    /// Reward at a world point; zero off the map.
    #[inline]
    pub fn value_at(&self, p: Vec2<T>) -> T {
        self.map.value_at(p).unwrap_or_else(T::zero)
    }

    /// True when the map was built without any targets.
    pub fn has_no_targets(&self) -> bool {
        self.raw.is_empty()
    }
}

/// A ray walk over linear indices, paused between steps.
struct Walk<T> {
    idx: i64,
    err: i64,
    major: i64,
    minor: i64,
    two_major: i64,
    two_minor: i64,
    remaining: usize,
    p: T,
}

impl<T: Real> Walk<T> {
    #[inline]
    fn new(src: CellIndex, trg: CellIndex, width: usize) -> Self {
        let it = Interior::new(src, trg);
        let w = width as i64;
        Self {
            idx: it.row * w + it.col,
            err: it.err,
            major: it.step_major.0 + it.step_major.1 * w,
            minor: it.step_minor.0 + it.step_minor.1 * w,
            two_major: it.two_major,
            two_minor: it.two_minor,
            remaining: it.remaining,
            p: T::one(),
        }
    }

    #[inline(always)]
    fn step(&mut self, free: &[T]) {
        if self.err >= 0 {
            self.idx += self.minor;
            self.err -= self.two_major;
        }
        self.err += self.two_minor;
        self.idx += self.major;
        self.p = self.p * free[self.idx as usize];
    }

    #[inline]
    fn finish(mut self, free: &[T], done: usize) -> T {
        for _ in done..self.remaining {
            if self.p == T::zero() {
                break;
            }
            self.step(free);
        }
        self.p
    }
}

/// Sum of visibilities over a block in target order. Rays are walked four at
/// a time so their multiply chains overlap; each product keeps its own
/// order, and `1 - occ >= 0` makes a zero product final, so the result is
/// bitwise that of [`cast_ray_free`] summed one by one.
fn block_sum<T: Real>(src: CellIndex, block: &[CellIndex], free: &[T], width: usize) -> T {
    let mut acc = T::zero();
    let mut quads = block.chunks_exact(4);
    for q in &mut quads {
        let mut w = [
            Walk::new(src, q[0], width),
            Walk::new(src, q[1], width),
            Walk::new(src, q[2], width),
            Walk::new(src, q[3], width),
        ];
        let common = w.iter().map(|w| w.remaining).min().unwrap_or(0);
        let mut done = 0;
        while done < common {
            for r in w.iter_mut() {
                r.step(free);
            }
            done += 1;
            if w.iter().all(|r| r.p == T::zero()) {
                break;
            }
        }
        for r in w {
            acc = acc + r.finish(free, done);
        }
    }
    for &t in quads.remainder() {
        acc = acc + cast_ray_free(src, t, free, width);
    }
    acc
}

/// Pairwise combination in a fixed tree shape.
fn pairwise<T: Real>(xs: &[T]) -> T {
    match xs.len() {
        0 => T::zero(),
        1 => xs[0],
        n => {
            let mid = n / 2;
            pairwise(&xs[..mid]) + pairwise(&xs[mid..])
        }
    }
}

fn source_sum<T: Real>(src: CellIndex, targets: &[CellIndex], free: &[T], width: usize) -> T {
    let blocks: Vec<T> = targets
        .chunks(TARGET_BLOCK)
        .map(|b| block_sum(src, b, free, width))
        .collect();
    pairwise(&blocks)
}

/// Builds the APCM on the current rayon pool.
///
/// Every (source, target block) pair is an independent task; the reduction
/// order is fixed, so the result is bitwise identical for any number of
/// workers. No sources gives an all-zero map, and so do no targets.
pub fn update_apcm<T: Real>(
    sources: &ObservationSet<T>,
    targets: &ReachableOccludedSet<T>,
    occ: &OccupancyGrid<T>,
) -> PerspectiveCostMap<T> {
    let geometry = *occ.geometry();
    if sources.is_empty() || targets.is_empty() {
        let mut out = PerspectiveCostMap::zeros(geometry);
        out.sources = sources.cells.clone();
        return out;
    }
    let width = occ.width();
    let free: Vec<T> = occ.values().iter().map(|&v| T::one() - v).collect();
    let target_cells: Vec<CellIndex> = targets.cells().collect();
    let blocks: Vec<&[CellIndex]> = target_cells.chunks(TARGET_BLOCK).collect();
    let per_source = blocks.len();

    let block_sums: Vec<T> = (0..sources.len() * per_source)
        .into_par_iter()
        .with_min_len(4)
        .map(|task| {
            let src = sources.cells[task / per_source];
            block_sum(src, blocks[task % per_source], &free, width)
        })
        .collect();

    let count = T::from_count(target_cells.len());
    let raw: Vec<T> = block_sums
        .chunks(per_source)
        .map(|sums| pairwise(sums) / count)
        .collect();
    let scaled = normalize(&raw);
    let mut map = OccupancyGrid::filled(geometry, T::zero()).expect("zero is a valid occupancy");
    for (&cell, &v) in sources.cells.iter().zip(&scaled) {
        map.set(cell, v);
    }
    PerspectiveCostMap {
        map,
        sources: sources.cells.clone(),
        raw,
    }
}

/// [`update_apcm`] on a dedicated pool of `workers` threads.
pub fn update_apcm_with_workers<T: Real>(
    sources: &ObservationSet<T>,
    targets: &ReachableOccludedSet<T>,
    occ: &OccupancyGrid<T>,
    workers: usize,
) -> Result<PerspectiveCostMap<T>, rayon::ThreadPoolBuildError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()?;
    Ok(pool.install(|| update_apcm(sources, targets, occ)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reachability::{AgentClass, ReachedCell};

    fn c(col: usize, row: usize) -> CellIndex {
        CellIndex::new(col, row)
    }

    fn geom(n: usize) -> GridGeometry<f64> {
        GridGeometry::new(n, n, 0.4, Vec2::new(0.0, 0.0)).unwrap()
    }

    fn targets(g: GridGeometry<f64>, cells: &[CellIndex]) -> ReachableOccludedSet<f64> {
        let mut entries: Vec<ReachedCell> = cells
            .iter()
            .map(|&cell| ReachedCell {
                cell,
                step: 1,
                agent: 0,
            })
            .collect();
        entries.sort_by_key(|e| e.cell);
        ReachableOccludedSet {
            geometry: g,
            agents: vec![AgentClass::pedestrian()],
            entries,
        }
    }

    #[test]
    fn linear_walk_matches_cast_ray_bitwise() {
        let n = 23;
        let values: Vec<f64> = (0..n * n)
            .map(|i| ((i * 37 % 101) as f64 / 100.0).min(0.97))
            .collect();
        let occ = OccupancyGrid::from_values(geom(n), values).unwrap();
        let free: Vec<f64> = occ.values().iter().map(|v| 1.0 - v).collect();
        for s in (0..n * n).step_by(7) {
            for t in (0..n * n).step_by(5) {
                let (a, b) = (c(s % n, s / n), c(t % n, t / n));
                assert_eq!(
                    cast_ray_free(a, b, &free, n).to_bits(),
                    cast_ray(a, b, &occ).to_bits()
                );
            }
        }
    }

    #[test]
    fn interleaved_block_sum_matches_sequential_bitwise() {
        let n = 31;
        // Some fully occupied cells so products hit zero part way.
        let values: Vec<f64> = (0..n * n)
            .map(|i| match i * 53 % 17 {
                0 => 1.0,
                k => (k as f64 / 19.0).min(0.9),
            })
            .collect();
        let occ = OccupancyGrid::from_values(geom(n), values).unwrap();
        let free: Vec<f64> = occ.values().iter().map(|v| 1.0 - v).collect();
        let all: Vec<CellIndex> = (0..n * n).step_by(3).map(|t| c(t % n, t / n)).collect();
        for len in [0, 1, 3, 4, 5, 9, 64, all.len()] {
            let block = &all[..len];
            for s in [0, 17, 480, 960] {
                let src = c(s % n, s / n);
                let mut want = 0.0f64;
                for &t in block {
                    want += cast_ray(src, t, &occ);
                }
                assert_eq!(
                    block_sum(src, block, &free, n).to_bits(),
                    want.to_bits(),
                    "len {len}"
                );
            }
        }
    }

    #[test]
    fn trace_examples() {
        assert_eq!(trace_cells(c(0, 0), c(3, 0)), vec![c(1, 0), c(2, 0)]);
        assert_eq!(trace_cells(c(0, 0), c(2, 2)), vec![c(1, 1)]);
        assert_eq!(trace_cells(c(4, 4), c(4, 4)), vec![]);
        assert_eq!(trace_cells(c(4, 4), c(5, 5)), vec![]);
        assert_eq!(trace_cells(c(3, 0), c(0, 0)), vec![c(2, 0), c(1, 0)]);
        // half-way tie at i = 1 steps the minor axis
        assert_eq!(trace_cells(c(0, 0), c(2, 1)), vec![c(1, 1)]);
        assert_eq!(
            trace_cells(c(0, 0), c(5, 2)),
            vec![c(1, 0), c(2, 1), c(3, 1), c(4, 2)]
        );
    }

    #[test]
    fn cast_ray_products() {
        let g = geom(8);
        let mut occ = OccupancyGrid::filled(g, 0.0).unwrap();
        assert_eq!(cast_ray(c(0, 0), c(5, 0), &occ), 1.0);
        occ.set(c(2, 0), 0.5);
        occ.set(c(3, 0), 0.5);
        assert_eq!(cast_ray(c(0, 0), c(5, 0), &occ), 0.25);
        occ.set(c(4, 0), 1.0);
        assert_eq!(cast_ray(c(0, 0), c(5, 0), &occ), 0.0);
        // endpoints never block
        occ.set(c(5, 0), 1.0);
        assert_eq!(cast_ray(c(4, 0), c(5, 0), &occ), 1.0);
    }

    #[test]
    fn perspective_examples() {
        let g = geom(10);
        let mut occ = OccupancyGrid::filled(g, 0.0).unwrap();
        let t = targets(g, &[c(9, 0), c(9, 2), c(0, 9), c(2, 9)]);
        assert_eq!(perspective_value(c(0, 0), &t, &occ), Some(1.0));
        occ.set(c(0, 5), 1.0);
        occ.set(c(1, 5), 1.0);
        assert_eq!(perspective_value(c(0, 0), &t, &occ), Some(0.5));
        assert_eq!(perspective_value(c(0, 0), &targets(g, &[]), &occ), None);
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize(&[0.7, 0.7, 0.7]), vec![0.0, 0.0, 0.0]);
        let scaled = normalize(&[0.2f64, 0.6, 1.0]);
        assert_eq!((scaled[0], scaled[2]), (0.0, 1.0));
        assert!((scaled[1] - 0.5).abs() < 1e-15);
        assert_eq!(normalize(&[0.4]), vec![0.0]);
        assert!(normalize::<f64>(&[]).is_empty());
    }

    #[test]
    fn observation_band_width() {
        let g = geom(50);
        // nominal along a cell boundary, y = 8.0
        let nominal = Polyline::new(vec![Vec2::new(0.0, 8.0), Vec2::new(20.0, 8.0)]);
        let set = select_observation_cells(&g, &nominal, 3.2, Vec2::new(2.0, 8.0), 25, 0.1, 4.0);
        let rows: std::collections::BTreeSet<usize> = set.cells.iter().map(|c| c.row).collect();
        assert_eq!(rows.len(), 8);
        assert_eq!(*rows.first().unwrap(), 16);
        assert_eq!(*rows.last().unwrap(), 23);
        let mut sorted = set.cells.clone();
        sorted.sort();
        assert_eq!(sorted, set.cells);
        for cell in &set.cells {
            let x = g.cell_center(*cell).x;
            assert!((2.0..=12.0).contains(&x));
        }
        let none = select_observation_cells(&g, &nominal, 3.2, Vec2::new(2.0, 8.0), 0, 0.1, 4.0);
        assert!(none.is_empty());
    }

    #[test]
    fn degenerate_nominal_is_a_disc() {
        let g = geom(20);
        let p = Vec2::new(4.0, 4.0);
        let set = select_observation_cells(&g, &Polyline::new(vec![p]), 2.0, p, 10, 0.1, 10.0);
        assert!(!set.is_empty());
        for cell in g_cells(&g) {
            let inside = g.cell_center(cell).distance(p) <= 1.0;
            assert_eq!(set.cells.contains(&cell), inside);
        }
    }

    fn g_cells(g: &GridGeometry<f64>) -> impl Iterator<Item = CellIndex> + '_ {
        (0..g.len()).map(|i| g.cell_at(i))
    }

    #[test]
    fn apcm_free_space_and_single_source() {
        let g = geom(12);
        let occ = OccupancyGrid::filled(g, 0.0).unwrap();
        let t = targets(g, &[c(11, 11), c(0, 11), c(6, 6)]);
        let sources = ObservationSet {
            cells: vec![c(1, 1), c(2, 1), c(5, 3)],
            lane_half_width: 1.0,
            horizon_reach: 10.0,
        };
        let apcm = update_apcm(&sources, &t, &occ);
        assert!(apcm.raw.iter().all(|&v| v == 1.0));
        assert!(apcm.map.values().iter().all(|&v| v == 0.0));

        let mut occ = occ;
        occ.set(c(3, 3), 1.0);
        let one = ObservationSet {
            cells: vec![c(1, 1)],
            lane_half_width: 1.0,
            horizon_reach: 10.0,
        };
        let apcm = update_apcm(&one, &t, &occ);
        assert!(apcm.map.values().iter().all(|&v| v == 0.0));
        assert_eq!(apcm.raw.len(), 1);

        let empty = update_apcm(&sources, &targets(g, &[]), &occ);
        assert!(empty.has_no_targets());
        assert!(empty.map.values().iter().all(|&v| v == 0.0));
    }
}
