//! Occupancy grid data model, coordinate transforms, map merging and
//! uncertainty thresholding.
//!
//! Cells are half-open squares `[k * res, (k + 1) * res)` measured from the
//! grid origin, so a point on a shared edge belongs to the higher-index cell.
//! Values are occupancy probabilities in `[0, 1]` with 0.5 meaning unknown.

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::geometry::{ConvexPolygon, Vec2};
use crate::scalar::Real;

/// Occupancy value of a cell nobody has observed.
pub const UNKNOWN: f64 = 0.5;

/// Column/row address of a grid cell. Orders row-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CellIndex {
    pub col: usize,
    pub row: usize,
}

impl CellIndex {
    #[inline]
    pub const fn new(col: usize, row: usize) -> Self {
        Self { col, row }
    }

    /// Chebyshev distance in cells.
    pub fn chebyshev(self, other: Self) -> usize {
        self.col
            .abs_diff(other.col)
            .max(self.row.abs_diff(other.row))
    }
}

impl Ord for CellIndex {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.row, self.col).cmp(&(other.row, other.col))
    }
}

impl PartialOrd for CellIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Shape and placement of a grid: everything but the values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridGeometry<T> {
    pub width: usize,
    pub height: usize,
    pub resolution: T,
    /// World coordinates of the outer corner of cell (0, 0).
    pub origin: Vec2<T>,
}

impl<T: Real> GridGeometry<T> {
    pub fn new(width: usize, height: usize, resolution: T, origin: Vec2<T>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidGrid(format!(
                "dimensions must be positive, got {width}x{height}"
            )));
        }
        if !(resolution > T::zero()) || !resolution.is_finite() {
            return Err(Error::InvalidGrid(format!(
                "resolution must be positive, got {resolution}"
            )));
        }
        if !origin.x.is_finite() || !origin.y.is_finite() {
            return Err(Error::InvalidGrid("origin must be finite".into()));
        }
        Ok(Self {
            width,
            height,
            resolution,
            origin,
        })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn contains_cell(&self, cell: CellIndex) -> bool {
        cell.col < self.width && cell.row < self.height
    }

    #[inline]
    pub fn linear(&self, cell: CellIndex) -> usize {
        cell.row * self.width + cell.col
    }

    #[inline]
    pub fn cell_at(&self, linear: usize) -> CellIndex {
        CellIndex::new(linear % self.width, linear / self.width)
    }

    pub fn extent_max(&self) -> Vec2<T> {
        Vec2::new(
            self.origin.x + self.resolution * T::from_count(self.width),
            self.origin.y + self.resolution * T::from_count(self.height),
        )
    }

    #[inline]
    pub fn cell_center(&self, cell: CellIndex) -> Vec2<T> {
        let half = T::lit(0.5);
        Vec2::new(
            self.origin.x + (T::from_count(cell.col) + half) * self.resolution,
            self.origin.y + (T::from_count(cell.row) + half) * self.resolution,
        )
    }

    /// Fractional cell coordinate along one axis; values within a few ulps
    /// below an integer snap up so shared edges go to the higher index.
    #[inline]
    fn axis_coordinate(&self, value: T, origin: T) -> T {
        let q = (value - origin) / self.resolution;
        let tol = T::epsilon() * T::lit(64.0) * q.abs().max(T::one());
        (q + tol).floor()
    }

    /// Cell containing `point`, or `OutOfRange`.
    pub fn world_to_cell(&self, point: Vec2<T>) -> Result<CellIndex> {
        self.try_world_to_cell(point).ok_or(Error::OutOfRange {
            x: point.x.as_f64(),
            y: point.y.as_f64(),
        })
    }

    /// Cell containing `point`, or `None` when outside the extent.
    #[inline]
    pub fn try_world_to_cell(&self, point: Vec2<T>) -> Option<CellIndex> {
        let c = self.axis_coordinate(point.x, self.origin.x);
        let r = self.axis_coordinate(point.y, self.origin.y);
        if !(c >= T::zero() && r >= T::zero()) {
            return None;
        }
        let col = c.to_usize()?;
        let row = r.to_usize()?;
        (col < self.width && row < self.height).then_some(CellIndex::new(col, row))
    }

    /// Signed (col, row) coordinate of a world point, unbounded.
    pub fn signed_cell(&self, point: Vec2<T>) -> (i64, i64) {
        let c = self.axis_coordinate(point.x, self.origin.x);
        let r = self.axis_coordinate(point.y, self.origin.y);
        (
            c.to_i64().unwrap_or(i64::MIN / 2),
            r.to_i64().unwrap_or(i64::MIN / 2),
        )
    }

    fn same_resolution(&self, other: &Self) -> bool {
        let tol = T::epsilon() * T::lit(16.0) * self.resolution;
        (self.resolution - other.resolution).abs() <= tol
    }

    /// Integer cell offset of `inner`'s origin within `self`, if aligned and contained.
    pub fn offset_of(&self, inner: &Self) -> Option<(usize, usize)> {
        let dc = (inner.origin.x - self.origin.x) / self.resolution;
        let dr = (inner.origin.y - self.origin.y) / self.resolution;
        let tol = T::lit(1e-6);
        let (rc, rr) = (dc.round(), dr.round());
        if (dc - rc).abs() > tol || (dr - rr).abs() > tol || rc < T::zero() || rr < T::zero() {
            return None;
        }
        let (c0, r0) = (rc.to_usize()?, rr.to_usize()?);
        (c0 + inner.width <= self.width && r0 + inner.height <= self.height).then_some((c0, r0))
    }

    /// Range of cells overlapping the axis-aligned box `[lo, hi]`, clipped to the grid.
    pub fn cell_range(&self, lo: Vec2<T>, hi: Vec2<T>) -> Option<(CellIndex, CellIndex)> {
        let (c0, r0) = self.signed_cell(lo);
        let (c1, r1) = self.signed_cell(hi);
        let w = self.width as i64 - 1;
        let h = self.height as i64 - 1;
        if c1 < 0 || r1 < 0 || c0 > w || r0 > h {
            return None;
        }
        Some((
            CellIndex::new(c0.clamp(0, w) as usize, r0.clamp(0, h) as usize),
            CellIndex::new(c1.clamp(0, w) as usize, r1.clamp(0, h) as usize),
        ))
    }
}

/// N x M probabilistic occupancy grid. Also used for HD rasters, merged maps,
/// APCMs and membership masks, which share the shape but not the semantics.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid<T> {
    geometry: GridGeometry<T>,
    values: Vec<T>,
}

impl<T: Real> OccupancyGrid<T> {
    /// Grid filled with `fill`, which must lie in `[0, 1]`.
    pub fn filled(geometry: GridGeometry<T>, fill: T) -> Result<Self> {
        check_value(fill)?;
        Ok(Self {
            values: vec![fill; geometry.len()],
            geometry,
        })
    }

    /// Grid with every cell unknown.
    pub fn unknown(geometry: GridGeometry<T>) -> Self {
        Self {
            values: vec![T::lit(UNKNOWN); geometry.len()],
            geometry,
        }
    }

    pub fn from_values(geometry: GridGeometry<T>, values: Vec<T>) -> Result<Self> {
        if values.len() != geometry.len() {
            return Err(Error::InvalidGrid(format!(
                "expected {} values, got {}",
                geometry.len(),
                values.len()
            )));
        }
        values.iter().try_for_each(|&v| check_value(v))?;
        Ok(Self { geometry, values })
    }

    #[inline]
    pub fn geometry(&self) -> &GridGeometry<T> {
        &self.geometry
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.geometry.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.geometry.height
    }

    #[inline]
    pub fn resolution(&self) -> T {
        self.geometry.resolution
    }

    #[inline]
    pub fn values(&self) -> &[T] {
        &self.values
    }

    #[inline]
    pub fn get(&self, cell: CellIndex) -> T {
        self.values[self.geometry.linear(cell)]
    }

    /// Value at `cell`, or `None` when out of bounds.
    #[inline]
    pub fn try_get(&self, cell: CellIndex) -> Option<T> {
        self.geometry
            .contains_cell(cell)
            .then(|| self.values[self.geometry.linear(cell)])
    }

    /// Sets a cell, clamping the value into `[0, 1]`.
    pub fn set(&mut self, cell: CellIndex, value: T) {
        let i = self.geometry.linear(cell);
        self.values[i] = value.max(T::zero()).min(T::one());
    }

    /// Value of the cell containing `point`, if inside.
    #[inline]
    pub fn value_at(&self, point: Vec2<T>) -> Option<T> {
        self.geometry
            .try_world_to_cell(point)
            .map(|c| self.values[self.geometry.linear(c)])
    }

    pub fn world_to_cell(&self, point: Vec2<T>) -> Result<CellIndex> {
        self.geometry.world_to_cell(point)
    }

    pub fn cell_center(&self, cell: CellIndex) -> Vec2<T> {
        self.geometry.cell_center(cell)
    }

    pub fn cells(&self) -> impl Iterator<Item = CellIndex> + '_ {
        (0..self.geometry.len()).map(|i| self.geometry.cell_at(i))
    }

    /// Marks every cell whose square touches `polygon` with `value`.
    pub fn rasterize_polygon(&mut self, polygon: &ConvexPolygon<T>, value: T) {
        let (lo, hi) = polygon.bounds();
        let Some((a, b)) = self.geometry.cell_range(lo, hi) else {
            return;
        };
        let res = self.geometry.resolution;
        for row in a.row..=b.row {
            for col in a.col..=b.col {
                let cell = CellIndex::new(col, row);
                let c = self.geometry.cell_center(cell);
                let half = res * T::lit(0.5);
                if polygon_touches_square(polygon, c, half) {
                    self.set(cell, value);
                }
            }
        }
    }

    /// Writes the plain-text dump: a header line followed by one line per row,
    /// values with six decimals.
    pub fn write_dump<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let g = &self.geometry;
        writeln!(
            out,
            "APCMGRID v1 {} {} {:.6} {:.6} {:.6}",
            g.width,
            g.height,
            g.resolution.as_f64(),
            g.origin.x.as_f64(),
            g.origin.y.as_f64()
        )?;
        let mut line = String::with_capacity(g.width * 9);
        for row in 0..g.height {
            line.clear();
            for col in 0..g.width {
                if col > 0 {
                    line.push(' ');
                }
                let v = self.values[row * g.width + col].as_f64();
                let _ = write!(line, "{v:.6}");
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    pub fn to_dump_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_dump(&mut buf)
            .expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("dump is ASCII")
    }

    /// Parses the format produced by [`OccupancyGrid::write_dump`].
    pub fn read_dump<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty input".into()))?
            .map_err(|e| Error::Parse(e.to_string()))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 7 || fields[0] != "APCMGRID" || fields[1] != "v1" {
            return Err(Error::Parse(format!("bad header: {header}")));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| Error::Parse(format!("bad number {s:?}")))
        };
        let width: usize = fields[2]
            .parse()
            .map_err(|_| Error::Parse("bad width".into()))?;
        let height: usize = fields[3]
            .parse()
            .map_err(|_| Error::Parse("bad height".into()))?;
        let geometry = GridGeometry::new(
            width,
            height,
            T::lit(num(fields[4])?),
            Vec2::new(T::lit(num(fields[5])?), T::lit(num(fields[6])?)),
        )?;
        let mut values = Vec::with_capacity(geometry.len());
        for line in lines {
            let line = line.map_err(|e| Error::Parse(e.to_string()))?;
            for tok in line.split_whitespace() {
                values.push(T::lit(num(tok)?));
            }
        }
        Self::from_values(geometry, values)
    }
}

fn check_value<T: Real>(v: T) -> Result<()> {
    if v >= T::zero() && v <= T::one() {
        Ok(())
    } else {
        Err(Error::InvalidGrid(format!("value {v} outside [0, 1]")))
    }
}

/// Separating-axis test between a convex polygon and an axis-aligned square.
fn polygon_touches_square<T: Real>(polygon: &ConvexPolygon<T>, center: Vec2<T>, half: T) -> bool {
    let (lo, hi) = polygon.bounds();
    if lo.x > center.x + half
        || hi.x < center.x - half
        || lo.y > center.y + half
        || hi.y < center.y - half
    {
        return false;
    }
    let verts = polygon.vertices();
    let n = verts.len();
    let corners = [
        Vec2::new(center.x - half, center.y - half),
        Vec2::new(center.x + half, center.y - half),
        Vec2::new(center.x + half, center.y + half),
        Vec2::new(center.x - half, center.y + half),
    ];
    for i in 0..n {
        let a = verts[i];
        let edge = verts[(i + 1) % n] - a;
        // Polygon interior is to the left of each edge; the square is separated
        // when all of its corners lie strictly to the right.
        if corners.iter().all(|&c| edge.cross(c - a) < T::zero()) {
            return false;
        }
    }
    true
}

/// Overlays `ogm` on `hd`: inside the OGM footprint the OGM value wins,
/// elsewhere the HD value is kept. Output has the HD extent.
pub fn merge_maps<T: Real>(
    ogm: &OccupancyGrid<T>,
    hd: &OccupancyGrid<T>,
) -> Result<OccupancyGrid<T>> {
    let (og, hg) = (ogm.geometry(), hd.geometry());
    if !hg.same_resolution(og) {
        return Err(Error::ResolutionMismatch(
            og.resolution.as_f64(),
            hg.resolution.as_f64(),
        ));
    }
    let (c0, r0) = hg.offset_of(og).ok_or(Error::NotContained)?;
    let mut merged = hd.clone();
    for row in 0..og.height {
        let src = &ogm.values[row * og.width..(row + 1) * og.width];
        let start = (r0 + row) * hg.width + c0;
        merged.values[start..start + og.width].copy_from_slice(src);
    }
    Ok(merged)
}

/// Cells of a grid whose occupancy is neither confidently free nor occupied.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertainSet<T> {
    /// Geometry of the grid that was thresholded; identifies the source grid.
    pub geometry: GridGeometry<T>,
    /// Unique cells in row-major order.
    pub cells: Vec<CellIndex>,
}

impl<T: Real> UncertainSet<T> {
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

/// Returns exactly the cells with `lo <= value <= hi`, in row-major order.
pub fn threshold_uncertain<T: Real>(
    grid: &OccupancyGrid<T>,
    band: (T, T),
) -> Result<UncertainSet<T>> {
    let (lo, hi) = band;
    if !(lo >= T::zero() && hi <= T::one() && lo <= hi) {
        return Err(Error::InvalidBand {
            lo: lo.as_f64(),
            hi: hi.as_f64(),
        });
    }
    let g = *grid.geometry();
    let cells = grid
        .values
        .iter()
        .enumerate()
        .filter(|(_, &v)| v >= lo && v <= hi)
        .map(|(i, _)| g.cell_at(i))
        .collect();
    Ok(UncertainSet { geometry: g, cells })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn geom(w: usize, h: usize) -> GridGeometry<f64> {
        GridGeometry::new(w, h, 0.4, Vec2::new(0.0, 0.0)).unwrap()
    }

    #[test]
    fn world_to_cell_examples() {
        let g = geom(10, 10);
        assert_eq!(
            g.world_to_cell(Vec2::new(0.2, 0.2)).unwrap(),
            CellIndex::new(0, 0)
        );
        assert_eq!(
            g.world_to_cell(Vec2::new(0.8, 1.2)).unwrap(),
            CellIndex::new(2, 3)
        );
        assert!(matches!(
            g.world_to_cell(Vec2::new(-0.1, 0.0)),
            Err(Error::OutOfRange { .. })
        ));
        // the far edge is exclusive
        assert!(g.world_to_cell(Vec2::new(4.0, 1.0)).is_err());
    }

    #[test]
    fn shared_edges_go_to_higher_index() {
        let g = geom(10, 10);
        assert_eq!(
            g.world_to_cell(Vec2::new(0.4, 0.4)).unwrap(),
            CellIndex::new(1, 1)
        );
        assert_eq!(
            g.world_to_cell(Vec2::new(2.0, 0.0)).unwrap(),
            CellIndex::new(5, 0)
        );
    }

    #[test]
    fn invalid_geometry_rejected() {
        assert!(GridGeometry::new(0, 3, 0.4, Vec2::new(0.0, 0.0)).is_err());
        assert!(GridGeometry::new(3, 3, 0.0, Vec2::new(0.0, 0.0)).is_err());
        assert!(OccupancyGrid::filled(geom(2, 2), 1.5).is_err());
        assert!(OccupancyGrid::from_values(geom(2, 2), vec![0.0; 3]).is_err());
    }

    #[test]
    fn merge_examples() {
        let hd_geom = geom(10, 10);
        let mut hd = OccupancyGrid::filled(hd_geom, 0.0).unwrap();
        hd.set(CellIndex::new(9, 9), 1.0);
        let og = GridGeometry::new(4, 4, 0.4, Vec2::new(0.8, 0.8)).unwrap();
        let mut ogm = OccupancyGrid::unknown(og);
        ogm.set(CellIndex::new(1, 1), 0.9);
        let merged = merge_maps(&ogm, &hd).unwrap();
        assert_eq!(merged.geometry(), hd.geometry());
        assert_eq!(merged.get(CellIndex::new(2, 2)), 0.5);
        assert_eq!(merged.get(CellIndex::new(3, 3)), 0.9);
        assert_eq!(merged.get(CellIndex::new(0, 0)), 0.0);
        assert_eq!(merged.get(CellIndex::new(9, 9)), 1.0);
        assert_eq!(merge_maps(&ogm, &merged).unwrap(), merged);
    }

    #[test]
    fn merge_errors() {
        let hd = OccupancyGrid::filled(geom(10, 10), 0.0).unwrap();
        let coarse = GridGeometry::new(2, 2, 0.8, Vec2::new(0.0, 0.0)).unwrap();
        assert!(matches!(
            merge_maps(&OccupancyGrid::unknown(coarse), &hd),
            Err(Error::ResolutionMismatch(..))
        ));
        let outside = GridGeometry::new(4, 4, 0.4, Vec2::new(3.2, 0.0)).unwrap();
        assert_eq!(
            merge_maps(&OccupancyGrid::unknown(outside), &hd),
            Err(Error::NotContained)
        );
        let misaligned = GridGeometry::new(2, 2, 0.4, Vec2::new(0.1, 0.0)).unwrap();
        assert_eq!(
            merge_maps(&OccupancyGrid::unknown(misaligned), &hd),
            Err(Error::NotContained)
        );
    }

    #[test]
    fn threshold_examples() {
        let g = geom(3, 1);
        let zeros = OccupancyGrid::filled(g, 0.0).unwrap();
        assert!(threshold_uncertain(&zeros, (0.3, 0.7)).unwrap().is_empty());
        let unknown = OccupancyGrid::unknown(g);
        assert_eq!(threshold_uncertain(&unknown, (0.3, 0.7)).unwrap().len(), 3);
        let mixed = OccupancyGrid::from_values(g, vec![0.1, 0.5, 0.95]).unwrap();
        assert_eq!(
            threshold_uncertain(&mixed, (0.3, 0.7)).unwrap().cells,
            vec![CellIndex::new(1, 0)]
        );
        assert_eq!(threshold_uncertain(&mixed, (0.0, 1.0)).unwrap().len(), 3);
        assert!(matches!(
            threshold_uncertain(&mixed, (0.7, 0.3)),
            Err(Error::InvalidBand { .. })
        ));
        assert!(threshold_uncertain(&mixed, (-0.1, 0.3)).is_err());
    }

    #[test]
    fn rasterize_is_conservative() {
        let mut g = OccupancyGrid::filled(geom(20, 20), 0.0).unwrap();
        let rect = ConvexPolygon::rectangle(Vec2::new(4.0, 4.0), 0.3, 4.8, 2.0);
        g.rasterize_polygon(&rect, 1.0);
        // every sample point inside the polygon lands in an occupied cell
        for i in 0..60 {
            for j in 0..60 {
                let p = Vec2::new(1.0 + i as f64 * 0.1, 1.0 + j as f64 * 0.1);
                if rect.contains(p) {
                    assert_eq!(g.value_at(p), Some(1.0), "{p:?}");
                }
            }
        }
    }

    #[test]
    fn dump_round_trip() {
        let g = GridGeometry::new(3, 2, 0.4, Vec2::new(-1.2, 2.0)).unwrap();
        let grid =
            OccupancyGrid::from_values(g, vec![0.0, 0.25, 0.5, 0.75, 1.0, 0.123456]).unwrap();
        let text = grid.to_dump_string();
        assert!(text.starts_with("APCMGRID v1 3 2 0.400000 -1.200000 2.000000\n"));
        assert_eq!(text.lines().nth(1).unwrap(), "0.000000 0.250000 0.500000");
        let back: OccupancyGrid<f64> = OccupancyGrid::read_dump(text.as_bytes()).unwrap();
        assert_eq!(back, grid);
        assert!(OccupancyGrid::<f64>::read_dump("APCMGRID v2 1 1 1 0 0\n0".as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn world_cell_round_trip(col in 0usize..50, row in 0usize..50, fx in 0.0f64..0.999, fy in 0.0f64..0.999) {
            let g = geom(50, 50);
            let p = Vec2::new((col as f64 + fx) * 0.4, (row as f64 + fy) * 0.4);
            let cell = g.world_to_cell(p).unwrap();
            prop_assert_eq!(cell, CellIndex::new(col, row));
            let c = g.cell_center(cell);
            prop_assert_eq!(g.world_to_cell(c).unwrap(), cell);
        }

        #[test]
        fn merge_is_idempotent_and_bounded(seed in 0u64..1000) {
            let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
            let mut next = || { state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407); (state >> 11) as f64 / (1u64 << 53) as f64 };
            let hd = OccupancyGrid::from_values(geom(8, 8), (0..64).map(|_| next().round()).collect()).unwrap();
            let og = GridGeometry::new(3, 4, 0.4, Vec2::new(0.8, 1.2)).unwrap();
            let ogm = OccupancyGrid::from_values(og, (0..12).map(|_| next()).collect()).unwrap();
            let once = merge_maps(&ogm, &hd).unwrap();
            let twice = merge_maps(&ogm, &once).unwrap();
            prop_assert_eq!(&once, &twice);
            prop_assert!(once.values().iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }
}
