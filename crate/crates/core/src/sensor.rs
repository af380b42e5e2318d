//! Noise-free range sensor producing an occupancy grid from a static
//! obstacle raster.

use std::ops::ControlFlow;

use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::grid::{GridGeometry, OccupancyGrid};
use crate::scalar::Real;

/// Planar pose: position and heading.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Pose<T> {
    pub x: T,
    pub y: T,
    pub theta: T,
}

impl<T: Real> Pose<T> {
    pub fn new(x: T, y: T, theta: T) -> Self {
        Self { x, y, theta }
    }

    pub fn position(&self) -> Vec2<T> {
        Vec2::new(self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorModel<T> {
    pub max_range: T,
    pub angular_resolution: T,
    pub pose: Pose<T>,
}

impl<T: Real> SensorModel<T> {
    pub fn new(max_range: T, angular_resolution: T, pose: Pose<T>) -> Result<Self> {
        if !(max_range > T::zero()) {
            return Err(Error::InvalidParameter(format!(
                "sensor max_range must be positive, got {max_range}"
            )));
        }
        if !(angular_resolution > T::zero()) {
            return Err(Error::InvalidParameter(format!(
                "sensor angular_resolution must be positive, got {angular_resolution}"
            )));
        }
        Ok(Self {
            max_range,
            angular_resolution,
            pose,
        })
    }
}

/// Walks every cell a ray touches, in cell units (cell (i, j) spans
/// `[i, i+1) x [j, j+1)`). At exact or near corner crossings both side cells
/// are visited. `visit` receives the cell and the ray parameter at entry.
pub(crate) fn supercover<T: Real>(
    start: Vec2<T>,
    dir: Vec2<T>,
    t_max: T,
    mut visit: impl FnMut(i64, i64, T) -> ControlFlow<()>,
) {
    let mut cx = start.x.floor().to_i64().unwrap_or(0);
    let mut cy = start.y.floor().to_i64().unwrap_or(0);
    if visit(cx, cy, T::zero()).is_break() {
        return;
    }
    let step_x: i64 = if dir.x > T::zero() { 1 } else { -1 };
    let step_y: i64 = if dir.y > T::zero() { 1 } else { -1 };
    let inf = T::infinity();
    let (mut next_x, delta_x) = if dir.x == T::zero() {
        (inf, inf)
    } else {
        let boundary = if dir.x > T::zero() {
            T::from(cx + 1).unwrap()
        } else {
            T::from(cx).unwrap()
        };
        ((boundary - start.x) / dir.x, T::one() / dir.x.abs())
    };
    let (mut next_y, delta_y) = if dir.y == T::zero() {
        (inf, inf)
    } else {
        let boundary = if dir.y > T::zero() {
            T::from(cy + 1).unwrap()
        } else {
            T::from(cy).unwrap()
        };
        ((boundary - start.y) / dir.y, T::one() / dir.y.abs())
    };
    let tie = T::lit(1e-9);
    loop {
        let t = next_x.min(next_y);
        if t > t_max {
            return;
        }
        if (next_x - next_y).abs() <= tie {
            // Corner crossing: touch both neighbours before the diagonal.
            if visit(cx + step_x, cy, t).is_break() || visit(cx, cy + step_y, t).is_break() {
                return;
            }
            cx += step_x;
            cy += step_y;
            next_x = next_x + delta_x;
            next_y = next_y + delta_y;
        } else if next_x < next_y {
            cx += step_x;
            next_x = next_x + delta_x;
        } else {
            cy += step_y;
            next_y = next_y + delta_y;
        }
        if visit(cx, cy, t).is_break() {
            return;
        }
    }
}

/// Returns true when the segment from `from` to `to` touches no occupied
/// raster cell other than the cells containing its endpoints' origin.
/// Cells outside the raster count as free.
pub fn line_of_sight<T: Real>(raster: &OccupancyGrid<T>, from: Vec2<T>, to: Vec2<T>) -> bool {
    let g = raster.geometry();
    let inv = T::one() / g.resolution;
    let a = (from - g.origin) * inv;
    let b = (to - g.origin) * inv;
    let d = b - a;
    let len = d.norm();
    if len == T::zero() {
        return true;
    }
    let dir = d * (T::one() / len);
    let half = T::lit(0.5);
    let first = (a.x.floor().to_i64(), a.y.floor().to_i64());
    let mut clear = true;
    supercover(a, dir, len, |cx, cy, _| {
        if Some(cx) == first.0 && Some(cy) == first.1 {
            return ControlFlow::Continue(());
        }
        if cx >= 0 && cy >= 0 && (cx as usize) < g.width && (cy as usize) < g.height {
            let v = raster.values()[cy as usize * g.width + cx as usize];
            if v >= half {
                clear = false;
                return ControlFlow::Break(());
            }
        }
        ControlFlow::Continue(())
    });
    clear
}

/// Simulates one noise-free scan.
///
/// `raster` holds the static environment (HD geometry plus obstacles) with
/// values >= 0.5 treated as occupied; `window` is the output grid, which must
/// share the raster's resolution and cell alignment. For each bearing the
/// cells swept before the first hit are free (0) provided their centers are in
/// range and in line of sight, the hit cell is occupied (1), everything else
/// stays unknown (0.5). A sensor inside an obstacle sees only its own cell.
pub fn sensor_scan<T: Real>(
    raster: &OccupancyGrid<T>,
    sensor: &SensorModel<T>,
    window: GridGeometry<T>,
) -> Result<OccupancyGrid<T>> {
    let rg = *raster.geometry();
    if (rg.resolution - window.resolution).abs() > T::epsilon() * T::lit(16.0) * rg.resolution {
        return Err(Error::ResolutionMismatch(
            window.resolution.as_f64(),
            rg.resolution.as_f64(),
        ));
    }
    let origin = sensor.pose.position();
    let own = window.world_to_cell(origin)?;
    let mut out = OccupancyGrid::unknown(window);
    let half = T::lit(0.5);
    let occupied_at = |p: Vec2<T>| raster.value_at(p).is_some_and(|v| v >= half);

    if occupied_at(window.cell_center(own)) || occupied_at(origin) {
        out.set(own, T::one());
        return Ok(out);
    }

    const FREE_CANDIDATE: u8 = 1;
    const HIT: u8 = 2;
    let mut marks = vec![0u8; window.len()];
    let inv = T::one() / window.resolution;
    let start = (origin - window.origin) * inv;
    let range_cells = sensor.max_range * inv;
    let two_pi = T::lit(std::f64::consts::TAU);
    let bearings = (two_pi / sensor.angular_resolution)
        .ceil()
        .to_usize()
        .unwrap_or(1)
        .max(1);
    let (ww, wh) = (window.width as i64, window.height as i64);

    for k in 0..bearings {
        let angle = sensor.pose.theta + sensor.angular_resolution * T::from_count(k);
        let dir = Vec2::from_angle(angle);
        supercover(start, dir, range_cells, |cx, cy, _| {
            if cx < 0 || cy < 0 || cx >= ww || cy >= wh {
                return ControlFlow::Break(());
            }
            let cell = crate::grid::CellIndex::new(cx as usize, cy as usize);
            let center = window.cell_center(cell);
            let idx = window.linear(cell);
            if occupied_at(center) {
                marks[idx] = HIT;
                return ControlFlow::Break(());
            }
            if marks[idx] == 0 {
                marks[idx] = FREE_CANDIDATE;
            }
            ControlFlow::Continue(())
        });
    }

    for (idx, mark) in marks.iter().enumerate() {
        let cell = window.cell_at(idx);
        match *mark {
            HIT => out.set(cell, T::one()),
            FREE_CANDIDATE => {
                let center = window.cell_center(cell);
                if center.distance(origin) <= sensor.max_range
                    && line_of_sight(raster, origin, center)
                {
                    out.set(cell, T::zero());
                }
            }
            _ => {}
        }
    }
    out.set(own, T::zero());
    Ok(out)
}
