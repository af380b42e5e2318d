//! Scenario families, parked-car placement and the clutter measure.
//!
//! Coordinates: the nominal path starts at the origin heading +x. Lateral
//! offsets are positive to the left of travel. Traffic keeps right, so the AV
//! lane is `[-d/2, d/2]` and the road center lies to its left.

use std::fmt;
use std::str::FromStr;

use apcm_core::controller::Obstacle;
use apcm_core::f64::{ConvexPolygon, GridGeometry, OccupancyGrid, Polyline, Vec2};
use apcm_core::geometry::point_segment_distance;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ScenarioFamily {
    /// Multilane straight road.
    Straight,
    /// Open four-way intersection with corner buildings.
    Intersection,
    /// Slow two-lane left curve.
    Curve,
    /// Two-lane road beside a park, parking on both sides.
    Park,
    /// One parked car next to the AV lane.
    SingleCar,
}

impl ScenarioFamily {
    pub const ALL: [ScenarioFamily; 5] = [
        ScenarioFamily::Straight,
        ScenarioFamily::Intersection,
        ScenarioFamily::Curve,
        ScenarioFamily::Park,
        ScenarioFamily::SingleCar,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioFamily::Straight => "straight",
            ScenarioFamily::Intersection => "intersection",
            ScenarioFamily::Curve => "curve",
            ScenarioFamily::Park => "park",
            ScenarioFamily::SingleCar => "single_car",
        }
    }
}

impl fmt::Display for ScenarioFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioFamily {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, SimError> {
        Self::ALL
            .into_iter()
            .find(|f| f.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| {
                SimError::Config(format!(
                    "unknown scenario `{s}` (valid: {})",
                    Self::ALL.map(|f| f.name()).join(", ")
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ClutterLabel {
    Sparse,
    Dense,
}

impl ClutterLabel {
    pub fn name(self) -> &'static str {
        match self {
            ClutterLabel::Sparse => "sparse",
            ClutterLabel::Dense => "dense",
        }
    }
}

impl fmt::Display for ClutterLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub family: ScenarioFamily,
    pub seed: u64,
    pub target_speed: f64,
    /// Lane width `d`.
    pub lane_width: f64,
    pub path_length: f64,
    /// Multiplier on the family's parked-car counts.
    pub density: f64,
    pub repetitions: u32,
    pub car_length: f64,
    pub car_width: f64,
    /// Clutter means at or below this are labelled dense.
    pub dense_threshold: f64,
    /// Grid resolution of the HD raster.
    pub resolution: f64,
}

impl ScenarioSpec {
    pub fn new(family: ScenarioFamily, target_speed: f64, seed: u64) -> Self {
        Self {
            family,
            seed,
            target_speed,
            lane_width: 4.0,
            path_length: 120.0,
            density: 1.0,
            repetitions: 10,
            car_length: 4.8,
            car_width: 2.0,
            dense_threshold: 9.0,
            resolution: 0.4,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let positive = [
            ("lane_width", self.lane_width),
            ("path_length", self.path_length),
            ("car_length", self.car_length),
            ("car_width", self.car_width),
            ("resolution", self.resolution),
            ("target_speed", self.target_speed),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SimError::Config(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if !(self.density >= 0.0 && self.density.is_finite()) {
            return Err(SimError::Config(format!(
                "density must be non-negative, got {}",
                self.density
            )));
        }
        Ok(())
    }
}

/// Everything the simulator needs about one generated world.
#[derive(Debug, Clone, PartialEq)]
pub struct Environment {
    pub family: ScenarioFamily,
    pub nominal: Polyline,
    pub lane_width: f64,
    /// `+1` when the road center is to the left of travel, `-1` when mirrored.
    pub center_side: f64,
    /// Static structure only (buildings); parked cars are not in it.
    pub hd: OccupancyGrid,
    /// HD structure plus parked cars; what the sensor sees.
    pub world: OccupancyGrid,
    pub cars: Vec<ConvexPolygon>,
    pub walls: Vec<ConvexPolygon>,
    pub dense_threshold: f64,
}

impl Environment {
    pub fn obstacles(&self) -> Vec<Obstacle<f64>> {
        self.cars.iter().cloned().map(Obstacle::new).collect()
    }

    /// Signed displacement from the nominal path, negative toward the road center.
    pub fn displacement(&self, lateral: f64) -> f64 {
        -self.center_side * lateral
    }

    /// Distance from `p` to the nearest parked car.
    pub fn nearest_car(&self, p: Vec2) -> f64 {
        self.cars
            .iter()
            .map(|c| c.distance(p))
            .fold(f64::INFINITY, f64::min)
    }

    /// Distance to the nearest car not yet passed, where a car is passed
    /// once all its corners lie behind `p` along `heading`.
    pub fn nearest_unpassed_car(&self, p: Vec2, heading: Vec2) -> f64 {
        self.cars
            .iter()
            .filter(|c| c.vertices().iter().any(|&v| (v - p).dot(heading) >= 0.0))
            .map(|c| c.distance(p))
            .fold(f64::INFINITY, f64::min)
    }

    /// Reflection about the x axis (the nominal axis of straight families).
    /// Grids are symmetric about y = 0, so cells map onto cells.
    pub fn mirrored(&self) -> Environment {
        let flip = |v: Vec2| Vec2::new(v.x, -v.y);
        let flip_poly = |p: &ConvexPolygon| {
            p.map_vertices(flip)
                .expect("reflection keeps polygons valid")
        };
        let flip_grid = |g: &OccupancyGrid| {
            let geo = *g.geometry();
            let (w, h) = (geo.width, geo.height);
            let mut values = Vec::with_capacity(w * h);
            for row in 0..h {
                let src = h - 1 - row;
                values.extend_from_slice(&g.values()[src * w..(src + 1) * w]);
            }
            OccupancyGrid::from_values(geo, values).expect("same shape")
        };
        Environment {
            family: self.family,
            nominal: Polyline::new(self.nominal.points().iter().map(|&p| flip(p)).collect()),
            lane_width: self.lane_width,
            center_side: -self.center_side,
            hd: flip_grid(&self.hd),
            world: flip_grid(&self.world),
            cars: self.cars.iter().map(flip_poly).collect(),
            walls: self.walls.iter().map(flip_poly).collect(),
            dense_threshold: self.dense_threshold,
        }
    }
}

/// A band of parking positions in path coordinates.
#[derive(Debug, Clone, Copy)]
struct Row {
    arc: (f64, f64),
    lateral: (f64, f64),
    /// Added to the path heading.
    heading: f64,
    count: (u32, u32),
}

/// Axis-aligned wall in path coordinates `(arc range, lateral range)`.
type Block = ((f64, f64), (f64, f64));

struct Layout {
    nominal: Polyline,
    rows: Vec<Row>,
    walls: Vec<Block>,
}

fn straight_path(length: f64) -> Polyline {
    Polyline::new(vec![Vec2::new(0.0, 0.0), Vec2::new(length, 0.0)])
}

/// Straight lead-in, a left arc of radius 45 m, straight lead-out.
fn curve_path(length: f64) -> Polyline {
    let lead = 0.2 * length;
    let arc_len = length - 2.0 * lead;
    let radius = 45.0;
    let mut pts = vec![Vec2::new(0.0, 0.0)];
    let steps = arc_len.ceil() as usize;
    let center = Vec2::new(lead, radius);
    for i in 0..=steps {
        let phi = arc_len / radius * i as f64 / steps as f64;
        pts.push(center + Vec2::new(phi.sin(), -phi.cos()) * radius);
    }
    let phi = arc_len / radius;
    let end = *pts.last().unwrap();
    pts.push(end + Vec2::from_angle(phi) * lead);
    Polyline::new(pts)
}

/// Curb parking row: car inner edge `gap` beyond the line at `edge`.
fn curb(edge: f64, gap: f64, car_width: f64, side: f64) -> (f64, f64) {
    let c = edge + gap + car_width / 2.0;
    (side * c, side * (c + 0.2))
}

fn sorted(r: (f64, f64)) -> (f64, f64) {
    (r.0.min(r.1), r.0.max(r.1))
}

fn layout(spec: &ScenarioSpec) -> Layout {
    let d = spec.lane_width;
    let len = spec.path_length;
    let w = spec.car_width;
    let span = (0.125 * len, 0.96 * len);
    // AV lane [-d/2, d/2]; a two-lane road has its far curb at 3d/2.
    let right_curb = sorted(curb(d / 2.0, 0.2, w, -1.0));
    let left_curb_two_lane = sorted(curb(1.5 * d, 0.2, w, 1.0));
    match spec.family {
        ScenarioFamily::SingleCar => Layout {
            nominal: straight_path(len),
            rows: vec![Row {
                arc: (len / 2.0, len / 2.0),
                lateral: (right_curb.1, right_curb.1),
                heading: 0.0,
                count: (1, 1),
            }],
            walls: Vec::new(),
        },
        ScenarioFamily::Park | ScenarioFamily::Curve => Layout {
            nominal: if spec.family == ScenarioFamily::Park {
                straight_path(len)
            } else {
                curve_path(len)
            },
            rows: vec![
                Row {
                    arc: span,
                    lateral: right_curb,
                    heading: 0.0,
                    count: (8, 10),
                },
                Row {
                    arc: span,
                    lateral: left_curb_two_lane,
                    heading: 0.0,
                    count: (5, 7),
                },
                Row {
                    arc: span,
                    lateral: (10.5, 13.0),
                    heading: 0.0,
                    count: (3, 4),
                },
            ],
            walls: Vec::new(),
        },
        ScenarioFamily::Straight => {
            // Two lanes each way: right lane [-3d/2, -d/2], opposing [d/2, 5d/2].
            Layout {
                nominal: straight_path(len),
                rows: vec![
                    Row {
                        arc: span,
                        lateral: sorted(curb(1.5 * d, 0.2, w, -1.0)),
                        heading: 0.0,
                        count: (3, 5),
                    },
                    Row {
                        arc: span,
                        lateral: sorted(curb(2.5 * d, 0.2, w, 1.0)),
                        heading: 0.0,
                        count: (3, 5),
                    },
                    Row {
                        arc: span,
                        lateral: (-20.0, -14.0),
                        heading: 0.0,
                        count: (2, 4),
                    },
                    Row {
                        arc: span,
                        lateral: (16.0, 24.0),
                        heading: 0.0,
                        count: (2, 4),
                    },
                ],
                walls: Vec::new(),
            }
        }
        ScenarioFamily::Intersection => {
            let mid = len / 2.0;
            // Crossing road two lanes wide, centred at `mid`.
            let cross_lo = mid - d;
            let cross_hi = mid + d;
            let perp = std::f64::consts::FRAC_PI_2;
            Layout {
                nominal: straight_path(len),
                rows: vec![
                    Row {
                        arc: (cross_lo - 0.3 - w / 2.0, cross_lo - 0.2 - w / 2.0),
                        lateral: (9.0, 30.0),
                        heading: perp,
                        count: (2, 3),
                    },
                    Row {
                        arc: (cross_hi + 0.2 + w / 2.0, cross_hi + 0.3 + w / 2.0),
                        lateral: (-30.0, -8.0),
                        heading: perp,
                        count: (2, 3),
                    },
                    Row {
                        arc: (span.0, cross_lo - 8.0),
                        lateral: left_curb_two_lane,
                        heading: 0.0,
                        count: (1, 2),
                    },
                    Row {
                        arc: (cross_hi + 8.0, span.1),
                        lateral: (-13.0, -10.0),
                        heading: 0.0,
                        count: (1, 2),
                    },
                ],
                walls: vec![
                    ((mid - 40.0, cross_lo - 6.0), (-40.0, -10.0)),
                    ((cross_hi + 6.0, mid + 50.0), (-40.0, -16.0)),
                    ((mid - 40.0, cross_lo - 6.0), (14.0, 40.0)),
                    ((cross_hi + 6.0, mid + 50.0), (14.0, 40.0)),
                ],
            }
        }
    }
}

fn segments_cross(a: Vec2, b: Vec2, c: Vec2, d: Vec2) -> bool {
    let o = |p: Vec2, q: Vec2, r: Vec2| (q - p).cross(r - p);
    let (d1, d2) = (o(c, d, a), o(c, d, b));
    let (d3, d4) = (o(a, b, c), o(a, b, d));
    ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
}

fn edges(p: &ConvexPolygon) -> impl Iterator<Item = (Vec2, Vec2)> + '_ {
    let v = p.vertices();
    (0..v.len()).map(move |i| (v[i], v[(i + 1) % v.len()]))
}

/// Distance between two convex polygons, zero when they overlap.
pub fn polygon_distance(a: &ConvexPolygon, b: &ConvexPolygon) -> f64 {
    if a.vertices().iter().any(|&v| b.contains(v)) || b.vertices().iter().any(|&v| a.contains(v)) {
        return 0.0;
    }
    let mut best = f64::INFINITY;
    for (p, q) in edges(a) {
        for (r, s) in edges(b) {
            if segments_cross(p, q, r, s) {
                return 0.0;
            }
            best = best
                .min(point_segment_distance(p, r, s))
                .min(point_segment_distance(q, r, s))
                .min(point_segment_distance(r, p, q))
                .min(point_segment_distance(s, p, q));
        }
    }
    best
}

/// Minimum distance from a polygon to a polyline, zero when they touch.
pub fn polygon_polyline_distance(poly: &ConvexPolygon, line: &Polyline) -> f64 {
    let pts = line.points();
    if pts.iter().any(|&p| poly.contains(p)) {
        return 0.0;
    }
    let mut best = f64::INFINITY;
    for w in pts.windows(2) {
        for (r, s) in edges(poly) {
            if segments_cross(w[0], w[1], r, s) {
                return 0.0;
            }
            best = best
                .min(point_segment_distance(r, w[0], w[1]))
                .min(point_segment_distance(w[0], r, s))
                .min(point_segment_distance(w[1], r, s));
        }
    }
    if pts.len() == 1 {
        best = poly.distance(pts[0]);
    }
    best
}

fn block_polygon(nominal: &Polyline, block: Block) -> ConvexPolygon {
    // Walls are only used on straight paths along +x.
    let ((s0, s1), (l0, l1)) = block;
    let a = nominal.point_at(s0);
    let b = nominal.point_at(s1);
    ConvexPolygon::new(vec![
        Vec2::new(a.x, a.y + l0),
        Vec2::new(b.x, b.y + l0),
        Vec2::new(b.x, b.y + l1),
        Vec2::new(a.x, a.y + l1),
    ])
    .expect("wall blocks have positive area")
}

/// Margin around the path bounding box, enough for an 80 m sensor window.
const MAP_MARGIN: f64 = 45.0;
/// Attempts per car before giving up.
const PLACEMENT_TRIES: usize = 400;
/// Minimum spacing between parked cars.
const CAR_GAP: f64 = 0.6;

fn map_geometry(nominal: &Polyline, res: f64) -> Result<GridGeometry, SimError> {
    let (mut lo, mut hi) = (
        Vec2::new(f64::INFINITY, f64::INFINITY),
        Vec2::new(-f64::INFINITY, -f64::INFINITY),
    );
    for p in nominal.points() {
        lo = Vec2::new(lo.x.min(p.x), lo.y.min(p.y));
        hi = Vec2::new(hi.x.max(p.x), hi.y.max(p.y));
    }
    // Symmetric in y so mirroring maps cells onto cells.
    let half_y = lo.y.abs().max(hi.y.abs()) + MAP_MARGIN;
    let rows = 2 * (half_y / res).ceil() as usize;
    let x0 = ((lo.x - MAP_MARGIN) / res).floor() * res;
    let cols = ((hi.x + MAP_MARGIN - x0) / res).ceil() as usize;
    let origin = Vec2::new(x0, -(rows as f64) * res / 2.0);
    GridGeometry::new(cols, rows, res, origin).map_err(SimError::Core)
}

/// Builds the world for `spec`. Deterministic in the seed.
pub fn generate_scenario(spec: &ScenarioSpec) -> Result<Environment, SimError> {
    spec.validate()?;
    let layout = layout(spec);
    let geometry = map_geometry(&layout.nominal, spec.resolution)?;
    let walls: Vec<ConvexPolygon> = layout
        .walls
        .iter()
        .map(|&b| block_polygon(&layout.nominal, b))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut cars: Vec<ConvexPolygon> = Vec::new();
    let lane_clearance = spec.lane_width / 2.0;
    for (ri, row) in layout.rows.iter().enumerate() {
        let base = rng.random_range(row.count.0..=row.count.1);
        let count = (f64::from(base) * spec.density).round() as usize;
        for k in 0..count {
            let mut placed = false;
            for _ in 0..PLACEMENT_TRIES {
                let s = if row.arc.0 < row.arc.1 {
                    rng.random_range(row.arc.0..=row.arc.1)
                } else {
                    row.arc.0
                };
                let l = if row.lateral.0 < row.lateral.1 {
                    rng.random_range(row.lateral.0..=row.lateral.1)
                } else {
                    row.lateral.0
                };
                let heading = layout.nominal.heading_at(s);
                let center = layout.nominal.point_at(s) + Vec2::from_angle(heading).perp() * l;
                let car = ConvexPolygon::rectangle(
                    center,
                    heading + row.heading,
                    spec.car_length,
                    spec.car_width,
                );
                let clear_of_lane =
                    polygon_polyline_distance(&car, &layout.nominal) > lane_clearance;
                let clear_of_cars = cars.iter().all(|o| polygon_distance(&car, o) >= CAR_GAP);
                let clear_of_walls = walls.iter().all(|o| polygon_distance(&car, o) >= CAR_GAP);
                let (clo, chi) = car.bounds();
                let inside = geometry.cell_range(clo, chi).is_some()
                    && clo.x > geometry.origin.x
                    && clo.y > geometry.origin.y
                    && chi.x < geometry.extent_max().x
                    && chi.y < geometry.extent_max().y;
                if clear_of_lane && clear_of_cars && clear_of_walls && inside {
                    cars.push(car);
                    placed = true;
                    break;
                }
            }
            if !placed {
                return Err(SimError::InfeasibleDensity {
                    family: spec.family.name(),
                    row: ri,
                    placed: k,
                    requested: count,
                });
            }
        }
    }

    let mut hd = OccupancyGrid::filled(geometry, 0.0).map_err(SimError::Core)?;
    for w in &walls {
        hd.rasterize_polygon(w, 1.0);
    }
    let mut world = hd.clone();
    for c in &cars {
        world.rasterize_polygon(c, 1.0);
    }
    Ok(Environment {
        family: spec.family,
        nominal: layout.nominal,
        lane_width: spec.lane_width,
        center_side: 1.0,
        hd,
        world,
        cars,
        walls,
        dense_threshold: spec.dense_threshold,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClutterMeasure {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub count: usize,
    pub label: ClutterLabel,
}

/// Mean and spread of per-car minimum distances to `nominal`.
/// `None` when there are no cars.
pub fn clutter_of(
    cars: &[ConvexPolygon],
    nominal: &Polyline,
    dense_threshold: f64,
) -> Option<ClutterMeasure> {
    if cars.is_empty() {
        return None;
    }
    let d: Vec<f64> = cars
        .iter()
        .map(|c| polygon_polyline_distance(c, nominal))
        .collect();
    let (mean, std) = crate::metrics::mean_std(&d);
    Some(ClutterMeasure {
        mean,
        std,
        count: d.len(),
        label: if mean <= dense_threshold {
            ClutterLabel::Dense
        } else {
            ClutterLabel::Sparse
        },
    })
}

pub fn clutter_measure(env: &Environment) -> Option<ClutterMeasure> {
    clutter_of(&env.cars, &env.nominal, env.dense_threshold)
}

/// Label used to group runs; environments without cars count as sparse.
pub fn clutter_label(env: &Environment) -> ClutterLabel {
    clutter_measure(env).map_or(ClutterLabel::Sparse, |c| c.label)
}
